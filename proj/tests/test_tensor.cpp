#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sst/optim.hpp"
#include "sst/tensor.hpp"

using sst::Shape;
using sst::Tensor;
using T = Tensor<double>;

TEST_CASE("matmul identity and hand oracle") {
    T eye({2, 2}, {1, 0, 0, 1});
    T b({2, 2}, {5, 6, 7, 8});
    auto r = sst::matmul(eye, b);
    CHECK(r.data() == b.data());

    T a({2, 2}, {1, 2, 3, 4});
    auto c = sst::matmul(a, b);
    CHECK(c.data() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul rejects nonconforming shapes") {
    T a({2, 3}, std::vector<double>(6, 1.0));
    T b({2, 3}, std::vector<double>(6, 1.0));
    CHECK_THROWS_AS(sst::matmul(a, b), sst::DimensionError);
}

TEST_CASE("matmul batched with rank-2 broadcast") {
    T a({2, 2, 2}, {1, 0, 0, 1, 2, 0, 0, 2});
    T w({2, 2}, {1, 2, 3, 4});
    auto r = sst::matmul(a, w);
    CHECK(r.shape() == Shape{2, 2, 2});
    CHECK(r.data() == std::vector<double>{1, 2, 3, 4, 2, 4, 6, 8});
}

TEST_CASE("softmax uniform, closed form, shift invariance") {
    T c({4}, {3.0, 3.0, 3.0, 3.0});
    auto u = sst::softmax(c, 0);
    for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    T x({2}, {0.0, std::log(3.0)});
    auto s = sst::softmax(x, 0);
    CHECK(s.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.data()[1] == doctest::Approx(0.75).epsilon(1e-12));

    T big({2}, {1000.0, 1000.0 + std::log(3.0)});
    auto sb = sst::softmax(big, 0);
    CHECK(std::abs(sb.data()[0] - s.data()[0]) < 1e-12);
    CHECK(std::abs(sb.data()[1] - s.data()[1]) < 1e-12);
}

TEST_CASE("softmax slices sum to one along any axis") {
    sst::Rng rng(7);
    std::vector<double> d(2 * 3 * 4);
    for (auto& v : d) v = rng.uniform(-5, 5);
    T x({2, 3, 4}, d);
    for (int axis = 0; axis < 3; ++axis) {
        auto y = sst::softmax(x, axis);
        // Sum along `axis` must be 1 in every slice.
        const auto& s = y.shape();
        std::int64_t outer = 1, inner = 1;
        for (int i = 0; i < axis; ++i) outer *= s[i];
        for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t in = 0; in < inner; ++in) {
                double total = 0;
                for (std::int64_t k = 0; k < s[axis]; ++k)
                    total += y.data()[o * s[axis] * inner + k * inner + in];
                CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            }
    }
    CHECK_THROWS_AS(sst::softmax(x, 3), sst::ParameterError);
}

TEST_CASE("layer_norm examples") {
    T gamma({3}, {1, 1, 1});
    T beta({3}, {0, 0, 0});

    T constant({2, 3}, {5, 5, 5, -2, -2, -2});
    auto z = sst::layer_norm(constant, gamma, beta, 1e-5);
    for (double v : z.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

    T g2({2}, {1, 1});
    T b2({2}, {0, 0});
    T x({1, 2}, {1, 3});
    auto y = sst::layer_norm(x, g2, b2, 1e-14);
    CHECK(y.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y.data()[1] == doctest::Approx(1.0).epsilon(1e-6));

    T g0({2}, {0, 0});
    T b7({2}, {7, 7});
    auto w = sst::layer_norm(x, g0, b7, 1e-5);
    for (double v : w.data()) CHECK(v == 7.0);

    CHECK_THROWS_AS(sst::layer_norm(x, g2, b2, 0.0), sst::ParameterError);
}

TEST_CASE("layer_norm normalizes mean and variance pre-affine") {
    sst::Rng rng(11);
    const int rows = 10, c = 16;
    std::vector<double> d(rows * c);
    for (auto& v : d) v = rng.uniform(-3, 3);
    T x({rows, c}, d);
    T gamma = T::full({c}, 1.0);
    T beta = T::zeros({c});
    auto y = sst::layer_norm(x, gamma, beta, 1e-5);
    for (int r = 0; r < rows; ++r) {
        double mu = 0, var = 0;
        for (int i = 0; i < c; ++i) mu += y.data()[r * c + i];
        mu /= c;
        for (int i = 0; i < c; ++i) {
            const double dv = y.data()[r * c + i] - mu;
            var += dv * dv;
        }
        var /= c;
        CHECK(std::abs(mu) < 1e-10);
        CHECK(std::abs(var - 1.0) < 1e-4);  // eps=1e-5 shifts variance slightly
    }
}

TEST_CASE("conv2d_3x3 delta kernel is the identity") {
    sst::Rng rng(3);
    std::vector<double> d(5 * 5);
    for (auto& v : d) v = rng.uniform(-1, 1);
    T x({5, 5, 1}, d);
    std::vector<double> k(9, 0.0);
    k[4] = 1.0;  // center tap
    T w({3, 3, 1, 1}, k);
    T b({1}, {0.0});
    auto y = sst::conv2d_3x3(x, w, b);
    CHECK(y.data() == x.data());

    T x1({1, 1, 1}, {0.37});
    auto y1 = sst::conv2d_3x3(x1, w, b);
    CHECK(y1.data()[0] == 0.37);
}

TEST_CASE("conv2d_3x3 all-ones summation oracle") {
    T x({5, 5, 1}, std::vector<double>(25, 1.0));
    T w({3, 3, 1, 1}, std::vector<double>(9, 1.0));
    T b({1}, {0.0});
    auto y = sst::conv2d_3x3(x, w, b);
    CHECK(y.data()[2 * 5 + 2] == 9.0);  // interior
    CHECK(y.data()[0 * 5 + 2] == 6.0);  // edge
    CHECK(y.data()[0] == 4.0);          // corner
}

TEST_CASE("conv2d_3x3 channel mismatch") {
    T x({2, 2, 3}, std::vector<double>(12, 0.0));
    T w({3, 3, 2, 1}, std::vector<double>(18, 0.0));
    T b({1}, {0.0});
    CHECK_THROWS_AS(sst::conv2d_3x3(x, w, b), sst::DimensionError);
}

TEST_CASE("gelu values") {
    T z({1}, {0.0});
    CHECK(sst::gelu(z).data()[0] == 0.0);

    T big({1}, {20.0});
    CHECK(sst::gelu(big).data()[0] ==
          doctest::Approx(20.0).epsilon(1e-6));

    // Independent normal-CDF oracle: x * Phi(x) via erf.
    const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
    T one({1}, {1.0});
    CHECK(std::abs(sst::gelu(one).data()[0] - 1.0 * phi1) < 1e-3);
}

TEST_CASE("backward basics") {
    T x({3}, {1, 2, 3}, true);
    auto loss = sst::sum_all(x);
    sst::backward(loss);
    CHECK(x.grad() == std::vector<double>{1, 1, 1});

    x.zero_grad();
    auto loss2 = sst::sum_all(sst::mul(x, x));
    sst::backward(loss2);
    CHECK(x.grad() == std::vector<double>{2, 4, 6});

    // Disconnected leaf keeps a zero gradient.
    T other({2}, {1, 1}, true);
    CHECK(other.grad() == std::vector<double>{0, 0});

    T vec({2}, {1, 2}, true);
    CHECK_THROWS_AS(sst::backward(vec), sst::ContractError);
}

TEST_CASE("backward accumulates and is linear over graph sums") {
    T x({2}, {1.0, 2.0}, true);
    auto l1 = sst::sum_all(sst::mul(x, x));
    auto l2 = sst::sum_all(x);

    // Separate passes, accumulated.
    sst::backward(l1);
    sst::backward(l2);
    auto accumulated = x.grad();

    // One pass over the summed graph.
    x.zero_grad();
    sst::backward(sst::add(l1, l2));
    const auto& joint = x.grad();
    for (int i = 0; i < 2; ++i)
        CHECK(std::abs(accumulated[i] - joint[i]) < 1e-12);
}

TEST_CASE("grad_check oracle behaviors") {
    T x({4}, {0.5, -1.2, 2.0, 0.1});
    std::function<T(const T&)> sq = [](const T& t) {
        return sst::sum_all(sst::mul(t, t));
    };
    CHECK(sst::grad_check(sq, x, 1e-5) < 1e-8);

    std::function<T(const T&)> sm = [](const T& t) {
        return sst::sum_all(sst::mul(sst::softmax(t, 0), t));
    };
    CHECK(sst::grad_check(sm, x, 1e-5) < 1e-6);

    std::function<T(const T&)> constant = [](const T& t) {
        return sst::scale(sst::sum_all(sst::sub(t, t)), 0.0);
    };
    CHECK(sst::grad_check(constant, x, 1e-5) == 0.0);
}

TEST_CASE("grad_check covers every primitive below 1e-4") {
    sst::Rng rng(17);
    std::vector<double> d(2 * 3 * 4);
    for (auto& v : d) v = rng.uniform(-1, 1);
    T x({2, 3, 4}, d);

    std::vector<double> wv(4 * 4);
    for (auto& v : wv) v = rng.uniform(-1, 1);
    T w({4, 4}, wv);

    std::function<T(const T&)> mm = [&](const T& t) {
        return sst::sum_all(sst::mul(sst::matmul(t, w), sst::matmul(t, w)));
    };
    CHECK(sst::grad_check(mm, x, 1e-5) < 1e-4);

    std::function<T(const T&)> sm = [](const T& t) {
        return sst::sum_all(sst::mul(sst::softmax(t, 2), t));
    };
    CHECK(sst::grad_check(sm, x, 1e-5) < 1e-4);

    T gamma({4}, {1.1, 0.9, 1.3, 0.7});
    T beta({4}, {0.1, -0.2, 0.3, 0.0});
    std::function<T(const T&)> ln = [&](const T& t) {
        auto y = sst::layer_norm(t, gamma, beta, 1e-5);
        return sst::sum_all(sst::mul(y, y));
    };
    CHECK(sst::grad_check(ln, x, 1e-5) < 1e-4);

    std::function<T(const T&)> ge = [](const T& t) {
        return sst::sum_all(sst::mul(sst::gelu(t), t));
    };
    CHECK(sst::grad_check(ge, x, 1e-5) < 1e-4);

    std::vector<double> cw(3 * 3 * 4 * 2);
    for (auto& v : cw) v = rng.uniform(-0.5, 0.5);
    T convw({3, 3, 4, 2}, cw);
    T convb({2}, {0.1, -0.3});
    std::function<T(const T&)> cv = [&](const T& t) {
        auto y = sst::conv2d_3x3(t, convw, convb);
        return sst::sum_all(sst::mul(y, y));
    };
    CHECK(sst::grad_check(cv, x, 1e-5) < 1e-4);

    // Weight-side conv gradient.
    std::function<T(const T&)> cw_fn = [&](const T& kw) {
        auto y = sst::conv2d_3x3(x, kw, convb);
        return sst::sum_all(sst::mul(y, y));
    };
    CHECK(sst::grad_check(cw_fn, convw, 1e-5) < 1e-4);
}

TEST_CASE("gather and permute round trip") {
    sst::Rng rng(23);
    std::vector<double> d(24);
    for (auto& v : d) v = rng.uniform(-1, 1);
    T x({2, 3, 4}, d);
    auto p = sst::permute(x, {2, 0, 1});
    CHECK(p.shape() == Shape{4, 2, 3});
    auto back = sst::permute(p, {1, 2, 0});
    CHECK(back.data() == x.data());

    std::function<T(const T&)> f = [](const T& t) {
        auto y = sst::permute(t, {1, 0, 2});
        return sst::sum_all(sst::mul(y, y));
    };
    CHECK(sst::grad_check(f, x, 1e-5) < 1e-4);
}

TEST_CASE("broadcast add with gradient reduction") {
    T a({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    T b({3}, {10, 20, 30}, true);
    auto s = sst::add(a, b);
    CHECK(s.data() == std::vector<double>{11, 22, 33, 14, 25, 36});
    sst::backward(sst::sum_all(s));
    CHECK(b.grad() == std::vector<double>{2, 2, 2});
    CHECK(a.grad() == std::vector<double>(6, 1.0));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    std::vector<T> params{T({2}, {1.0, -2.0}, true)};
    auto st = sst::AdamState<double>::init(params, 1e-3);
    params[0].zero_grad();
    sst::adam_step(params, st);
    CHECK(params[0].data() == std::vector<double>{1.0, -2.0});
    CHECK(st.step_count == 1);
}

TEST_CASE("adam constant-gradient displacement approaches the learning rate") {
    // Scalar simulation: with constant g, bias-corrected m/sqrt(v) -> 1, so
    // per-step displacement -> lr.
    std::vector<T> params{T({1}, {0.0}, true)};
    auto st = sst::AdamState<double>::init(params, 1e-3);
    double prev = 0.0, disp = 0.0;
    for (int i = 0; i < 200; ++i) {
        params[0].zero_grad();
        auto loss = sst::scale(sst::sum_all(params[0]), 3.7);  // grad = 3.7
        sst::backward(loss);
        sst::adam_step(params, st);
        disp = std::abs(params[0].data()[0] - prev);
        prev = params[0].data()[0];
    }
    CHECK(disp == doctest::Approx(1e-3).epsilon(1e-3));
}

TEST_CASE("adam is deterministic") {
    auto run = [] {
        std::vector<T> params{T({3}, {0.3, -0.1, 0.7}, true)};
        auto st = sst::AdamState<double>::init(params, 1e-2);
        for (int i = 0; i < 50; ++i) {
            params[0].zero_grad();
            sst::backward(sst::sum_all(sst::mul(params[0], params[0])));
            sst::adam_step(params, st);
        }
        return params[0].data();
    };
    CHECK(run() == run());
}

TEST_CASE("adam rejects mismatched state") {
    std::vector<T> params{T({2}, {0, 0}, true), T({2}, {0, 0}, true)};
    auto st = sst::AdamState<double>::init(params, 1e-3);
    params.pop_back();
    CHECK_THROWS_AS(sst::adam_step(params, st), sst::DimensionError);
}

TEST_CASE("xavier_init determinism, variance and bounds") {
    auto a = sst::xavier_init<double>({100, 100}, 42);
    auto b = sst::xavier_init<double>({100, 100}, 42);
    CHECK(a.data() == b.data());
    auto c = sst::xavier_init<double>({100, 100}, 43);
    CHECK(a.data() != c.data());

    const double target = 2.0 / (100 + 100);
    double var = 0;
    for (double v : a.data()) var += v * v;
    var /= a.size();
    CHECK(var > 0.8 * target);
    CHECK(var < 1.2 * target);

    const double bound = std::sqrt(6.0 / 200.0);
    auto big = sst::xavier_init<double>({1000, 1000}, 7);  // 10^6 draws
    const double big_bound = std::sqrt(6.0 / 2000.0);
    std::int64_t violations = 0;
    for (double v : big.data())
        if (std::abs(v) > big_bound) ++violations;
    CHECK(violations == 0);
    (void)bound;

    CHECK_THROWS_AS(sst::xavier_init<double>({5}, 1), sst::ParameterError);
}
