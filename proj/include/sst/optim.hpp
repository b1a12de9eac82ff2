#pragma once

// Seeded RNG plumbing, Xavier initialization and the Adam update.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sst/errors.hpp"
#include "sst/tensor.hpp"

namespace sst {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

// One named, seedable, splittable generator. Every stochastic API takes an
// explicit seed and builds its own Rng, so concurrent callers never share
// state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    // Independent child stream; does not disturb this generator's sequence.
    Rng split(std::uint64_t stream) const {
        return Rng(derive_seed(seed_, stream));
    }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }

    double normal(double mean, double stddev) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
        return d(engine_);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

// Xavier/Glorot uniform on +-sqrt(6/(fan_in+fan_out)). Rank-2 weights use
// (fan_in, fan_out) = (rows, cols); conv kernels KxKxCinxCout use the
// receptive-field fans K*K*Cin and K*K*Cout.
template <typename S>
Tensor<S> xavier_init(const Shape& shape, std::uint64_t seed) {
    if (shape.size() < 2)
        throw ParameterError("xavier_init needs rank >= 2, got " +
                             shape_str(shape));
    double fan_in, fan_out;
    if (shape.size() == 4) {
        const double rf = static_cast<double>(shape[0] * shape[1]);
        fan_in = rf * static_cast<double>(shape[2]);
        fan_out = rf * static_cast<double>(shape[3]);
    } else {
        fan_in = static_cast<double>(shape[shape.size() - 2]);
        fan_out = static_cast<double>(shape[shape.size() - 1]);
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(seed);
    const auto n = shape_numel(shape);
    std::vector<S> data(n);
    for (std::int64_t i = 0; i < n; ++i)
        data[i] = static_cast<S>(rng.uniform(-bound, bound));
    return Tensor<S>(shape, std::move(data), /*requires_grad=*/true);
}

// Bias-corrected Adam over a fixed parameter list.
template <typename S>
struct AdamState {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;
    std::vector<std::vector<S>> first_moment;
    std::vector<std::vector<S>> second_moment;

    static AdamState init(const std::vector<Tensor<S>>& params, double lr) {
        AdamState st;
        st.learning_rate = lr;
        for (const auto& p : params) {
            st.first_moment.emplace_back(p.size(), S(0));
            st.second_moment.emplace_back(p.size(), S(0));
        }
        return st;
    }
};

template <typename S>
void adam_step(std::vector<Tensor<S>>& params, AdamState<S>& state) {
    if (params.size() != state.first_moment.size())
        throw DimensionError("adam_step: parameter count " +
                             std::to_string(params.size()) +
                             " does not match state with " +
                             std::to_string(state.first_moment.size()));
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        auto& m = state.first_moment[pi];
        auto& v = state.second_moment[pi];
        if (static_cast<std::int64_t>(m.size()) != p.size())
            throw DimensionError("adam_step: moment size mismatch on parameter " +
                                 std::to_string(pi));
        const auto& g = p.grad();
        auto& w = p.mutable_data();
        for (std::int64_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = state.beta1 * static_cast<double>(m[i]) +
                              (1.0 - state.beta1) * gi;
            const double vi = state.beta2 * static_cast<double>(v[i]) +
                              (1.0 - state.beta2) * gi * gi;
            m[i] = static_cast<S>(mi);
            v[i] = static_cast<S>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<S>(static_cast<double>(w[i]) -
                                  state.learning_rate * mhat /
                                      (std::sqrt(vhat) + state.eps));
        }
    }
}

}  // namespace sst
