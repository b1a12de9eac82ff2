#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sst/errors.hpp"
#include "sst/metrics.hpp"
#include "sst/noise.hpp"
#include "sst/optim.hpp"

using sst::HsiCube;

namespace {

HsiCube random_cube(std::int64_t h, std::int64_t w, std::int64_t b,
                    std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    HsiCube c = HsiCube::zeros(h, w, b);
    sst::Rng rng(seed);
    for (auto& v : c.data) v = static_cast<float>(rng.uniform(lo, hi));
    return c;
}

// Brute-force SSIM: direct per-pixel summation, independent of the library
// path (no shared helpers).
double ssim_oracle_band(const float* x, const float* y, std::int64_t h,
                        std::int64_t w) {
    const int win = 11;
    const double sigma = 1.5, k1 = 0.01, k2 = 0.03;
    double kernel[11][11];
    double ksum = 0;
    for (int a = 0; a < win; ++a)
        for (int b = 0; b < win; ++b) {
            const double dy = a - 5, dx = b - 5;
            kernel[a][b] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            ksum += kernel[a][b];
        }
    for (int a = 0; a < win; ++a)
        for (int b = 0; b < win; ++b) kernel[a][b] /= ksum;

    double acc = 0;
    std::int64_t n = 0;
    for (std::int64_t oy = 0; oy + win <= h; ++oy) {
        for (std::int64_t ox = 0; ox + win <= w; ++ox) {
            double mx = 0, my = 0;
            for (int a = 0; a < win; ++a)
                for (int b = 0; b < win; ++b) {
                    mx += kernel[a][b] * x[(oy + a) * w + ox + b];
                    my += kernel[a][b] * y[(oy + a) * w + ox + b];
                }
            double vx = 0, vy = 0, cv = 0;
            for (int a = 0; a < win; ++a)
                for (int b = 0; b < win; ++b) {
                    const double ex = x[(oy + a) * w + ox + b] - mx;
                    const double ey = y[(oy + a) * w + ox + b] - my;
                    vx += kernel[a][b] * ex * ex;
                    vy += kernel[a][b] * ey * ey;
                    cv += kernel[a][b] * ex * ey;
                }
            acc += ((2 * mx * my + k1 * k1) * (2 * cv + k2 * k2)) /
                   ((mx * mx + my * my + k1 * k1) * (vx + vy + k2 * k2));
            ++n;
        }
    }
    return acc / n;
}

}  // namespace

TEST_CASE("psnr closed forms") {
    HsiCube ref = random_cube(16, 16, 4, 1);
    HsiCube test = ref;
    for (auto& v : test.data) v += 0.1f;
    CHECK(sst::psnr(ref, test) == doctest::Approx(20.0).epsilon(1e-4));

    CHECK(sst::psnr(ref, ref) == 100.0);

    HsiCube wrong = random_cube(16, 16, 5, 2);
    CHECK_THROWS_AS(sst::psnr(ref, wrong), sst::DimensionError);
}

TEST_CASE("psnr against the iid noise law, monotone in sigma") {
    HsiCube ref = random_cube(256, 256, 4, 3, 0.2, 0.8);
    double last = 1e9;
    for (double sigma : {10.0, 30.0, 50.0, 70.0}) {
        auto [noisy, rec] = sst::add_gaussian_iid(ref, sigma, 7);
        const double db = sst::psnr(ref, noisy);
        CHECK(std::abs(db - 20.0 * std::log10(255.0 / sigma)) < 0.2);
        CHECK(db < last);
        last = db;
    }
}

TEST_CASE("ssim identity and dissimilarity") {
    HsiCube ref = random_cube(16, 16, 3, 4);
    CHECK(sst::ssim(ref, ref) == 1.0);

    HsiCube neg = ref;
    for (auto& v : neg.data) v = 1.0f - v;
    CHECK(sst::ssim(ref, neg) < 1.0);
}

TEST_CASE("ssim matches the brute-force oracle") {
    HsiCube ref = random_cube(16, 16, 1, 5);
    HsiCube test = random_cube(16, 16, 1, 6);
    const double lib = sst::ssim(ref, test);
    const double oracle = ssim_oracle_band(ref.data.data(), test.data.data(),
                                           16, 16);
    CHECK(std::abs(lib - oracle) < 1e-10);

    // Multi-band: mean of per-band oracles.
    HsiCube r8 = random_cube(16, 16, 8, 7);
    HsiCube t8 = random_cube(16, 16, 8, 8);
    double mean = 0;
    for (int b = 0; b < 8; ++b)
        mean += ssim_oracle_band(r8.data.data() + b * 256,
                                 t8.data.data() + b * 256, 16, 16);
    CHECK(std::abs(sst::ssim(r8, t8) - mean / 8) < 1e-10);
}

TEST_CASE("sam basics") {
    HsiCube ref = random_cube(8, 8, 6, 9, 0.1, 1.0);
    HsiCube doubled = ref;
    for (auto& v : doubled.data) v *= 2.0f;
    CHECK(sst::sam(ref, doubled) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sst::sam(ref, ref) == 0.0);

    // Orthogonal two-band spectra.
    HsiCube a = HsiCube::zeros(4, 4, 2);
    HsiCube b = HsiCube::zeros(4, 4, 2);
    for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t x = 0; x < 4; ++x) {
            a.at(y, x, 0) = 1.0f;
            b.at(y, x, 1) = 1.0f;
        }
    CHECK(sst::sam(a, b) == doctest::Approx(90.0).epsilon(1e-12));
}

TEST_CASE("sam matches a direct per-pixel loop") {
    HsiCube ref = random_cube(4, 4, 8, 10, 0.05, 1.0);
    HsiCube test = random_cube(4, 4, 8, 11, 0.05, 1.0);
    double total = 0;
    for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t x = 0; x < 4; ++x) {
            double dot = 0, nx = 0, ny = 0;
            for (std::int64_t b = 0; b < 8; ++b) {
                dot += double(ref.at(y, x, b)) * test.at(y, x, b);
                nx += double(ref.at(y, x, b)) * ref.at(y, x, b);
                ny += double(test.at(y, x, b)) * test.at(y, x, b);
            }
            total += std::acos(std::min(
                         1.0, std::max(-1.0, dot / std::sqrt(nx * ny)))) *
                     180.0 / M_PI;
        }
    CHECK(std::abs(sst::sam(ref, test) - total / 16) < 1e-9);
}

TEST_CASE("sam scale invariance and zero handling") {
    HsiCube ref = random_cube(6, 6, 5, 12, 0.1, 1.0);
    HsiCube test = random_cube(6, 6, 5, 13, 0.1, 1.0);
    HsiCube scaled = test;
    sst::Rng rng(14);
    const std::int64_t plane = 36;
    for (std::int64_t p = 0; p < plane; ++p) {
        // Powers of two keep the scaling exact in float.
        const float f = static_cast<float>(1 << rng.below(3)) *
                        (rng.below(2) ? 0.5f : 1.0f);
        for (std::int64_t b = 0; b < 5; ++b) scaled.data[b * plane + p] *= f;
    }
    CHECK(std::abs(sst::sam(ref, test) - sst::sam(ref, scaled)) < 1e-9);

    // A zero spectrum is skipped and counted.
    HsiCube zref = ref;
    for (std::int64_t b = 0; b < 5; ++b) zref.data[b * plane + 0] = 0.0f;
    std::int64_t skipped = 0;
    sst::sam(zref, test, &skipped);
    CHECK(skipped == 1);

    HsiCube all_zero = HsiCube::zeros(6, 6, 5);
    CHECK_THROWS_AS(sst::sam(all_zero, test), sst::NumericalError);
}

TEST_CASE("report aggregation and serialization") {
    sst::MetricsReport rep;
    rep.add("a", 20.0, 0.9, 5.0);
    rep.add("b", 30.0, 0.7, 7.0);
    rep.finalize();
    CHECK(rep.mean_psnr == doctest::Approx(25.0));
    CHECK(rep.mean_ssim == doctest::Approx(0.8));
    CHECK(rep.mean_sam == doctest::Approx(6.0));

    const std::string txt = rep.to_text();
    CHECK(txt.find("mean") != std::string::npos);
    const std::string csv = rep.to_csv();
    CHECK(csv.find("id,psnr_db,ssim,sam_deg") == 0);
    CHECK(csv.find("mean,25") != std::string::npos);
}
