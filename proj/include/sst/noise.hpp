#pragma once

// Synthetic degradations for [0,1]-normalized cubes: i.i.d / non-i.i.d
// Gaussian, deadline, impulse, stripe and per-band mixtures. Every draw is
// derived from the spec's seed, and the returned record pins the full
// realization so tests can reconstruct it.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sst/hsi.hpp"

namespace sst {

enum class NoiseKind {
    gaussian_iid,
    gaussian_noniid,
    deadline,
    impulse,
    stripe,
    mixture,
};

std::string noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from_name(const std::string& name);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian_iid;
    // Sigmas live on the 0-255 intensity scale and are applied as sigma/255.
    double sigma = 50.0;                              // i.i.d
    double sigma_min = 10.0, sigma_max = 70.0;        // non-i.i.d range
    double band_fraction = 1.0 / 3.0;                 // structured kinds
    double column_frac_min = 0.05, column_frac_max = 0.15;  // deadline/stripe
    int deadline_width_min = 1, deadline_width_max = 3;
    double impulse_ratio_min = 0.1, impulse_ratio_max = 0.7;
    double stripe_offset_min = -0.25, stripe_offset_max = 0.25;
    bool clip = false;
    std::uint64_t seed = 0;

    std::string to_text() const;
    static NoiseSpec from_text(const std::string& text);
};

struct StripeColumn {
    std::int64_t column;
    double offset;
};

struct NoiseRecord {
    NoiseSpec spec;
    std::vector<double> per_band_sigma;
    std::vector<std::int64_t> deadline_bands;
    std::vector<std::vector<std::int64_t>> deadline_columns;  // per deadline band
    std::vector<std::int64_t> impulse_bands;
    std::vector<double> impulse_ratio;                       // per impulse band
    std::vector<std::vector<std::int64_t>> impulse_pixels;   // flat y*W+x
    std::vector<std::vector<float>> impulse_values;          // 0 or 1
    std::vector<std::int64_t> stripe_bands;
    std::vector<std::vector<StripeColumn>> stripe_columns;   // per stripe band
    std::vector<std::string> band_kind;  // mixture: corruption chosen per band

    std::string to_text() const;
};

using NoisyResult = std::pair<HsiCube, NoiseRecord>;

NoisyResult add_gaussian_iid(const HsiCube& cube, double sigma,
                             std::uint64_t seed);
NoisyResult add_gaussian_noniid(const HsiCube& cube, double sigma_min,
                                double sigma_max, std::uint64_t seed);
NoisyResult add_deadline(const HsiCube& cube, const NoiseSpec& spec,
                         std::uint64_t seed);
NoisyResult add_impulse(const HsiCube& cube, const NoiseSpec& spec,
                        std::uint64_t seed);
NoisyResult add_stripe(const HsiCube& cube, const NoiseSpec& spec,
                       std::uint64_t seed);
NoisyResult add_mixture(const HsiCube& cube, const NoiseSpec& spec,
                        std::uint64_t seed);

// Dispatch on spec.kind using spec.seed.
NoisyResult apply_noise(const HsiCube& cube, const NoiseSpec& spec);

}  // namespace sst
