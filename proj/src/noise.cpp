#include "sst/noise.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sst/errors.hpp"
#include "sst/optim.hpp"

namespace sst {

namespace {

// Stream tags under the caller's seed.
constexpr std::uint64_t kGaussStream = 1;
constexpr std::uint64_t kStructStream = 2;

void check_normalized_range(const HsiCube& cube) {
    if (cube.value_range != std::pair<double, double>{0.0, 1.0})
        throw ParameterError("noise synthesis expects a [0,1]-normalized cube");
}

void clip_cube(HsiCube& cube) {
    for (auto& v : cube.data) v = std::min(std::max(v, 0.0f), 1.0f);
}

// Adds per-band Gaussian noise; sigmas on the 0-255 scale.
void add_band_gaussian(HsiCube& cube, const std::vector<double>& sigma, Rng& rng) {
    const std::int64_t plane = cube.height * cube.width;
    for (std::int64_t b = 0; b < cube.bands; ++b) {
        const double s = sigma[b] / 255.0;
        float* p = cube.data.data() + b * plane;
        for (std::int64_t i = 0; i < plane; ++i)
            p[i] += static_cast<float>(rng.normal(0.0, s));
    }
}

std::vector<double> draw_noniid_sigma(std::int64_t bands, double lo, double hi,
                                      Rng& rng) {
    std::vector<double> sigma(bands);
    for (auto& s : sigma) s = rng.uniform(lo, hi);
    return sigma;
}

// ceil(fraction * B) distinct bands, sorted.
std::vector<std::int64_t> choose_bands(std::int64_t bands, double fraction,
                                       Rng& rng) {
    const std::int64_t count = static_cast<std::int64_t>(
        std::ceil(fraction * static_cast<double>(bands)));
    std::vector<std::int64_t> all(bands);
    for (std::int64_t i = 0; i < bands; ++i) all[i] = i;
    for (std::int64_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::int64_t>(rng.below(bands - i));
        std::swap(all[i], all[j]);
    }
    std::vector<std::int64_t> chosen(all.begin(), all.begin() + count);
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

// Deadlines: zero 5-15% of columns in 1-3 column-wide runs. Returns zeroed
// columns.
std::vector<std::int64_t> apply_deadline_band(HsiCube& cube, std::int64_t band,
                                              const NoiseSpec& spec, Rng& rng) {
    const std::int64_t w = cube.width;
    const double frac = rng.uniform(spec.column_frac_min, spec.column_frac_max);
    const auto target = static_cast<std::int64_t>(
        std::ceil(frac * static_cast<double>(w)));
    std::vector<bool> dead(w, false);
    std::int64_t zeroed = 0;
    while (zeroed < target) {
        const std::int64_t width =
            spec.deadline_width_min +
            static_cast<std::int64_t>(rng.below(
                spec.deadline_width_max - spec.deadline_width_min + 1));
        const std::int64_t start = static_cast<std::int64_t>(rng.below(w));
        for (std::int64_t c = start; c < std::min(start + width, w); ++c) {
            if (!dead[c]) {
                dead[c] = true;
                ++zeroed;
            }
        }
    }
    std::vector<std::int64_t> cols;
    for (std::int64_t c = 0; c < w; ++c) {
        if (!dead[c]) continue;
        cols.push_back(c);
        for (std::int64_t y = 0; y < cube.height; ++y) cube.at(y, c, band) = 0.0f;
    }
    return cols;
}

}  // namespace

std::string noise_kind_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::gaussian_iid: return "gaussian_iid";
        case NoiseKind::gaussian_noniid: return "gaussian_noniid";
        case NoiseKind::deadline: return "deadline";
        case NoiseKind::impulse: return "impulse";
        case NoiseKind::stripe: return "stripe";
        case NoiseKind::mixture: return "mixture";
    }
    return "unknown";
}

NoiseKind noise_kind_from_name(const std::string& name) {
    static const std::map<std::string, NoiseKind> table = {
        {"gaussian_iid", NoiseKind::gaussian_iid},
        {"gaussian_noniid", NoiseKind::gaussian_noniid},
        {"deadline", NoiseKind::deadline},
        {"impulse", NoiseKind::impulse},
        {"stripe", NoiseKind::stripe},
        {"mixture", NoiseKind::mixture},
    };
    std::string key = name;
    for (auto& c : key)
        if (c == '-') c = '_';
    const auto it = table.find(key);
    if (it == table.end())
        throw ParameterError("unknown noise kind: " + name);
    return it->second;
}

std::string NoiseSpec::to_text() const {
    std::ostringstream os;
    os << "kind " << noise_kind_name(kind) << "\n"
       << "sigma " << sigma << "\n"
       << "sigma_min " << sigma_min << "\n"
       << "sigma_max " << sigma_max << "\n"
       << "band_fraction " << band_fraction << "\n"
       << "column_frac_min " << column_frac_min << "\n"
       << "column_frac_max " << column_frac_max << "\n"
       << "deadline_width_min " << deadline_width_min << "\n"
       << "deadline_width_max " << deadline_width_max << "\n"
       << "impulse_ratio_min " << impulse_ratio_min << "\n"
       << "impulse_ratio_max " << impulse_ratio_max << "\n"
       << "stripe_offset_min " << stripe_offset_min << "\n"
       << "stripe_offset_max " << stripe_offset_max << "\n"
       << "clip " << (clip ? 1 : 0) << "\n"
       << "seed " << seed << "\n";
    return os.str();
}

NoiseSpec NoiseSpec::from_text(const std::string& text) {
    NoiseSpec spec;
    std::istringstream is(text);
    std::string key;
    while (is >> key) {
        if (key == "kind") {
            std::string v;
            is >> v;
            spec.kind = noise_kind_from_name(v);
        } else if (key == "sigma") is >> spec.sigma;
        else if (key == "sigma_min") is >> spec.sigma_min;
        else if (key == "sigma_max") is >> spec.sigma_max;
        else if (key == "band_fraction") is >> spec.band_fraction;
        else if (key == "column_frac_min") is >> spec.column_frac_min;
        else if (key == "column_frac_max") is >> spec.column_frac_max;
        else if (key == "deadline_width_min") is >> spec.deadline_width_min;
        else if (key == "deadline_width_max") is >> spec.deadline_width_max;
        else if (key == "impulse_ratio_min") is >> spec.impulse_ratio_min;
        else if (key == "impulse_ratio_max") is >> spec.impulse_ratio_max;
        else if (key == "stripe_offset_min") is >> spec.stripe_offset_min;
        else if (key == "stripe_offset_max") is >> spec.stripe_offset_max;
        else if (key == "clip") {
            int v;
            is >> v;
            spec.clip = v != 0;
        } else if (key == "seed") is >> spec.seed;
        else throw ParameterError("unknown noise spec key: " + key);
    }
    return spec;
}

std::string NoiseRecord::to_text() const {
    std::ostringstream os;
    os << "# noise record\n" << spec.to_text();
    os << "per_band_sigma";
    for (double s : per_band_sigma) os << " " << s;
    os << "\n";
    if (!band_kind.empty()) {
        os << "band_kind";
        for (const auto& k : band_kind) os << " " << k;
        os << "\n";
    }
    for (std::size_t i = 0; i < deadline_bands.size(); ++i) {
        os << "deadline_band " << deadline_bands[i] << " columns";
        for (auto c : deadline_columns[i]) os << " " << c;
        os << "\n";
    }
    for (std::size_t i = 0; i < impulse_bands.size(); ++i) {
        os << "impulse_band " << impulse_bands[i] << " ratio "
           << impulse_ratio[i] << " pixels " << impulse_pixels[i].size() << "\n";
    }
    for (std::size_t i = 0; i < stripe_bands.size(); ++i) {
        os << "stripe_band " << stripe_bands[i] << " columns";
        for (const auto& sc : stripe_columns[i])
            os << " " << sc.column << ":" << sc.offset;
        os << "\n";
    }
    return os.str();
}

NoisyResult add_gaussian_iid(const HsiCube& cube, double sigma,
                             std::uint64_t seed) {
    check_normalized_range(cube);
    if (sigma <= 0.0) throw ParameterError("gaussian sigma must be positive");
    HsiCube noisy = cube;
    NoiseRecord rec;
    rec.spec.kind = NoiseKind::gaussian_iid;
    rec.spec.sigma = sigma;
    rec.spec.seed = seed;
    rec.per_band_sigma.assign(cube.bands, sigma);
    Rng rng = Rng(seed).split(kGaussStream);
    add_band_gaussian(noisy, rec.per_band_sigma, rng);
    return {std::move(noisy), std::move(rec)};
}

NoisyResult add_gaussian_noniid(const HsiCube& cube, double sigma_min,
                                double sigma_max, std::uint64_t seed) {
    check_normalized_range(cube);
    if (sigma_min <= 0.0 || sigma_max < sigma_min)
        throw ParameterError("invalid non-i.i.d sigma range (" +
                             std::to_string(sigma_min) + ", " +
                             std::to_string(sigma_max) + ")");
    HsiCube noisy = cube;
    NoiseRecord rec;
    rec.spec.kind = NoiseKind::gaussian_noniid;
    rec.spec.sigma_min = sigma_min;
    rec.spec.sigma_max = sigma_max;
    rec.spec.seed = seed;
    Rng rng = Rng(seed).split(kGaussStream);
    rec.per_band_sigma = draw_noniid_sigma(cube.bands, sigma_min, sigma_max, rng);
    add_band_gaussian(noisy, rec.per_band_sigma, rng);
    return {std::move(noisy), std::move(rec)};
}

NoisyResult add_deadline(const HsiCube& cube, const NoiseSpec& spec,
                         std::uint64_t seed) {
    if (spec.band_fraction < 0.0 || spec.band_fraction > 1.0)
        throw ParameterError("band_fraction must lie in [0,1]");
    auto [noisy, rec] =
        add_gaussian_noniid(cube, spec.sigma_min, spec.sigma_max, seed);
    rec.spec = spec;
    rec.spec.kind = NoiseKind::deadline;
    rec.spec.seed = seed;
    Rng rng = Rng(seed).split(kStructStream);
    rec.deadline_bands = choose_bands(cube.bands, spec.band_fraction, rng);
    for (auto b : rec.deadline_bands)
        rec.deadline_columns.push_back(apply_deadline_band(noisy, b, spec, rng));
    if (spec.clip) clip_cube(noisy);
    return {std::move(noisy), std::move(rec)};
}

NoisyResult add_impulse(const HsiCube& cube, const NoiseSpec& spec,
                        std::uint64_t seed) {
    if (spec.band_fraction < 0.0 || spec.band_fraction > 1.0)
        throw ParameterError("band_fraction must lie in [0,1]");
    auto [noisy, rec] =
        add_gaussian_noniid(cube, spec.sigma_min, spec.sigma_max, seed);
    rec.spec = spec;
    rec.spec.kind = NoiseKind::impulse;
    rec.spec.seed = seed;
    Rng rng = Rng(seed).split(kStructStream);
    rec.impulse_bands = choose_bands(cube.bands, spec.band_fraction, rng);
    const std::int64_t plane = cube.height * cube.width;
    for (auto b : rec.impulse_bands) {
        const double ratio =
            rng.uniform(spec.impulse_ratio_min, spec.impulse_ratio_max);
        rec.impulse_ratio.push_back(ratio);
        std::vector<std::int64_t> pixels;
        std::vector<float> values;
        for (std::int64_t p = 0; p < plane; ++p) {
            if (rng.uniform(0.0, 1.0) >= ratio) continue;
            const float v = rng.uniform(0.0, 1.0) < 0.5 ? 0.0f : 1.0f;
            noisy.data[b * plane + p] = v;
            pixels.push_back(p);
            values.push_back(v);
        }
        rec.impulse_pixels.push_back(std::move(pixels));
        rec.impulse_values.push_back(std::move(values));
    }
    if (spec.clip) clip_cube(noisy);
    return {std::move(noisy), std::move(rec)};
}

NoisyResult add_stripe(const HsiCube& cube, const NoiseSpec& spec,
                       std::uint64_t seed) {
    if (spec.band_fraction < 0.0 || spec.band_fraction > 1.0)
        throw ParameterError("band_fraction must lie in [0,1]");
    auto [noisy, rec] =
        add_gaussian_noniid(cube, spec.sigma_min, spec.sigma_max, seed);
    rec.spec = spec;
    rec.spec.kind = NoiseKind::stripe;
    rec.spec.seed = seed;
    Rng rng = Rng(seed).split(kStructStream);
    rec.stripe_bands = choose_bands(cube.bands, spec.band_fraction, rng);
    for (auto b : rec.stripe_bands) {
        const double frac =
            rng.uniform(spec.column_frac_min, spec.column_frac_max);
        const auto count = static_cast<std::int64_t>(
            std::ceil(frac * static_cast<double>(cube.width)));
        // Distinct columns via partial shuffle.
        std::vector<std::int64_t> cols(cube.width);
        for (std::int64_t i = 0; i < cube.width; ++i) cols[i] = i;
        for (std::int64_t i = 0; i < count; ++i) {
            const auto j = i + static_cast<std::int64_t>(rng.below(cube.width - i));
            std::swap(cols[i], cols[j]);
        }
        std::vector<StripeColumn> striped;
        for (std::int64_t i = 0; i < count; ++i) {
            const double offset =
                rng.uniform(spec.stripe_offset_min, spec.stripe_offset_max);
            striped.push_back({cols[i], offset});
            for (std::int64_t y = 0; y < cube.height; ++y)
                noisy.at(y, cols[i], b) += static_cast<float>(offset);
        }
        std::sort(striped.begin(), striped.end(),
                  [](const StripeColumn& a, const StripeColumn& c) {
                      return a.column < c.column;
                  });
        rec.stripe_columns.push_back(std::move(striped));
    }
    if (spec.clip) clip_cube(noisy);
    return {std::move(noisy), std::move(rec)};
}

NoisyResult add_mixture(const HsiCube& cube, const NoiseSpec& spec,
                        std::uint64_t seed) {
    auto [noisy, rec] =
        add_gaussian_noniid(cube, spec.sigma_min, spec.sigma_max, seed);
    rec.spec = spec;
    rec.spec.kind = NoiseKind::mixture;
    rec.spec.seed = seed;
    Rng rng = Rng(seed).split(kStructStream);
    const std::int64_t plane = cube.height * cube.width;
    for (std::int64_t b = 0; b < cube.bands; ++b) {
        switch (rng.below(4)) {
            case 0:
                rec.band_kind.emplace_back("none");
                break;
            case 1: {
                rec.band_kind.emplace_back("deadline");
                rec.deadline_bands.push_back(b);
                rec.deadline_columns.push_back(
                    apply_deadline_band(noisy, b, spec, rng));
                break;
            }
            case 2: {
                rec.band_kind.emplace_back("impulse");
                rec.impulse_bands.push_back(b);
                const double ratio =
                    rng.uniform(spec.impulse_ratio_min, spec.impulse_ratio_max);
                rec.impulse_ratio.push_back(ratio);
                std::vector<std::int64_t> pixels;
                std::vector<float> values;
                for (std::int64_t p = 0; p < plane; ++p) {
                    if (rng.uniform(0.0, 1.0) >= ratio) continue;
                    const float v = rng.uniform(0.0, 1.0) < 0.5 ? 0.0f : 1.0f;
                    noisy.data[b * plane + p] = v;
                    pixels.push_back(p);
                    values.push_back(v);
                }
                rec.impulse_pixels.push_back(std::move(pixels));
                rec.impulse_values.push_back(std::move(values));
                break;
            }
            case 3: {
                rec.band_kind.emplace_back("stripe");
                rec.stripe_bands.push_back(b);
                const double frac =
                    rng.uniform(spec.column_frac_min, spec.column_frac_max);
                const auto count = static_cast<std::int64_t>(
                    std::ceil(frac * static_cast<double>(cube.width)));
                std::vector<std::int64_t> cols(cube.width);
                for (std::int64_t i = 0; i < cube.width; ++i) cols[i] = i;
                for (std::int64_t i = 0; i < count; ++i) {
                    const auto j =
                        i + static_cast<std::int64_t>(rng.below(cube.width - i));
                    std::swap(cols[i], cols[j]);
                }
                std::vector<StripeColumn> striped;
                for (std::int64_t i = 0; i < count; ++i) {
                    const double offset = rng.uniform(spec.stripe_offset_min,
                                                      spec.stripe_offset_max);
                    striped.push_back({cols[i], offset});
                    for (std::int64_t y = 0; y < cube.height; ++y)
                        noisy.at(y, cols[i], b) += static_cast<float>(offset);
                }
                std::sort(striped.begin(), striped.end(),
                          [](const StripeColumn& a, const StripeColumn& c) {
                              return a.column < c.column;
                          });
                rec.stripe_columns.push_back(std::move(striped));
                break;
            }
        }
    }
    if (spec.clip) clip_cube(noisy);
    return {std::move(noisy), std::move(rec)};
}

NoisyResult apply_noise(const HsiCube& cube, const NoiseSpec& spec) {
    switch (spec.kind) {
        case NoiseKind::gaussian_iid:
            return add_gaussian_iid(cube, spec.sigma, spec.seed);
        case NoiseKind::gaussian_noniid:
            return add_gaussian_noniid(cube, spec.sigma_min, spec.sigma_max,
                                       spec.seed);
        case NoiseKind::deadline:
            return add_deadline(cube, spec, spec.seed);
        case NoiseKind::impulse:
            return add_impulse(cube, spec, spec.seed);
        case NoiseKind::stripe:
            return add_stripe(cube, spec, spec.seed);
        case NoiseKind::mixture:
            return add_mixture(cube, spec, spec.seed);
    }
    throw ParameterError("unhandled noise kind");
}

}  // namespace sst
