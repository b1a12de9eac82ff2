#include "sst/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "sst/errors.hpp"

namespace sst {

namespace {

constexpr double kPsnrCapDb = 100.0;
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

void check_same_shape(const HsiCube& a, const HsiCube& b) {
    if (a.height != b.height || a.width != b.width || a.bands != b.bands)
        throw DimensionError(
            "cube shapes disagree: " + std::to_string(a.height) + "x" +
            std::to_string(a.width) + "x" + std::to_string(a.bands) + " vs " +
            std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
            std::to_string(b.bands));
}

std::vector<double> gaussian_window() {
    std::vector<double> w(kSsimWindow * kSsimWindow);
    const int half = kSsimWindow / 2;
    double total = 0.0;
    for (int y = 0; y < kSsimWindow; ++y) {
        for (int x = 0; x < kSsimWindow; ++x) {
            const double dy = y - half, dx = x - half;
            const double v =
                std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
            w[y * kSsimWindow + x] = v;
            total += v;
        }
    }
    for (auto& v : w) v /= total;
    return w;
}

}  // namespace

double psnr(const HsiCube& reference, const HsiCube& test) {
    check_same_shape(reference, test);
    const std::int64_t plane = reference.height * reference.width;
    double total = 0.0;
    for (std::int64_t b = 0; b < reference.bands; ++b) {
        double mse = 0.0;
        const float* r = reference.data.data() + b * plane;
        const float* t = test.data.data() + b * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            const double d = static_cast<double>(r[i]) - static_cast<double>(t[i]);
            mse += d * d;
        }
        mse /= static_cast<double>(plane);
        const double db =
            mse == 0.0 ? kPsnrCapDb
                       : std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
        total += db;
    }
    return total / static_cast<double>(reference.bands);
}

double ssim(const HsiCube& reference, const HsiCube& test) {
    check_same_shape(reference, test);
    const std::int64_t h = reference.height, w = reference.width;
    if (h < kSsimWindow || w < kSsimWindow)
        throw ParameterError("ssim needs spatial size >= " +
                             std::to_string(kSsimWindow));
    static const std::vector<double> win = gaussian_window();
    const double c1 = kSsimK1 * kSsimK1;  // (K1*L)^2, L = 1
    const double c2 = kSsimK2 * kSsimK2;
    const std::int64_t plane = h * w;
    double band_total = 0.0;
    for (std::int64_t b = 0; b < reference.bands; ++b) {
        const float* x = reference.data.data() + b * plane;
        const float* y = test.data.data() + b * plane;
        double acc = 0.0;
        std::int64_t count = 0;
        for (std::int64_t cy = 0; cy + kSsimWindow <= h; ++cy) {
            for (std::int64_t cx = 0; cx + kSsimWindow <= w; ++cx) {
                double mx = 0, my = 0;
                for (int wy = 0; wy < kSsimWindow; ++wy)
                    for (int wx = 0; wx < kSsimWindow; ++wx) {
                        const double g = win[wy * kSsimWindow + wx];
                        mx += g * x[(cy + wy) * w + cx + wx];
                        my += g * y[(cy + wy) * w + cx + wx];
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int wy = 0; wy < kSsimWindow; ++wy)
                    for (int wx = 0; wx < kSsimWindow; ++wx) {
                        const double g = win[wy * kSsimWindow + wx];
                        const double dx = x[(cy + wy) * w + cx + wx] - mx;
                        const double dy = y[(cy + wy) * w + cx + wx] - my;
                        vx += g * dx * dx;
                        vy += g * dy * dy;
                        cov += g * dx * dy;
                    }
                const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                const double den =
                    (mx * mx + my * my + c1) * (vx + vy + c2);
                acc += num / den;
                ++count;
            }
        }
        band_total += acc / static_cast<double>(count);
    }
    return band_total / static_cast<double>(reference.bands);
}

double sam(const HsiCube& reference, const HsiCube& test,
           std::int64_t* skipped_count) {
    check_same_shape(reference, test);
    const std::int64_t plane = reference.height * reference.width;
    const std::int64_t bands = reference.bands;
    double total = 0.0;
    std::int64_t used = 0, skipped = 0;
    for (std::int64_t p = 0; p < plane; ++p) {
        double dot = 0, nx = 0, ny = 0;
        for (std::int64_t b = 0; b < bands; ++b) {
            const double xv = reference.data[b * plane + p];
            const double yv = test.data[b * plane + p];
            dot += xv * yv;
            nx += xv * xv;
            ny += yv * yv;
        }
        if (nx == 0.0 || ny == 0.0) {
            ++skipped;
            continue;
        }
        // atan2 form of arccos(dot/(|x||y|)); stable near zero angle.
        const double sin_sq = std::max(0.0, nx * ny - dot * dot);
        total += std::atan2(std::sqrt(sin_sq), dot);
        ++used;
    }
    if (skipped_count) *skipped_count = skipped;
    if (used == 0)
        throw NumericalError("sam undefined: every pixel has a zero spectrum");
    return total / static_cast<double>(used) * (180.0 / M_PI);
}

void MetricsReport::add(const std::string& id, double p, double s, double a) {
    per_cube.push_back({id, p, s, a});
}

void MetricsReport::finalize() {
    if (per_cube.empty()) {
        mean_psnr = mean_ssim = mean_sam = 0.0;
        return;
    }
    mean_psnr = mean_ssim = mean_sam = 0.0;
    for (const auto& e : per_cube) {
        mean_psnr += e.psnr_db;
        mean_ssim += e.ssim_value;
        mean_sam += e.sam_degrees;
    }
    const double n = static_cast<double>(per_cube.size());
    mean_psnr /= n;
    mean_ssim /= n;
    mean_sam /= n;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::setw(24) << std::left << "id" << std::right << std::setw(10)
       << "psnr_db" << std::setw(10) << "ssim" << std::setw(10) << "sam_deg"
       << "\n";
    for (const auto& e : per_cube)
        os << std::setw(24) << std::left << e.id << std::right << std::setw(10)
           << e.psnr_db << std::setw(10) << e.ssim_value << std::setw(10)
           << e.sam_degrees << "\n";
    os << std::setw(24) << std::left << "mean" << std::right << std::setw(10)
       << mean_psnr << std::setw(10) << mean_ssim << std::setw(10) << mean_sam
       << "\n";
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    if (!noise_spec.empty()) os << "noise: " << noise_spec << "\n";
    if (!model_id.empty()) os << "model: " << model_id << "\n";
    if (!timestamp.empty()) os << "time: " << timestamp << "\n";
    return os.str();
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "id,psnr_db,ssim,sam_deg\n";
    for (const auto& e : per_cube)
        os << e.id << "," << e.psnr_db << "," << e.ssim_value << ","
           << e.sam_degrees << "\n";
    os << "mean," << mean_psnr << "," << mean_ssim << "," << mean_sam << "\n";
    return os.str();
}

}  // namespace sst
