#pragma once

// Band-averaged PSNR/SSIM and per-pixel spectral angle, plus report
// aggregation. All arithmetic in double.

#include <string>
#include <vector>

#include "sst/hsi.hpp"

namespace sst {

// Mean over bands of 10*log10(1/MSE_b), peak 1.0; identical bands cap at
// 100 dB.
double psnr(const HsiCube& reference, const HsiCube& test);

// Mean over bands of Gaussian-windowed SSIM (11x11, sigma 1.5, K1=0.01,
// K2=0.03, dynamic range 1), averaged over window positions fully inside
// the image.
double ssim(const HsiCube& reference, const HsiCube& test);

// Mean per-pixel angle between the B-dimensional spectra, in degrees.
// Pixels where either spectrum is all-zero are skipped; if skipped_count is
// non-null it receives the number skipped.
double sam(const HsiCube& reference, const HsiCube& test,
           std::int64_t* skipped_count = nullptr);

struct MetricsEntry {
    std::string id;
    double psnr_db;
    double ssim_value;
    double sam_degrees;
};

struct MetricsReport {
    std::vector<MetricsEntry> per_cube;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_sam = 0.0;
    std::string noise_spec;  // provenance
    std::string model_id;
    std::string timestamp;
    std::vector<std::string> warnings;  // unmatched files, etc.

    void add(const std::string& id, double p, double s, double a);
    void finalize();  // recompute aggregate means

    std::string to_text() const;  // aligned table
    std::string to_csv() const;
};

}  // namespace sst
