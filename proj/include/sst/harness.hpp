#pragma once

// Shared command implementations behind the CLI: noise simulation,
// desk-scale training, tiled denoising, directory evaluation, gradient
// verification, and pseudo-color rendering. The CLI binary only parses
// flags and dispatches here, so tests can drive the exact same code.

#include <cstdint>
#include <string>
#include <vector>

#include "sst/metrics.hpp"
#include "sst/net.hpp"
#include "sst/noise.hpp"

namespace sst {

struct TrainConfig {
    std::int64_t batch_size = 8;
    std::int64_t epochs = 100;
    double base_lr = 1e-4;
    std::int64_t lr_drop_epoch = 60;  // LR divided by 10 after this epoch
    std::uint64_t seed = 0;
    std::string loss = "mse";  // or "l1"
    std::int64_t patch_size = 32;
    std::int64_t max_steps = 0;  // 0 = no cap; used by smoke tests
};

// 1-based epochs: base LR through lr_drop_epoch, a tenth of it after.
double learning_rate_for_epoch(const TrainConfig& cfg, std::int64_t epoch);

struct EpochStats {
    std::int64_t epoch = 0;
    double mean_loss = 0.0;
    double val_psnr = 0.0;  // NaN when no validation split exists
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    std::int64_t total_steps = 0;
};

// All *.hsic files directly inside `dir`, sorted by filename.
std::vector<std::string> list_cubes(const std::string& dir);

void run_simulate(const std::string& input_path, const NoiseSpec& spec,
                  const std::string& output_path,
                  const std::string& record_path);

TrainResult run_train(const std::vector<std::string>& cube_paths,
                      const SstConfig& net_cfg, const TrainConfig& train_cfg,
                      const NoiseSpec& noise, const std::string& checkpoint_path,
                      const std::string& log_path);

void run_denoise(const std::string& checkpoint_path,
                 const std::string& input_path, const std::string& output_path);

MetricsReport run_eval(const std::string& clean_dir, const std::string& test_dir,
                       const std::string& report_prefix = "");

struct GradcheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double threshold = 1e-4;
    bool passed() const;
    std::string to_text() const;
};

// Finite-difference verification of every differentiable primitive and an
// end-to-end desk-scale network, in double precision. The fixture flag
// adds one op with a deliberately wrong backward pass, so tests can prove
// the harness actually detects failures.
GradcheckReport run_gradcheck(bool corrupt_fixture = false);

void run_render(const std::string& input_path, std::int64_t red_band,
                std::int64_t green_band, std::int64_t blue_band,
                const std::string& output_path);

}  // namespace sst
