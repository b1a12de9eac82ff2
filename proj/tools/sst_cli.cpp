// Command-line surface for the spatial-spectral denoiser.
//
// Subcommands: simulate | train | denoise | eval | gradcheck | render.
// Exit codes: 0 success, 2 configuration error, 3 data/file error,
// 4 numerical failure.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sst/errors.hpp"
#include "sst/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

// Flat "key value" config file; any key recognized by SstConfig,
// TrainConfig, or NoiseSpec. Command-line flags win over file values.
struct FileConfig {
    std::map<std::string, std::string> kv;

    static FileConfig load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw sst::IoError("cannot open config file " + path);
        FileConfig fc;
        std::string line;
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string key, value;
            if (!(ls >> key) || key[0] == '#') continue;
            std::getline(ls, value);
            const auto start = value.find_first_not_of(" \t");
            fc.kv[key] = start == std::string::npos ? "" : value.substr(start);
        }
        return fc;
    }

    template <typename T>
    void apply(const std::string& key, T& target) const {
        const auto it = kv.find(key);
        if (it == kv.end()) return;
        std::istringstream vs(it->second);
        if (!(vs >> target))
            throw sst::ParameterError("bad value for config key '" + key +
                                      "': " + it->second);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial-spectral transformer denoiser for hyperspectral cubes"};
    app.require_subcommand(1);
    app.footer(
        "exit codes: 0 ok, 2 configuration error, 3 data error, "
        "4 numerical failure");

    std::string config_path, input, output, checkpoint, report_prefix;
    std::string noise_kind = "gaussian-iid", attention_order, loss;
    std::uint64_t seed = 0;
    double sigma = -1.0, lr = -1.0;
    std::int64_t bands = -1, channels = -1, rssb = -1, sstl = -1, heads = -1,
                 window = -1, epochs = -1, batch = -1, max_steps = -1;
    std::vector<std::int64_t> render_bands = {9, 15, 28};
    bool corrupt_fixture = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key/value config file");
        cmd->add_option("--seed", seed, "base RNG seed");
    };
    auto add_net_flags = [&](CLI::App* cmd) {
        cmd->add_option("--bands", bands, "spectral band count");
        cmd->add_option("--channels", channels, "feature channels C");
        cmd->add_option("--rssb", rssb, "residual blocks T");
        cmd->add_option("--sstl", sstl, "layers per block L");
        cmd->add_option("--heads", heads, "attention heads N");
        cmd->add_option("--window", window, "spatial window M");
        cmd->add_option("--attention-order", attention_order,
                        "nlsa-gsa | gsa-nlsa | nlsa-only | gsa-only | "
                        "nlsa-nlsa | gsa-gsa");
    };

    auto* sim = app.add_subcommand("simulate", "corrupt a clean cube");
    add_common(sim);
    sim->add_option("--input", input, "clean cube (.hsic)")->required();
    sim->add_option("--output", output, "noisy cube path")->required();
    sim->add_option("--noise-kind", noise_kind,
                    "gaussian-iid | gaussian-noniid | deadline | impulse | "
                    "stripe | mixture");
    sim->add_option("--sigma", sigma, "noise sigma on the 0-255 scale");
    sim->add_option("--record", report_prefix, "noise record output path");

    auto* train = app.add_subcommand("train", "train on a directory of cubes");
    add_common(train);
    add_net_flags(train);
    train->add_option("--input", input, "directory of clean .hsic cubes")
        ->required();
    train->add_option("--checkpoint", checkpoint, "checkpoint output path")
        ->required();
    train->add_option("--output", output, "training log path");
    train->add_option("--noise-kind", noise_kind, "training corruption kind");
    train->add_option("--sigma", sigma, "noise sigma on the 0-255 scale");
    train->add_option("--loss", loss, "mse | l1");
    train->add_option("--epochs", epochs, "epoch count");
    train->add_option("--batch", batch, "minibatch size");
    train->add_option("--lr", lr, "base learning rate");
    train->add_option("--max-steps", max_steps, "optional step cap");

    auto* den = app.add_subcommand("denoise", "denoise a cube with a checkpoint");
    add_common(den);
    den->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    den->add_option("--input", input, "noisy cube")->required();
    den->add_option("--output", output, "denoised cube path")->required();

    auto* ev = app.add_subcommand("eval", "PSNR/SSIM/SAM over paired dirs");
    add_common(ev);
    ev->add_option("--input", input, "clean cube directory")->required();
    ev->add_option("--test", checkpoint, "test cube directory")->required();
    ev->add_option("--output", output, "report path prefix (.txt/.csv)");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference verification");
    add_common(gc);
    gc->add_flag("--corrupt-fixture", corrupt_fixture,
                 "include a deliberately broken op (self-test)");

    auto* ren = app.add_subcommand("render", "pseudo-color PPM from 3 bands");
    add_common(ren);
    ren->add_option("--input", input, "cube to render")->required();
    ren->add_option("--output", output, "PPM output path")->required();
    ren->add_option("--bands", render_bands, "red,green,blue band indices")
        ->expected(3);

    CLI11_PARSE(app, argc, argv);

    try {
        FileConfig fc;
        if (!config_path.empty()) fc = FileConfig::load(config_path);

        sst::SstConfig net;
        fc.apply("bands", net.bands);
        fc.apply("channels", net.channels);
        fc.apply("rssb_count", net.rssb_count);
        fc.apply("sstl_per_rssb", net.sstl_per_rssb);
        fc.apply("heads", net.heads);
        fc.apply("window", net.window);
        fc.apply("mlp_ratio", net.mlp_ratio);
        if (fc.kv.count("attention_order"))
            net.attention_order =
                sst::attention_order_from_name(fc.kv.at("attention_order"));
        if (bands > 0) net.bands = bands;
        if (channels > 0) net.channels = channels;
        if (rssb > 0) net.rssb_count = rssb;
        if (sstl > 0) net.sstl_per_rssb = sstl;
        if (heads > 0) net.heads = heads;
        if (window > 0) net.window = window;
        if (!attention_order.empty())
            net.attention_order = sst::attention_order_from_name(attention_order);

        sst::TrainConfig tc;
        fc.apply("batch_size", tc.batch_size);
        fc.apply("epochs", tc.epochs);
        fc.apply("base_lr", tc.base_lr);
        fc.apply("lr_drop_epoch", tc.lr_drop_epoch);
        fc.apply("loss", tc.loss);
        fc.apply("patch_size", tc.patch_size);
        fc.apply("seed", tc.seed);
        if (epochs > 0) tc.epochs = epochs;
        if (batch > 0) tc.batch_size = batch;
        if (lr > 0) tc.base_lr = lr;
        if (!loss.empty()) tc.loss = loss;
        if (max_steps > 0) tc.max_steps = max_steps;
        CLI::App* active = app.get_subcommands().front();
        if (active->count("--seed") || !fc.kv.count("seed")) tc.seed = seed;

        sst::NoiseSpec noise;
        fc.apply("sigma", noise.sigma);
        fc.apply("sigma_min", noise.sigma_min);
        fc.apply("sigma_max", noise.sigma_max);
        if (fc.kv.count("noise_kind"))
            noise.kind = sst::noise_kind_from_name(fc.kv.at("noise_kind"));
        if (sim->count("--noise-kind") || train->count("--noise-kind") ||
            !fc.kv.count("noise_kind"))
            noise.kind = sst::noise_kind_from_name(noise_kind);
        if (sigma > 0) noise.sigma = sigma;
        noise.seed = seed;

        if (*sim) {
            sst::run_simulate(input, noise, output, report_prefix);
        } else if (*train) {
            auto cubes = sst::list_cubes(input);
            auto result =
                sst::run_train(cubes, net, tc, noise, checkpoint, output);
            for (const auto& e : result.epochs)
                std::cout << "epoch " << e.epoch << " loss " << e.mean_loss
                          << " val_psnr " << e.val_psnr << " lr " << e.lr
                          << "\n";
        } else if (*den) {
            sst::run_denoise(checkpoint, input, output);
        } else if (*ev) {
            auto report = sst::run_eval(input, checkpoint, output);
            std::cout << report.to_text();
        } else if (*gc) {
            auto report = sst::run_gradcheck(corrupt_fixture);
            std::cout << report.to_text();
            return report.passed() ? kExitOk : kExitNumerical;
        } else if (*ren) {
            sst::run_render(input, render_bands[0], render_bands[1],
                            render_bands[2], output);
        }
        return kExitOk;
    } catch (const sst::ParameterError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const sst::ContractError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const sst::DimensionError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const sst::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::runtime_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
}
