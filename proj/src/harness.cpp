#include "sst/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sst/checkpoint.hpp"
#include "sst/errors.hpp"
#include "sst/hsi.hpp"
#include "sst/optim.hpp"

namespace fs = std::filesystem;

namespace sst {

namespace {

void save_cube_atomic(const HsiCube& cube, const std::string& path) {
    const std::string tmp = path + ".tmp";
    save_cube(cube, tmp);
    fs::rename(tmp, path);
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        os << text;
    }
    fs::rename(tmp, path);
}

}  // namespace

double learning_rate_for_epoch(const TrainConfig& cfg, std::int64_t epoch) {
    return epoch <= cfg.lr_drop_epoch ? cfg.base_lr : cfg.base_lr / 10.0;
}

std::vector<std::string> list_cubes(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".hsic")
            out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

void run_simulate(const std::string& input_path, const NoiseSpec& spec,
                  const std::string& output_path,
                  const std::string& record_path) {
    const HsiCube clean = load_cube(input_path);
    auto [noisy, record] = apply_noise(clean, spec);
    save_cube_atomic(noisy, output_path);
    if (!record_path.empty())
        write_text_atomic(record_path,
                          spec.to_text() + "\n" + record.to_text());
}

TrainResult run_train(const std::vector<std::string>& cube_paths,
                      const SstConfig& net_cfg, const TrainConfig& train_cfg,
                      const NoiseSpec& noise, const std::string& checkpoint_path,
                      const std::string& log_path) {
    net_cfg.validate();
    if (train_cfg.batch_size < 1 || train_cfg.epochs < 1)
        throw ParameterError("batch size and epochs must be positive");
    if (train_cfg.loss != "mse" && train_cfg.loss != "l1")
        throw ParameterError("loss must be 'mse' or 'l1', got '" +
                             train_cfg.loss + "'");

    // Gather training patches from every cube.
    std::vector<HsiCube> patches;
    for (const auto& path : cube_paths) {
        HsiCube cube = load_cube(path);
        if (cube.bands != net_cfg.bands)
            throw DataError(path + " has " + std::to_string(cube.bands) +
                            " bands, model expects " +
                            std::to_string(net_cfg.bands));
        const std::int64_t p = std::min<std::int64_t>(
            train_cfg.patch_size, std::min(cube.height, cube.width));
        auto set = extract_patches(cube, p, {1.0}, {p});
        for (auto& patch : set.patches) patches.push_back(std::move(patch));
    }
    if (patches.empty()) throw DataError("no training patches found");

    // Deterministic shuffle, then hold out a small validation split.
    Rng shuffle_rng(derive_seed(train_cfg.seed, 100));
    for (std::size_t i = patches.size(); i > 1; --i)
        std::swap(patches[i - 1], patches[shuffle_rng.below(i)]);
    std::int64_t n_val = 0;
    if (patches.size() >= 8) n_val = static_cast<std::int64_t>(patches.size() / 8);
    else if (patches.size() >= 2) n_val = 1;
    const std::int64_t n_train = static_cast<std::int64_t>(patches.size()) - n_val;
    std::vector<HsiCube> val(patches.begin() + n_train, patches.end());
    patches.resize(n_train);

    auto model = SstModel<float>::init(net_cfg, derive_seed(train_cfg.seed, 1));
    auto param_list = model.param_list();
    auto opt = AdamState<float>::init(param_list, train_cfg.base_lr);

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        if (!log) throw IoError("cannot open " + log_path + " for writing");
        log << "epoch mean_loss val_psnr lr\n";
    }

    TrainResult result;
    Rng order_rng(derive_seed(train_cfg.seed, 101));
    std::int64_t global_step = 0;
    bool capped = false;
    for (std::int64_t epoch = 1; epoch <= train_cfg.epochs && !capped; ++epoch) {
        const double lr = learning_rate_for_epoch(train_cfg, epoch);
        opt.learning_rate = lr;

        std::vector<std::int64_t> order(n_train);
        for (std::int64_t i = 0; i < n_train; ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[order_rng.below(i)]);

        double loss_sum = 0.0;
        std::int64_t step_count = 0;
        for (std::int64_t start = 0; start < n_train;
             start += train_cfg.batch_size) {
            const std::int64_t count =
                std::min(train_cfg.batch_size, n_train - start);
            Tensor<float> batch_loss;
            for (std::int64_t i = 0; i < count; ++i) {
                const HsiCube& clean = patches[order[start + i]];
                NoiseSpec step_noise = noise;
                step_noise.seed = derive_seed(
                    train_cfg.seed,
                    1000 + static_cast<std::uint64_t>(global_step) *
                               static_cast<std::uint64_t>(train_cfg.batch_size) +
                               static_cast<std::uint64_t>(i));
                auto [noisy, rec] = apply_noise(clean, step_noise);
                auto x = tensor_from_cube<float>(noisy);
                auto target = tensor_from_cube<float>(clean);
                auto out = sst_forward(model, x);
                auto diff = sub(out, target);
                Tensor<float> sample_loss;
                if (train_cfg.loss == "mse") {
                    sample_loss = mean_all(mul(diff, diff));
                } else {
                    // L1 via a constant sign mask: d|x|/dx = sign(x) a.e.
                    std::vector<float> sgn(diff.size());
                    for (std::int64_t k = 0; k < diff.size(); ++k)
                        sgn[k] = diff.data()[k] < 0.0f ? -1.0f : 1.0f;
                    sample_loss = mean_all(
                        mul(diff, Tensor<float>(diff.shape(), std::move(sgn))));
                }
                batch_loss = batch_loss.valid() ? add(batch_loss, sample_loss)
                                                : sample_loss;
            }
            batch_loss = scale(batch_loss, 1.0f / static_cast<float>(count));
            const double loss_val = batch_loss.item();
            if (!std::isfinite(loss_val))
                throw NumericalError(
                    "training aborted: non-finite loss at epoch " +
                    std::to_string(epoch) + ", step " +
                    std::to_string(global_step));
            model.zero_grad();
            backward(batch_loss);
            adam_step(param_list, opt);
            loss_sum += loss_val;
            ++step_count;
            ++global_step;
            if (train_cfg.max_steps > 0 && global_step >= train_cfg.max_steps) {
                capped = true;
                break;
            }
        }

        // Validation: fixed seeded corruption so the curve is comparable
        // across epochs.
        double val_psnr = std::numeric_limits<double>::quiet_NaN();
        if (!val.empty()) {
            double total = 0.0;
            for (std::size_t i = 0; i < val.size(); ++i) {
                NoiseSpec vspec = noise;
                vspec.seed = derive_seed(train_cfg.seed, 5000 + i);
                auto [noisy, rec] = apply_noise(val[i], vspec);
                HsiCube denoised = denoise_cube(model, noisy);
                total += psnr(val[i], denoised);
            }
            val_psnr = total / static_cast<double>(val.size());
        }

        EpochStats st;
        st.epoch = epoch;
        st.mean_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(
                                      1, step_count));
        st.val_psnr = val_psnr;
        st.lr = lr;
        result.epochs.push_back(st);
        if (log)
            log << epoch << " " << std::setprecision(10) << st.mean_loss << " "
                << st.val_psnr << " " << lr << "\n"
                << std::flush;
        if (!checkpoint_path.empty()) save_model(model, checkpoint_path);
    }
    result.total_steps = global_step;
    return result;
}

void run_denoise(const std::string& checkpoint_path,
                 const std::string& input_path, const std::string& output_path) {
    auto model = load_model<float>(checkpoint_path);
    const HsiCube noisy = load_cube(input_path);
    if (noisy.bands != model.config.bands)
        throw DimensionError("input has " + std::to_string(noisy.bands) +
                             " bands, checkpoint expects " +
                             std::to_string(model.config.bands));
    HsiCube denoised = denoise_tiled(model, noisy, 64, 16);
    save_cube_atomic(denoised, output_path);
}

MetricsReport run_eval(const std::string& clean_dir, const std::string& test_dir,
                       const std::string& report_prefix) {
    MetricsReport report;
    std::vector<std::string> clean_files = list_cubes(clean_dir);
    for (const auto& clean_path : clean_files) {
        const std::string name = fs::path(clean_path).filename().string();
        const fs::path test_path = fs::path(test_dir) / name;
        if (!fs::exists(test_path)) {
            report.warnings.push_back("no counterpart for " + name);
            continue;
        }
        const HsiCube clean = load_cube(clean_path);
        const HsiCube test = load_cube(test_path.string());
        report.add(name, psnr(clean, test), ssim(clean, test),
                   sam(clean, test));
    }
    for (const auto& e : fs::directory_iterator(test_dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".hsic") continue;
        const fs::path counterpart =
            fs::path(clean_dir) / e.path().filename();
        if (!fs::exists(counterpart))
            report.warnings.push_back("extra test file " +
                                      e.path().filename().string());
    }
    if (report.per_cube.empty())
        throw DataError("no matching cube pairs between " + clean_dir +
                        " and " + test_dir);
    report.finalize();
    if (!report_prefix.empty()) {
        write_text_atomic(report_prefix + ".txt", report.to_text());
        write_text_atomic(report_prefix + ".csv", report.to_csv());
    }
    return report;
}

// ---------------------------------------------------------------------------
// Gradient verification.
// ---------------------------------------------------------------------------

namespace {

Tensor<double> random_dtensor(const Shape& shape, std::uint64_t seed,
                              double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor<double>(shape, std::move(data));
}

// Forward computes x^2 but backward reports 3x instead of 2x: the harness
// must flag it.
Tensor<double> broken_square(const Tensor<double>& x) {
    auto xn = x.node();
    std::vector<double> out(xn->data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = xn->data[i] * xn->data[i];
    return Tensor<double>::from_node(detail::make_result<double>(
        xn->shape, std::move(out), {xn},
        [xn](detail::Node<double>& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += self.grad[i] * 3.0 * xn->data[i];
        }));
}

}  // namespace

bool GradcheckReport::passed() const {
    for (const auto& e : entries)
        if (!(e.max_rel_err < threshold)) return false;
    return true;
}

std::string GradcheckReport::to_text() const {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3);
    for (const auto& e : entries)
        os << std::setw(22) << std::left << e.name << " "
           << e.max_rel_err << "  "
           << (e.max_rel_err < threshold ? "ok" : "FAIL") << "\n";
    os << (passed() ? "gradcheck: all components below " : "gradcheck: FAILED at ")
       << threshold << "\n";
    return os.str();
}

GradcheckReport run_gradcheck(bool corrupt_fixture) {
    GradcheckReport report;
    const double eps = 1e-5;
    auto check = [&](const std::string& name,
                     const std::function<Tensor<double>(const Tensor<double>&)>& f,
                     const Tensor<double>& x) {
        report.entries.push_back({name, grad_check<double>(f, x, eps)});
    };

    auto a = random_dtensor({3, 4}, 1);
    auto b = random_dtensor({3, 4}, 2);
    auto m = random_dtensor({4, 5}, 3);
    check("add", [&](const Tensor<double>& x) {
        return mean_all(add(x, b));
    }, a);
    check("sub", [&](const Tensor<double>& x) {
        return mean_all(sub(x, b));
    }, a);
    check("mul", [&](const Tensor<double>& x) {
        return mean_all(mul(x, b));
    }, a);
    check("scale", [&](const Tensor<double>& x) {
        return mean_all(scale(x, 1.7));
    }, a);
    check("broadcast-add", [&](const Tensor<double>& x) {
        return mean_all(add(a, x));
    }, random_dtensor({4}, 4));
    check("matmul", [&](const Tensor<double>& x) {
        return mean_all(matmul(x, m));
    }, a);
    check("softmax", [&](const Tensor<double>& x) {
        return mean_all(mul(softmax(x, 1), b));
    }, a);
    check("layer_norm", [&](const Tensor<double>& x) {
        return mean_all(mul(
            layer_norm(x, random_dtensor({4}, 5), random_dtensor({4}, 6), 1e-5),
            b));
    }, a);
    check("gelu", [&](const Tensor<double>& x) {
        return mean_all(gelu(x));
    }, a);
    check("gather", [&](const Tensor<double>& x) {
        auto idx = std::make_shared<std::vector<std::int64_t>>(
            std::vector<std::int64_t>{0, 5, 5, 3, 11, 7});
        return mean_all(mul(gather(x, idx, Shape{6}),
                            random_dtensor({6}, 7)));
    }, a);
    check("permute", [&](const Tensor<double>& x) {
        return mean_all(mul(permute(x, {1, 0}), random_dtensor({4, 3}, 8)));
    }, a);
    check("conv2d_3x3", [&](const Tensor<double>& x) {
        return mean_all(conv2d_3x3(x, random_dtensor({3, 3, 2, 3}, 9),
                                   random_dtensor({3}, 10)));
    }, random_dtensor({5, 6, 2}, 11));
    check("window_partition", [&](const Tensor<double>& x) {
        return mean_all(mul(window_partition(x, 2),
                            random_dtensor({4, 4, 2}, 12)));
    }, random_dtensor({4, 4, 2}, 13));
    check("cyclic_shift", [&](const Tensor<double>& x) {
        return mean_all(mul(cyclic_shift(x, 1, -2),
                            random_dtensor({4, 4, 2}, 14)));
    }, random_dtensor({4, 4, 2}, 15));

    // Attention stages and the end-to-end desk network.
    SstConfig desk;
    desk.bands = 4;
    desk.channels = 16;
    desk.rssb_count = 1;
    desk.sstl_per_rssb = 2;
    desk.heads = 2;
    desk.window = 4;
    desk.mlp_ratio = 2.0;
    auto model = SstModel<double>::init(desk, 77);
    Rng brng(78);
    for (auto& [name, t] : model.params)
        if (name.ends_with("bias_table"))
            for (auto& v : t.mutable_data()) v = brng.uniform(-0.3, 0.3);
    // The final conv starts at zero by design; give it mass here so the
    // end-to-end check exercises the whole trunk, not just the skip path.
    for (auto& v : model.param("tail.conv2.w").mutable_data())
        v = brng.uniform(-0.1, 0.1);
    auto input = random_dtensor({8, 8, 4}, 79, 0.0, 1.0);

    check("nlsa", [&](const Tensor<double>& x) {
        auto p = model.sstl_params(0, 0);
        return mean_all(nlsa_forward(window_partition(x, 4),
                                     p.stages[0], desk.heads));
    }, random_dtensor({8, 8, 16}, 80));
    check("gsa", [&](const Tensor<double>& x) {
        auto p = model.sstl_params(0, 0);
        return mean_all(gsa_forward(x, p.stages[1], desk.heads));
    }, random_dtensor({8, 8, 16}, 81));
    check("sstl", [&](const Tensor<double>& x) {
        return mean_all(sstl_forward(x, model.sstl_params(0, 1), desk, true));
    }, random_dtensor({8, 8, 16}, 82));
    check("sst-end-to-end", [&](const Tensor<double>& x) {
        return mean_all(sst_forward(model, x));
    }, input);

    if (corrupt_fixture)
        check("corrupted-fixture", [&](const Tensor<double>& x) {
            return mean_all(broken_square(x));
        }, a);
    return report;
}

void run_render(const std::string& input_path, std::int64_t red_band,
                std::int64_t green_band, std::int64_t blue_band,
                const std::string& output_path) {
    const HsiCube cube = load_cube(input_path);
    const auto rgb = pseudo_color(cube, red_band, green_band, blue_band);
    const std::string tmp = output_path + ".tmp";
    write_ppm(tmp, rgb, cube.width, cube.height);
    fs::rename(tmp, output_path);
}

}  // namespace sst
