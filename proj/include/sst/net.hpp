#pragma once

// The spatial-spectral Transformer: window partition/reverse, shifted
// window spatial attention with relative position bias, global spectral
// (channel) attention, the pre-norm Transformer layer built from them,
// residual blocks, the full network, and exact parameter/MAC accounting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sst/errors.hpp"
#include "sst/hsi.hpp"
#include "sst/optim.hpp"
#include "sst/tensor.hpp"

namespace sst {

enum class AttentionOrder {
    nlsa_gsa,   // spatial then spectral (default)
    gsa_nlsa,
    nlsa_only,
    gsa_only,
    nlsa_nlsa,
    gsa_gsa,
};

inline std::string attention_order_name(AttentionOrder o) {
    switch (o) {
        case AttentionOrder::nlsa_gsa: return "nlsa-gsa";
        case AttentionOrder::gsa_nlsa: return "gsa-nlsa";
        case AttentionOrder::nlsa_only: return "nlsa-only";
        case AttentionOrder::gsa_only: return "gsa-only";
        case AttentionOrder::nlsa_nlsa: return "nlsa-nlsa";
        case AttentionOrder::gsa_gsa: return "gsa-gsa";
    }
    return "unknown";
}

inline AttentionOrder attention_order_from_name(const std::string& name) {
    static const std::map<std::string, AttentionOrder> table = {
        {"nlsa-gsa", AttentionOrder::nlsa_gsa},
        {"gsa-nlsa", AttentionOrder::gsa_nlsa},
        {"nlsa-only", AttentionOrder::nlsa_only},
        {"gsa-only", AttentionOrder::gsa_only},
        {"nlsa-nlsa", AttentionOrder::nlsa_nlsa},
        {"gsa-gsa", AttentionOrder::gsa_gsa},
    };
    const auto it = table.find(name);
    if (it == table.end())
        throw ParameterError("unknown attention order: " + name);
    return it->second;
}

// Stage layout for a given order: true = spatial (windowed), false =
// spectral (channel).
inline std::vector<bool> attention_stages(AttentionOrder o) {
    switch (o) {
        case AttentionOrder::nlsa_gsa: return {true, false};
        case AttentionOrder::gsa_nlsa: return {false, true};
        case AttentionOrder::nlsa_only: return {true};
        case AttentionOrder::gsa_only: return {false};
        case AttentionOrder::nlsa_nlsa: return {true, true};
        case AttentionOrder::gsa_gsa: return {false, false};
    }
    return {true, false};
}

struct SstConfig {
    std::int64_t bands = 31;
    std::int64_t channels = 96;
    std::int64_t rssb_count = 4;
    std::int64_t sstl_per_rssb = 6;
    std::int64_t heads = 6;
    std::int64_t window = 8;
    double mlp_ratio = 4.0;
    AttentionOrder attention_order = AttentionOrder::nlsa_gsa;
    bool shift_masking = true;

    std::int64_t head_dim() const { return channels / heads; }
    std::int64_t mlp_hidden() const {
        return static_cast<std::int64_t>(std::llround(mlp_ratio * channels));
    }

    void validate() const {
        if (bands < 1 || channels < 1 || rssb_count < 1 || sstl_per_rssb < 1 ||
            heads < 1 || window < 1)
            throw ParameterError("all architecture counts must be positive");
        if (channels % heads != 0)
            throw ParameterError("channels (" + std::to_string(channels) +
                                 ") must be divisible by heads (" +
                                 std::to_string(heads) + ")");
        if (mlp_ratio <= 0.0) throw ParameterError("mlp_ratio must be positive");
    }

    static SstConfig desk_scale(std::int64_t bands = 8) {
        SstConfig c;
        c.bands = bands;
        c.channels = 16;
        c.rssb_count = 1;
        c.sstl_per_rssb = 2;
        c.heads = 2;
        c.window = 4;
        return c;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "bands " << bands << "\nchannels " << channels << "\nrssb_count "
           << rssb_count << "\nsstl_per_rssb " << sstl_per_rssb << "\nheads "
           << heads << "\nwindow " << window << "\nmlp_ratio " << mlp_ratio
           << "\nattention_order " << attention_order_name(attention_order)
           << "\nshift_masking " << (shift_masking ? 1 : 0) << "\n";
        return os.str();
    }

    static SstConfig from_text(const std::string& text) {
        SstConfig c;
        std::istringstream is(text);
        std::string key;
        while (is >> key) {
            if (key == "bands") is >> c.bands;
            else if (key == "channels") is >> c.channels;
            else if (key == "rssb_count") is >> c.rssb_count;
            else if (key == "sstl_per_rssb") is >> c.sstl_per_rssb;
            else if (key == "heads") is >> c.heads;
            else if (key == "window") is >> c.window;
            else if (key == "mlp_ratio") is >> c.mlp_ratio;
            else if (key == "attention_order") {
                std::string v;
                is >> v;
                c.attention_order = attention_order_from_name(v);
            } else if (key == "shift_masking") {
                int v;
                is >> v;
                c.shift_masking = v != 0;
            } else throw ParameterError("unknown config key: " + key);
        }
        return c;
    }
};

// ---------------------------------------------------------------------------
// Window machinery.
// ---------------------------------------------------------------------------

// H x W x C -> (HW/M^2) windows of M^2 x C, row-major window order and
// row-major tokens within each window.
template <typename S>
Tensor<S> window_partition(const Tensor<S>& x, std::int64_t m) {
    if (x.rank() != 3)
        throw DimensionError("window_partition expects HxWxC features");
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (h % m != 0 || w % m != 0)
        throw ContractError("window_partition: " + std::to_string(h) + "x" +
                            std::to_string(w) + " not divisible by window " +
                            std::to_string(m));
    const std::int64_t wy = h / m, wx = w / m;
    auto idx = std::make_shared<std::vector<std::int64_t>>(h * w * c);
    std::int64_t out = 0;
    for (std::int64_t gy = 0; gy < wy; ++gy)
        for (std::int64_t gx = 0; gx < wx; ++gx)
            for (std::int64_t ty = 0; ty < m; ++ty)
                for (std::int64_t tx = 0; tx < m; ++tx)
                    for (std::int64_t ch = 0; ch < c; ++ch)
                        (*idx)[out++] =
                            ((gy * m + ty) * w + gx * m + tx) * c + ch;
    return gather(x, idx, Shape{wy * wx, m * m, c});
}

// Exact inverse of window_partition.
template <typename S>
Tensor<S> window_reverse(const Tensor<S>& patches, std::int64_t h,
                         std::int64_t w, std::int64_t m) {
    if (patches.rank() != 3 || patches.dim(1) != m * m)
        throw DimensionError("window_reverse expects I x M^2 x C patches");
    const std::int64_t c = patches.dim(2);
    if (h % m != 0 || w % m != 0 || patches.dim(0) != (h / m) * (w / m))
        throw DimensionError("window_reverse: " +
                             std::to_string(patches.dim(0)) +
                             " windows inconsistent with " + std::to_string(h) +
                             "x" + std::to_string(w) + ", M=" +
                             std::to_string(m));
    const std::int64_t wx = w / m;
    auto idx = std::make_shared<std::vector<std::int64_t>>(h * w * c);
    std::int64_t out = 0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const std::int64_t win = (y / m) * wx + (x / m);
                const std::int64_t tok = (y % m) * m + (x % m);
                (*idx)[out++] = (win * m * m + tok) * c + ch;
            }
    return gather(patches, idx, Shape{h, w, c});
}

// Toroidal roll by (dy, dx); inverse is (-dy, -dx).
template <typename S>
Tensor<S> cyclic_shift(const Tensor<S>& x, std::int64_t dy, std::int64_t dx) {
    if (x.rank() != 3)
        throw DimensionError("cyclic_shift expects HxWxC features");
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    auto mod = [](std::int64_t a, std::int64_t n) { return ((a % n) + n) % n; };
    auto idx = std::make_shared<std::vector<std::int64_t>>(h * w * c);
    std::int64_t out = 0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x2 = 0; x2 < w; ++x2)
            for (std::int64_t ch = 0; ch < c; ++ch)
                (*idx)[out++] =
                    (mod(y - dy, h) * w + mod(x2 - dx, w)) * c + ch;
    return gather(x, idx, x.shape());
}

// Reflect-pad (mirror, edge not repeated) bottom/right to the target size.
template <typename S>
Tensor<S> reflect_pad_to(const Tensor<S>& x, std::int64_t th, std::int64_t tw) {
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (th == h && tw == w) return x;
    auto reflect = [](std::int64_t i, std::int64_t n) {
        if (i < n) return i;
        const std::int64_t r = 2 * n - 2 - i;
        return r >= 0 ? r : std::int64_t{0};
    };
    auto idx = std::make_shared<std::vector<std::int64_t>>(th * tw * c);
    std::int64_t out = 0;
    for (std::int64_t y = 0; y < th; ++y)
        for (std::int64_t x2 = 0; x2 < tw; ++x2)
            for (std::int64_t ch = 0; ch < c; ++ch)
                (*idx)[out++] = (reflect(y, h) * w + reflect(x2, w)) * c + ch;
    return gather(x, idx, Shape{th, tw, c});
}

template <typename S>
Tensor<S> crop_to(const Tensor<S>& x, std::int64_t th, std::int64_t tw) {
    const std::int64_t w = x.dim(1), c = x.dim(2);
    if (th == x.dim(0) && tw == w) return x;
    auto idx = std::make_shared<std::vector<std::int64_t>>(th * tw * c);
    std::int64_t out = 0;
    for (std::int64_t y = 0; y < th; ++y)
        for (std::int64_t x2 = 0; x2 < tw; ++x2)
            for (std::int64_t ch = 0; ch < c; ++ch)
                (*idx)[out++] = (y * w + x2) * c + ch;
    return gather(x, idx, Shape{th, tw, c});
}

// ---------------------------------------------------------------------------
// Relative position bias: per-head table of (2M-1)^2 entries, looked up by
// the relative displacement of each token pair. Equal displacement, equal
// bias, by construction.
// ---------------------------------------------------------------------------

inline std::vector<std::int64_t> relative_position_index(std::int64_t m) {
    const std::int64_t tokens = m * m;
    std::vector<std::int64_t> idx(tokens * tokens);
    for (std::int64_t p = 0; p < tokens; ++p) {
        const std::int64_t py = p / m, px = p % m;
        for (std::int64_t q = 0; q < tokens; ++q) {
            const std::int64_t qy = q / m, qx = q % m;
            const std::int64_t dy = py - qy + m - 1;
            const std::int64_t dx = px - qx + m - 1;
            idx[p * tokens + q] = dy * (2 * m - 1) + dx;
        }
    }
    return idx;
}

// Expands a (N, (2M-1)^2) table into the (N, M^2, M^2) bias added before
// softmax.
template <typename S>
Tensor<S> relative_bias_matrix(const Tensor<S>& table, std::int64_t m) {
    const std::int64_t heads = table.dim(0);
    const std::int64_t span = (2 * m - 1) * (2 * m - 1);
    if (table.dim(1) != span)
        throw DimensionError("relative bias table must have (2M-1)^2 entries");
    const auto rel = relative_position_index(m);
    const std::int64_t tokens = m * m;
    auto idx = std::make_shared<std::vector<std::int64_t>>(heads * tokens * tokens);
    std::int64_t out = 0;
    for (std::int64_t hd = 0; hd < heads; ++hd)
        for (std::int64_t pq = 0; pq < tokens * tokens; ++pq)
            (*idx)[out++] = hd * span + rel[pq];
    return gather(table, idx, Shape{heads, tokens, tokens});
}

// Cross-boundary mask for shifted windows (shift is applied as a roll by
// (-s,-s) before partitioning). Pairs of tokens that came from different
// pre-shift regions get a large negative additive bias.
template <typename S>
Tensor<S> shifted_window_mask(std::int64_t h, std::int64_t w, std::int64_t m,
                              std::int64_t s) {
    const std::int64_t wy = h / m, wx = w / m;
    const std::int64_t tokens = m * m;
    // Region ids in shifted coordinates.
    auto region = [m, s](std::int64_t i, std::int64_t n) {
        if (i < n - m) return 0;
        if (i < n - s) return 1;
        return 2;
    };
    std::vector<int> ids(h * w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            ids[y * w + x] = region(y, h) * 3 + region(x, w);
    const S neg = static_cast<S>(-1e9);
    std::vector<S> mask(wy * wx * tokens * tokens, S(0));
    for (std::int64_t gy = 0; gy < wy; ++gy) {
        for (std::int64_t gx = 0; gx < wx; ++gx) {
            const std::int64_t win = gy * wx + gx;
            for (std::int64_t p = 0; p < tokens; ++p) {
                const int idp =
                    ids[(gy * m + p / m) * w + gx * m + p % m];
                for (std::int64_t q = 0; q < tokens; ++q) {
                    const int idq =
                        ids[(gy * m + q / m) * w + gx * m + q % m];
                    if (idp != idq)
                        mask[(win * tokens + p) * tokens + q] = neg;
                }
            }
        }
    }
    return Tensor<S>(Shape{wy * wx, 1, tokens, tokens}, std::move(mask));
}

// ---------------------------------------------------------------------------
// Parameter registry.
// ---------------------------------------------------------------------------

template <typename S>
struct AttnStageParams {
    bool spatial = true;
    Tensor<S> wq, wk, wv, wo;
    Tensor<S> bq, bk, bv, bo;
    Tensor<S> bias_table;  // spatial stages only
};

template <typename S>
struct SstlParams {
    Tensor<S> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    std::vector<AttnStageParams<S>> stages;
    Tensor<S> mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Named shapes, in checkpoint order.
inline std::vector<std::pair<std::string, Shape>> parameter_shapes(
    const SstConfig& cfg) {
    cfg.validate();
    const std::int64_t c = cfg.channels, b = cfg.bands;
    const std::int64_t span = (2 * cfg.window - 1) * (2 * cfg.window - 1);
    const std::int64_t hid = cfg.mlp_hidden();
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("head.conv.w", Shape{3, 3, b, c});
    out.emplace_back("head.conv.b", Shape{c});
    const auto stages = attention_stages(cfg.attention_order);
    for (std::int64_t t = 0; t < cfg.rssb_count; ++t) {
        const std::string bp = "rssb" + std::to_string(t) + ".";
        for (std::int64_t l = 0; l < cfg.sstl_per_rssb; ++l) {
            const std::string lp = bp + "sstl" + std::to_string(l) + ".";
            out.emplace_back(lp + "ln1.gamma", Shape{c});
            out.emplace_back(lp + "ln1.beta", Shape{c});
            for (std::size_t si = 0; si < stages.size(); ++si) {
                const std::string sp = lp + "stage" + std::to_string(si) + ".";
                for (const char* nm : {"wq", "wk", "wv", "wo"})
                    out.emplace_back(sp + nm, Shape{c, c});
                for (const char* nm : {"bq", "bk", "bv", "bo"})
                    out.emplace_back(sp + nm, Shape{c});
                if (stages[si])
                    out.emplace_back(sp + "bias_table", Shape{cfg.heads, span});
            }
            out.emplace_back(lp + "ln2.gamma", Shape{c});
            out.emplace_back(lp + "ln2.beta", Shape{c});
            out.emplace_back(lp + "mlp.w1", Shape{c, hid});
            out.emplace_back(lp + "mlp.b1", Shape{hid});
            out.emplace_back(lp + "mlp.w2", Shape{hid, c});
            out.emplace_back(lp + "mlp.b2", Shape{c});
        }
        out.emplace_back(bp + "conv.w", Shape{3, 3, c, c});
        out.emplace_back(bp + "conv.b", Shape{c});
    }
    out.emplace_back("tail.conv1.w", Shape{3, 3, c, c});
    out.emplace_back("tail.conv1.b", Shape{c});
    out.emplace_back("tail.conv2.w", Shape{3, 3, c, b});
    out.emplace_back("tail.conv2.b", Shape{b});
    return out;
}

template <typename S>
struct SstModel {
    SstConfig config;
    std::vector<std::pair<std::string, Tensor<S>>> params;

    Tensor<S>& param(const std::string& name) {
        for (auto& [n, t] : params)
            if (n == name) return t;
        throw ParameterError("no such parameter: " + name);
    }
    const Tensor<S>& param(const std::string& name) const {
        return const_cast<SstModel*>(this)->param(name);
    }

    std::vector<Tensor<S>> param_list() const {
        std::vector<Tensor<S>> out;
        out.reserve(params.size());
        for (const auto& [n, t] : params) out.push_back(t);
        return out;
    }

    std::int64_t parameter_count() const {
        std::int64_t total = 0;
        for (const auto& [n, t] : params) total += t.size();
        return total;
    }

    void zero_grad() {
        for (auto& [n, t] : params) t.zero_grad();
    }

    // Xavier weights, unit LayerNorm gains, zero biases and bias tables.
    // The final projection conv starts at zero so the untrained network is
    // the identity map on its input: with the global residual, training
    // improves on the noisy input from the first step instead of first
    // unlearning a random correction.
    static SstModel init(const SstConfig& cfg, std::uint64_t seed) {
        SstModel m;
        m.config = cfg;
        std::uint64_t stream = 0;
        for (auto& [name, shape] : parameter_shapes(cfg)) {
            Tensor<S> t;
            const bool is_gain = name.ends_with("gamma");
            if (name == "tail.conv2.w") {
                t = Tensor<S>::zeros(shape, true);
            } else if (shape.size() >= 2 && !name.ends_with("bias_table")) {
                t = xavier_init<S>(shape, derive_seed(seed, stream));
            } else if (is_gain) {
                t = Tensor<S>::full(shape, S(1), true);
            } else {
                t = Tensor<S>::zeros(shape, true);
            }
            ++stream;
            m.params.emplace_back(name, std::move(t));
        }
        return m;
    }

    SstlParams<S> sstl_params(std::int64_t t, std::int64_t l) const {
        const std::string lp =
            "rssb" + std::to_string(t) + ".sstl" + std::to_string(l) + ".";
        SstlParams<S> p;
        p.ln1_gamma = param(lp + "ln1.gamma");
        p.ln1_beta = param(lp + "ln1.beta");
        p.ln2_gamma = param(lp + "ln2.gamma");
        p.ln2_beta = param(lp + "ln2.beta");
        p.mlp_w1 = param(lp + "mlp.w1");
        p.mlp_b1 = param(lp + "mlp.b1");
        p.mlp_w2 = param(lp + "mlp.w2");
        p.mlp_b2 = param(lp + "mlp.b2");
        const auto stages = attention_stages(config.attention_order);
        for (std::size_t si = 0; si < stages.size(); ++si) {
            const std::string sp = lp + "stage" + std::to_string(si) + ".";
            AttnStageParams<S> st;
            st.spatial = stages[si];
            st.wq = param(sp + "wq");
            st.wk = param(sp + "wk");
            st.wv = param(sp + "wv");
            st.wo = param(sp + "wo");
            st.bq = param(sp + "bq");
            st.bk = param(sp + "bk");
            st.bv = param(sp + "bv");
            st.bo = param(sp + "bo");
            if (stages[si]) st.bias_table = param(sp + "bias_table");
            p.stages.push_back(std::move(st));
        }
        return p;
    }
};

// ---------------------------------------------------------------------------
// Attention stages.
// ---------------------------------------------------------------------------

// Windowed multi-head attention over I windows of M^2 tokens. `mask`, when
// valid, is an (I, 1, M^2, M^2) additive pre-softmax term.
template <typename S>
Tensor<S> nlsa_forward(const Tensor<S>& tokens, const AttnStageParams<S>& p,
                       std::int64_t heads, const Tensor<S>& mask = {}) {
    const std::int64_t nwin = tokens.dim(0);
    const std::int64_t ntok = tokens.dim(1);
    const std::int64_t c = tokens.dim(2);
    if (c % heads != 0)
        throw DimensionError("token channels not divisible by head count");
    const std::int64_t d = c / heads;
    const std::int64_t m = static_cast<std::int64_t>(std::llround(std::sqrt(
        static_cast<double>(ntok))));

    auto project = [&](const Tensor<S>& w, const Tensor<S>& b) {
        auto y = add(matmul(tokens, w), b);  // (I, M^2, C)
        // (I, M^2, N, d) -> (I, N, M^2, d)
        return permute(reshape(y, Shape{nwin, ntok, heads, d}), {0, 2, 1, 3});
    };
    auto q = project(p.wq, p.bq);
    auto k = project(p.wk, p.bk);
    auto v = project(p.wv, p.bv);

    auto scores = scale(matmul(q, transpose_last2(k)),
                        static_cast<S>(1.0 / std::sqrt(static_cast<double>(d))));
    scores = add(scores, relative_bias_matrix(p.bias_table, m));
    if (mask.valid()) {
        if (mask.dim(0) != nwin || mask.dim(2) != ntok || mask.dim(3) != ntok)
            throw DimensionError("attention mask shape " +
                                 shape_str(mask.shape()) +
                                 " inconsistent with windows");
        scores = add(scores, mask);
    }
    auto attn = softmax(scores, 3);
    auto out = matmul(attn, v);  // (I, N, M^2, d)
    out = reshape(permute(out, {0, 2, 1, 3}), Shape{nwin, ntok, c});
    return add(matmul(out, p.wo), p.bo);
}

// Channel attention: per head, a d x d mixing matrix over channel blocks,
// linear in pixel count.
template <typename S>
Tensor<S> gsa_forward(const Tensor<S>& x, const AttnStageParams<S>& p,
                      std::int64_t heads) {
    const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const std::int64_t hw = h * w;
    const std::int64_t d = c / heads;
    auto zt = transpose_last2(reshape(x, Shape{hw, c}));  // (C, HW)

    auto project = [&](const Tensor<S>& wt, const Tensor<S>& b) {
        auto y = add(matmul(wt, zt), reshape(b, Shape{c, 1}));
        return reshape(y, Shape{heads, d, hw});
    };
    auto q = project(p.wq, p.bq);
    auto k = project(p.wk, p.bk);
    auto v = project(p.wv, p.bv);

    auto attn = softmax(
        scale(matmul(q, transpose_last2(k)),
              static_cast<S>(1.0 / std::sqrt(static_cast<double>(d)))),
        2);                       // (N, d, d)
    auto out = matmul(attn, v);   // (N, d, HW)
    out = reshape(out, Shape{c, hw});
    out = add(matmul(p.wo, out), reshape(p.bo, Shape{c, 1}));
    return reshape(transpose_last2(out), Shape{h, w, c});
}

// Window partition -> NLSA -> window reverse, with optional pre-shift and
// cross-boundary masking.
template <typename S>
Tensor<S> spatial_stage(const Tensor<S>& x, const AttnStageParams<S>& p,
                        const SstConfig& cfg, bool shifted) {
    const std::int64_t h = x.dim(0), w = x.dim(1);
    const std::int64_t m = cfg.window;
    const std::int64_t s = m / 2;
    const bool do_shift = shifted && s > 0;
    Tensor<S> feat = do_shift ? cyclic_shift(x, -s, -s) : x;
    Tensor<S> mask;
    if (do_shift && cfg.shift_masking)
        mask = shifted_window_mask<S>(h, w, m, s);
    auto windows = window_partition(feat, m);
    auto attended = nlsa_forward(windows, p, cfg.heads, mask);
    auto merged = window_reverse(attended, h, w, m);
    return do_shift ? cyclic_shift(merged, s, s) : merged;
}

// The composite attention block: stages in config order.
template <typename S>
Tensor<S> ssma_forward(const Tensor<S>& x, const SstlParams<S>& p,
                       const SstConfig& cfg, bool shifted) {
    Tensor<S> z = x;
    for (const auto& stage : p.stages)
        z = stage.spatial ? spatial_stage(z, stage, cfg, shifted)
                          : gsa_forward(z, stage, cfg.heads);
    return z;
}

// Pre-norm Transformer layer: attention and MLP, each with a residual.
template <typename S>
Tensor<S> sstl_forward(const Tensor<S>& x, const SstlParams<S>& p,
                       const SstConfig& cfg, bool shifted) {
    constexpr S kLnEps = static_cast<S>(1e-5);
    auto attn_in = layer_norm(x, p.ln1_gamma, p.ln1_beta, kLnEps);
    auto z = add(ssma_forward(attn_in, p, cfg, shifted), x);

    const std::int64_t h = z.dim(0), w = z.dim(1), c = z.dim(2);
    auto mlp_in = reshape(layer_norm(z, p.ln2_gamma, p.ln2_beta, kLnEps),
                          Shape{h * w, c});
    auto hidden = gelu(add(matmul(mlp_in, p.mlp_w1), p.mlp_b1));
    auto mlp_out = reshape(add(matmul(hidden, p.mlp_w2), p.mlp_b2),
                           Shape{h, w, c});
    return add(mlp_out, z);
}

// L layers (alternating shift, even index unshifted), a 3x3 conv, and the
// block-level skip.
template <typename S>
Tensor<S> rssb_forward(const Tensor<S>& x, const SstModel<S>& model,
                       std::int64_t t) {
    Tensor<S> z = x;
    for (std::int64_t l = 0; l < model.config.sstl_per_rssb; ++l)
        z = sstl_forward(z, model.sstl_params(t, l), model.config, l % 2 == 1);
    const std::string bp = "rssb" + std::to_string(t) + ".";
    z = conv2d_3x3(z, model.param(bp + "conv.w"), model.param(bp + "conv.b"));
    return add(z, x);
}

// Full network on an H x W x B tensor. Non-divisible sizes are
// reflect-padded up to the window multiple and cropped after. The global
// skip adds the noisy input, so the trunk models the noise pattern.
template <typename S>
Tensor<S> sst_forward(const SstModel<S>& model, const Tensor<S>& noisy) {
    const SstConfig& cfg = model.config;
    if (noisy.rank() != 3 || noisy.dim(2) != cfg.bands)
        throw DimensionError("input " + shape_str(noisy.shape()) +
                             " does not match model bands " +
                             std::to_string(cfg.bands));
    const std::int64_t h = noisy.dim(0), w = noisy.dim(1);
    const std::int64_t m = cfg.window;
    const std::int64_t ph = (h + m - 1) / m * m;
    const std::int64_t pw = (w + m - 1) / m * m;
    Tensor<S> y = reflect_pad_to(noisy, ph, pw);

    auto f0 = conv2d_3x3(y, model.param("head.conv.w"), model.param("head.conv.b"));
    Tensor<S> f = f0;
    for (std::int64_t t = 0; t < cfg.rssb_count; ++t)
        f = rssb_forward(f, model, t);
    auto t1 = conv2d_3x3(add(f, f0), model.param("tail.conv1.w"),
                         model.param("tail.conv1.b"));
    auto residual = conv2d_3x3(t1, model.param("tail.conv2.w"),
                               model.param("tail.conv2.b"));
    return crop_to(add(y, residual), h, w);
}

// ---------------------------------------------------------------------------
// Complexity accounting (multiply-accumulates), following the module-level
// cost model: the attention cores contribute M^2*HW*C and C^2*HW terms and
// the whole count is linear in HW at fixed config.
// ---------------------------------------------------------------------------

inline std::int64_t count_flops(const SstConfig& cfg, std::int64_t h,
                                std::int64_t w) {
    cfg.validate();
    if (h % cfg.window != 0 || w % cfg.window != 0)
        throw ParameterError("count_flops expects window-divisible H, W");
    const std::int64_t hw = h * w;
    const std::int64_t c = cfg.channels;
    const std::int64_t m = cfg.window;
    std::int64_t per_sstl = 0;
    for (bool spatial : attention_stages(cfg.attention_order)) {
        per_sstl += 4 * hw * c * c;  // q/k/v/out projections
        per_sstl += spatial ? 2 * m * m * hw * c  // scores + weighted values
                            : 2 * c * c * hw;
    }
    per_sstl += 2 * cfg.mlp_hidden() * hw * c;
    std::int64_t total =
        cfg.rssb_count * cfg.sstl_per_rssb * per_sstl;
    total += cfg.rssb_count * 9 * c * c * hw;          // per-block conv
    total += 9 * cfg.bands * c * hw;                   // head conv
    total += 9 * c * c * hw;                           // tail conv1
    total += 9 * c * cfg.bands * hw;                   // tail conv2
    return total;
}

inline std::int64_t count_params(const SstConfig& cfg) {
    cfg.validate();
    const std::int64_t c = cfg.channels, b = cfg.bands;
    const std::int64_t hid = cfg.mlp_hidden();
    const std::int64_t span = (2 * cfg.window - 1) * (2 * cfg.window - 1);
    std::int64_t per_stage_dense = 4 * c * c + 4 * c;
    std::int64_t per_sstl = 4 * c;  // two LayerNorms
    for (bool spatial : attention_stages(cfg.attention_order)) {
        per_sstl += per_stage_dense;
        if (spatial) per_sstl += cfg.heads * span;
    }
    per_sstl += c * hid + hid + hid * c + c;  // MLP
    std::int64_t total = cfg.rssb_count * (cfg.sstl_per_rssb * per_sstl +
                                           9 * c * c + c);
    total += 9 * b * c + c;  // head conv
    total += 9 * c * c + c;  // tail conv1
    total += 9 * c * b + b;  // tail conv2
    return total;
}

// ---------------------------------------------------------------------------
// Cube adapters and tiled inference.
// ---------------------------------------------------------------------------

// Band-planar cube -> channel-last (H, W, B) tensor.
template <typename S>
Tensor<S> tensor_from_cube(const HsiCube& cube, bool requires_grad = false) {
    const std::int64_t h = cube.height, w = cube.width, b = cube.bands;
    std::vector<S> data(h * w * b);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t bb = 0; bb < b; ++bb)
                data[(y * w + x) * b + bb] =
                    static_cast<S>(cube.at(y, x, bb));
    return Tensor<S>(Shape{h, w, b}, std::move(data), requires_grad);
}

template <typename S>
HsiCube cube_from_tensor(const Tensor<S>& t) {
    const std::int64_t h = t.dim(0), w = t.dim(1), b = t.dim(2);
    HsiCube cube = HsiCube::zeros(h, w, b);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t bb = 0; bb < b; ++bb)
                cube.at(y, x, bb) =
                    static_cast<float>(t.data()[(y * w + x) * b + bb]);
    return cube;
}

template <typename S>
HsiCube denoise_cube(const SstModel<S>& model, const HsiCube& noisy) {
    return cube_from_tensor(sst_forward(model, tensor_from_cube<S>(noisy)));
}

// Tiled inference for large cubes: fixed-size tiles, overlapped and
// uniformly averaged where they meet. Border tiles are aligned inward so
// every tile is full-size when the image allows it.
template <typename S>
HsiCube denoise_tiled(const SstModel<S>& model, const HsiCube& noisy,
                      std::int64_t tile = 64, std::int64_t overlap = 16) {
    const std::int64_t h = noisy.height, w = noisy.width, b = noisy.bands;
    if (h <= tile && w <= tile) return denoise_cube(model, noisy);
    const std::int64_t step = tile - overlap;
    std::vector<double> acc(h * w * b, 0.0);
    std::vector<double> weight(h * w, 0.0);
    auto starts = [&](std::int64_t extent) {
        std::vector<std::int64_t> s;
        for (std::int64_t v = 0;; v += step) {
            if (v + tile >= extent) {
                s.push_back(std::max<std::int64_t>(0, extent - tile));
                break;
            }
            s.push_back(v);
        }
        return s;
    };
    for (std::int64_t y0 : starts(h)) {
        for (std::int64_t x0 : starts(w)) {
            const std::int64_t th = std::min(tile, h - y0);
            const std::int64_t tw = std::min(tile, w - x0);
            HsiCube patch = HsiCube::zeros(th, tw, b);
            patch.value_range = noisy.value_range;
            for (std::int64_t bb = 0; bb < b; ++bb)
                for (std::int64_t y = 0; y < th; ++y)
                    for (std::int64_t x = 0; x < tw; ++x)
                        patch.at(y, x, bb) = noisy.at(y0 + y, x0 + x, bb);
            HsiCube out = denoise_cube(model, patch);
            for (std::int64_t bb = 0; bb < b; ++bb)
                for (std::int64_t y = 0; y < th; ++y)
                    for (std::int64_t x = 0; x < tw; ++x)
                        acc[bb * h * w + (y0 + y) * w + x0 + x] +=
                            out.at(y, x, bb);
            for (std::int64_t y = 0; y < th; ++y)
                for (std::int64_t x = 0; x < tw; ++x)
                    weight[(y0 + y) * w + x0 + x] += 1.0;
        }
    }
    HsiCube result = HsiCube::zeros(h, w, b);
    result.value_range = noisy.value_range;
    for (std::int64_t bb = 0; bb < b; ++bb)
        for (std::int64_t p = 0; p < h * w; ++p)
            result.data[bb * h * w + p] =
                static_cast<float>(acc[bb * h * w + p] / weight[p]);
    return result;
}

}  // namespace sst
