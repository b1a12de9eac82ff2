#pragma once

// Reverse-mode autodiff over dense N-d tensors. Values are immutable once
// produced; a Tensor is a cheap handle onto a graph node. Gradients
// accumulate across backward() calls until the caller zeroes them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sst/errors.hpp"

namespace sst {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                           std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline Shape row_major_strides(const Shape& s) {
    Shape st(s.size(), 1);
    for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

namespace detail {

template <typename Scalar>
struct Node {
    Shape shape;
    std::vector<Scalar> data;
    bool requires_grad = false;
    std::vector<Scalar> grad;  // sized lazily, same length as data
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad, accumulates into each parent's grad.
    std::function<void(Node&)> backprop;

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

    std::vector<Scalar>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), Scalar(0));
        return grad;
    }
};

}  // namespace detail

template <typename Scalar>
class Tensor {
public:
    using Node = detail::Node<Scalar>;

    Tensor() = default;

    Tensor(Shape shape, std::vector<Scalar> data, bool requires_grad = false) {
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
            throw DimensionError("tensor data length " +
                                 std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        node_ = std::make_shared<Node>();
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<Scalar>(n, Scalar(0)),
                      requires_grad);
    }

    static Tensor full(Shape shape, Scalar value, bool requires_grad = false) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<Scalar>(n, value),
                      requires_grad);
    }

    static Tensor scalar(Scalar value, bool requires_grad = false) {
        return Tensor(Shape{1}, std::vector<Scalar>{value}, requires_grad);
    }

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
    std::int64_t size() const { return node_->size(); }
    std::int64_t dim(std::int64_t i) const { return node_->shape[i]; }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<Scalar>& data() const { return node_->data; }
    // Mutation is for leaves only (parameter updates); interior nodes are
    // never touched after construction.
    std::vector<Scalar>& mutable_data() { return node_->data; }

    const std::vector<Scalar>& grad() const {
        const_cast<Node*>(node_.get())->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->data.size(), Scalar(0)); }

    Scalar item() const {
        if (size() != 1)
            throw ContractError("item() on non-scalar tensor " +
                                shape_str(shape()));
        return node_->data[0];
    }

    std::shared_ptr<Node> node() const { return node_; }

    static Tensor from_node(std::shared_ptr<Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

template <typename Scalar>
std::shared_ptr<Node<Scalar>> make_result(
    Shape shape, std::vector<Scalar> data,
    std::vector<std::shared_ptr<Node<Scalar>>> parents,
    std::function<void(Node<Scalar>&)> backprop) {
    auto n = std::make_shared<Node<Scalar>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->parents = std::move(parents);
    bool req = false;
    for (const auto& p : n->parents) req = req || p->requires_grad;
    n->requires_grad = req;
    if (req) n->backprop = std::move(backprop);
    return n;
}

// Broadcast helper: strides into `in` for iterating the broadcast output
// shape; 0 on broadcast axes.
inline Shape broadcast_strides(const Shape& in, const Shape& out) {
    Shape in_strides = row_major_strides(in);
    Shape res(out.size(), 0);
    const std::size_t off = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] == out[off + i])
            res[off + i] = in_strides[i];
        else if (in[i] == 1)
            res[off + i] = 0;
        else
            throw DimensionError("shapes " + shape_str(in) + " and " +
                                 shape_str(out) + " do not broadcast");
    }
    return res;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw DimensionError("shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " do not broadcast");
        out[i] = std::max(da, db);
    }
    return out;
}

// Visits every output index, handing (out_linear, a_linear, b_linear).
template <typename F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb,
                        F&& f) {
    const std::int64_t n = shape_numel(out);
    const std::size_t r = out.size();
    Shape idx(r, 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t lin = 0; lin < n; ++lin) {
        f(lin, ia, ib);
        for (std::int64_t d = static_cast<std::int64_t>(r) - 1; d >= 0; --d) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with numpy-style broadcasting.
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar, typename Fwd, typename BwdA, typename BwdB>
Tensor<Scalar> binary_op(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                         Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const std::int64_t n = shape_numel(out_shape);
    std::vector<Scalar> out(n);
    auto an = a.node();
    auto bn = b.node();
    if (a.shape() == b.shape()) {
        for (std::int64_t i = 0; i < n; ++i)
            out[i] = fwd(an->data[i], bn->data[i]);
    } else {
        const Shape sa = broadcast_strides(a.shape(), out_shape);
        const Shape sb = broadcast_strides(b.shape(), out_shape);
        for_each_broadcast(out_shape, sa, sb,
                           [&](std::int64_t lo, std::int64_t la, std::int64_t lb) {
                               out[lo] = fwd(an->data[la], bn->data[lb]);
                           });
    }
    auto backprop = [an, bn, out_shape, bwd_a, bwd_b](Node<Scalar>& self) {
        const bool same = an->shape == bn->shape && an->shape == out_shape;
        if (same) {
            const std::int64_t n2 = self.size();
            if (an->requires_grad) {
                auto& ga = an->ensure_grad();
                for (std::int64_t i = 0; i < n2; ++i)
                    ga[i] += bwd_a(self.grad[i], an->data[i], bn->data[i]);
            }
            if (bn->requires_grad) {
                auto& gb = bn->ensure_grad();
                for (std::int64_t i = 0; i < n2; ++i)
                    gb[i] += bwd_b(self.grad[i], an->data[i], bn->data[i]);
            }
            return;
        }
        const Shape sa = broadcast_strides(an->shape, out_shape);
        const Shape sb = broadcast_strides(bn->shape, out_shape);
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for_each_broadcast(out_shape, sa, sb,
                           [&](std::int64_t lo, std::int64_t la, std::int64_t lb) {
                               if (an->requires_grad)
                                   an->grad[la] += bwd_a(self.grad[lo], an->data[la], bn->data[lb]);
                               if (bn->requires_grad)
                                   bn->grad[lb] += bwd_b(self.grad[lo], an->data[la], bn->data[lb]);
                           });
    };
    return Tensor<Scalar>::from_node(
        make_result<Scalar>(out_shape, std::move(out), {an, bn}, backprop));
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, [](S x, S y) { return x + y; },
        [](S g, S, S) { return g; }, [](S g, S, S) { return g; });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, [](S x, S y) { return x - y; },
        [](S g, S, S) { return g; }, [](S g, S, S) { return -g; });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return detail::binary_op(
        a, b, [](S x, S y) { return x * y; },
        [](S g, S, S y) { return g * y; }, [](S g, S x, S) { return g * x; });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
    auto an = a.node();
    std::vector<S> out(an->data);
    for (auto& v : out) v *= factor;
    auto backprop = [an, factor](detail::Node<S>& self) {
        auto& g = an->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i)
            g[i] += self.grad[i] * factor;
    };
    return Tensor<S>::from_node(
        detail::make_result<S>(an->shape, std::move(out), {an}, backprop));
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S value) {
    auto an = a.node();
    std::vector<S> out(an->data);
    for (auto& v : out) v += value;
    auto backprop = [an](detail::Node<S>& self) {
        auto& g = an->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
    };
    return Tensor<S>::from_node(
        detail::make_result<S>(an->shape, std::move(out), {an}, backprop));
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
    auto an = a.node();
    S s = 0;
    for (S v : an->data) s += v;
    auto backprop = [an](detail::Node<S>& self) {
        auto& g = an->ensure_grad();
        const S go = self.grad[0];
        for (auto& v : g) v += go;
    };
    return Tensor<S>::from_node(
        detail::make_result<S>(Shape{1}, std::vector<S>{s}, {an}, backprop));
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
    return scale(sum_all(a), S(1) / static_cast<S>(a.size()));
}

// ---------------------------------------------------------------------------
// Gather: out[i] = in[index[i]]. Indices may repeat; backward scatter-adds.
// Window partition/reverse, cyclic shifts, permutes, pads and relative-bias
// lookup are all instances.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> gather(const Tensor<S>& a,
                 std::shared_ptr<const std::vector<std::int64_t>> index,
                 Shape out_shape) {
    if (shape_numel(out_shape) != static_cast<std::int64_t>(index->size()))
        throw DimensionError("gather index count " +
                             std::to_string(index->size()) +
                             " does not match shape " + shape_str(out_shape));
    auto an = a.node();
    const std::int64_t in_n = an->size();
    std::vector<S> out(index->size());
    for (std::size_t i = 0; i < index->size(); ++i) {
        const auto j = (*index)[i];
        if (j < 0 || j >= in_n)
            throw ParameterError("gather index " + std::to_string(j) +
                                 " out of range for size " +
                                 std::to_string(in_n));
        out[i] = an->data[j];
    }
    auto backprop = [an, index](detail::Node<S>& self) {
        auto& g = an->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i)
            g[(*index)[i]] += self.grad[i];
    };
    return Tensor<S>::from_node(detail::make_result<S>(
        std::move(out_shape), std::move(out), {an}, backprop));
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.size())
        throw DimensionError("cannot reshape " + shape_str(a.shape()) +
                             " to " + shape_str(new_shape));
    auto an = a.node();
    std::vector<S> out(an->data);
    auto backprop = [an](detail::Node<S>& self) {
        auto& g = an->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i) g[i] += self.grad[i];
    };
    return Tensor<S>::from_node(detail::make_result<S>(
        std::move(new_shape), std::move(out), {an}, backprop));
}

template <typename S>
Tensor<S> permute(const Tensor<S>& a, const std::vector<int>& axes) {
    const auto r = a.rank();
    if (static_cast<std::int64_t>(axes.size()) != r)
        throw ParameterError("permute axes rank mismatch");
    Shape out_shape(r);
    for (std::int64_t i = 0; i < r; ++i) out_shape[i] = a.dim(axes[i]);
    const Shape in_strides = row_major_strides(a.shape());
    auto idx = std::make_shared<std::vector<std::int64_t>>(a.size());
    Shape pos(r, 0);
    for (std::int64_t lin = 0; lin < a.size(); ++lin) {
        std::int64_t src = 0;
        for (std::int64_t d = 0; d < r; ++d) src += pos[d] * in_strides[axes[d]];
        (*idx)[lin] = src;
        for (std::int64_t d = r - 1; d >= 0; --d) {
            if (++pos[d] < out_shape[d]) break;
            pos[d] = 0;
        }
    }
    return gather(a, idx, out_shape);
}

template <typename S>
Tensor<S> transpose_last2(const Tensor<S>& a) {
    std::vector<int> axes(a.rank());
    std::iota(axes.begin(), axes.end(), 0);
    std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
    return permute(a, axes);
}

// ---------------------------------------------------------------------------
// Matmul, batched over leading dims; a rank-2 operand broadcasts across the
// other side's batch.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;
    if (a.rank() < 2 || b.rank() < 2)
        throw DimensionError("matmul needs rank >= 2, got " +
                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::int64_t m = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
    const std::int64_t k2 = b.dim(b.rank() - 2), n = b.dim(b.rank() - 1);
    if (k != k2)
        throw DimensionError("matmul inner dims disagree: " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Shape batch_a(a.shape().begin(), a.shape().end() - 2);
    Shape batch_b(b.shape().begin(), b.shape().end() - 2);
    Shape batch;
    if (batch_a == batch_b)
        batch = batch_a;
    else if (batch_a.empty())
        batch = batch_b;
    else if (batch_b.empty())
        batch = batch_a;
    else
        throw DimensionError("matmul batch dims disagree: " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::int64_t nb = shape_numel(batch);
    const bool a_bc = batch_a.empty() && !batch.empty();
    const bool b_bc = batch_b.empty() && !batch.empty();

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<S> out(nb * m * n);
    auto an = a.node();
    auto bn = b.node();
    for (std::int64_t t = 0; t < nb; ++t) {
        CMap A(an->data.data() + (a_bc ? 0 : t * m * k), m, k);
        CMap B(bn->data.data() + (b_bc ? 0 : t * k * n), k, n);
        MMap C(out.data() + t * m * n, m, n);
        C.noalias() = A * B;
    }
    auto backprop = [an, bn, m, n, k, nb, a_bc, b_bc](detail::Node<S>& self) {
        if (an->requires_grad) {
            auto& ga = an->ensure_grad();
            for (std::int64_t t = 0; t < nb; ++t) {
                CMap G(self.grad.data() + t * m * n, m, n);
                CMap B(bn->data.data() + (b_bc ? 0 : t * k * n), k, n);
                MMap GA(ga.data() + (a_bc ? 0 : t * m * k), m, k);
                GA.noalias() += G * B.transpose();
            }
        }
        if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (std::int64_t t = 0; t < nb; ++t) {
                CMap G(self.grad.data() + t * m * n, m, n);
                CMap A(an->data.data() + (a_bc ? 0 : t * m * k), m, k);
                MMap GB(gb.data() + (b_bc ? 0 : t * k * n), k, n);
                GB.noalias() += A.transpose() * G;
            }
        }
    };
    return Tensor<S>::from_node(detail::make_result<S>(
        std::move(out_shape), std::move(out), {an, bn}, backprop));
}

// ---------------------------------------------------------------------------
// Softmax along an axis, max-stabilized.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
    const auto r = x.rank();
    if (axis < 0) axis += static_cast<int>(r);
    if (axis < 0 || axis >= r)
        throw ParameterError("softmax axis " + std::to_string(axis) +
                             " out of range for rank " + std::to_string(r));
    const std::int64_t n = x.dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::int64_t i = axis + 1; i < r; ++i) inner *= x.dim(i);
    auto xn = x.node();
    std::vector<S> out(x.size());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * n * inner + in;
            S mx = xn->data[base];
            for (std::int64_t i = 1; i < n; ++i)
                mx = std::max(mx, xn->data[base + i * inner]);
            S z = 0;
            for (std::int64_t i = 0; i < n; ++i) {
                const S e = std::exp(xn->data[base + i * inner] - mx);
                out[base + i * inner] = e;
                z += e;
            }
            for (std::int64_t i = 0; i < n; ++i) out[base + i * inner] /= z;
        }
    }
    auto out_copy = out;  // backward needs y
    auto backprop = [xn, outer, inner, n, y = std::move(out_copy)](detail::Node<S>& self) {
        auto& g = xn->ensure_grad();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * n * inner + in;
                S dot = 0;
                for (std::int64_t i = 0; i < n; ++i)
                    dot += self.grad[base + i * inner] * y[base + i * inner];
                for (std::int64_t i = 0; i < n; ++i) {
                    const std::int64_t p = base + i * inner;
                    g[p] += y[p] * (self.grad[p] - dot);
                }
            }
        }
    };
    return Tensor<S>::from_node(detail::make_result<S>(
        x.shape(), std::move(out), {xn}, backprop));
}

// ---------------------------------------------------------------------------
// LayerNorm over the last (channel) dimension, then affine gamma/beta.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, S eps) {
    if (eps <= S(0)) throw ParameterError("layer_norm eps must be positive");
    const std::int64_t c = x.dim(x.rank() - 1);
    if (gamma.size() != c || beta.size() != c)
        throw DimensionError("layer_norm gamma/beta length must equal channel count " +
                             std::to_string(c));
    const std::int64_t rows = x.size() / c;
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    std::vector<S> out(x.size());
    std::vector<S> xhat(x.size());
    std::vector<S> inv_std(rows);
    for (std::int64_t rw = 0; rw < rows; ++rw) {
        const std::int64_t base = rw * c;
        S mu = 0;
        for (std::int64_t i = 0; i < c; ++i) mu += xn->data[base + i];
        mu /= static_cast<S>(c);
        S var = 0;
        for (std::int64_t i = 0; i < c; ++i) {
            const S d = xn->data[base + i] - mu;
            var += d * d;
        }
        var /= static_cast<S>(c);
        const S is = S(1) / std::sqrt(var + eps);
        inv_std[rw] = is;
        for (std::int64_t i = 0; i < c; ++i) {
            const S h = (xn->data[base + i] - mu) * is;
            xhat[base + i] = h;
            out[base + i] = h * gn->data[i] + bn->data[i];
        }
    }
    auto backprop = [xn, gn, bn, rows, c, xh = std::move(xhat),
                     is = std::move(inv_std)](detail::Node<S>& self) {
        if (gn->requires_grad) {
            auto& gg = gn->ensure_grad();
            for (std::int64_t rw = 0; rw < rows; ++rw)
                for (std::int64_t i = 0; i < c; ++i)
                    gg[i] += self.grad[rw * c + i] * xh[rw * c + i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (std::int64_t rw = 0; rw < rows; ++rw)
                for (std::int64_t i = 0; i < c; ++i)
                    gb[i] += self.grad[rw * c + i];
        }
        if (xn->requires_grad) {
            auto& gx = xn->ensure_grad();
            for (std::int64_t rw = 0; rw < rows; ++rw) {
                const std::int64_t base = rw * c;
                S mean_dh = 0, mean_dh_h = 0;
                for (std::int64_t i = 0; i < c; ++i) {
                    const S dh = self.grad[base + i] * gn->data[i];
                    mean_dh += dh;
                    mean_dh_h += dh * xh[base + i];
                }
                mean_dh /= static_cast<S>(c);
                mean_dh_h /= static_cast<S>(c);
                for (std::int64_t i = 0; i < c; ++i) {
                    const S dh = self.grad[base + i] * gn->data[i];
                    gx[base + i] += is[rw] * (dh - mean_dh - xh[base + i] * mean_dh_h);
                }
            }
        }
    };
    return Tensor<S>::from_node(detail::make_result<S>(
        x.shape(), std::move(out), {xn, gn, bn}, backprop));
}

// ---------------------------------------------------------------------------
// GELU, tanh approximation.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    auto xn = x.node();
    std::vector<S> out(x.size());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double v = static_cast<double>(xn->data[i]);
        const double t = std::tanh(kC * (v + kA * v * v * v));
        out[i] = static_cast<S>(0.5 * v * (1.0 + t));
    }
    auto backprop = [xn](detail::Node<S>& self) {
        auto& g = xn->ensure_grad();
        for (std::int64_t i = 0; i < self.size(); ++i) {
            const double v = static_cast<double>(xn->data[i]);
            const double u = kC * (v + kA * v * v * v);
            const double t = std::tanh(u);
            const double du = kC * (1.0 + 3.0 * kA * v * v);
            const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
            g[i] += self.grad[i] * static_cast<S>(d);
        }
    };
    return Tensor<S>::from_node(detail::make_result<S>(
        x.shape(), std::move(out), {xn}, backprop));
}

// ---------------------------------------------------------------------------
// 3x3 same-padded cross-correlation on H x W x Cin features.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> conv2d_3x3(const Tensor<S>& x, const Tensor<S>& w,
                     const Tensor<S>& bias) {
    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    if (x.rank() != 3)
        throw DimensionError("conv2d_3x3 input must be HxWxC, got " +
                             shape_str(x.shape()));
    if (w.rank() != 4 || w.dim(0) != 3 || w.dim(1) != 3)
        throw DimensionError("conv2d_3x3 weights must be 3x3xCinxCout, got " +
                             shape_str(w.shape()));
    const std::int64_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
    const std::int64_t cout = w.dim(3);
    if (w.dim(2) != cin)
        throw DimensionError("conv2d_3x3 channel mismatch: input " +
                             shape_str(x.shape()) + " vs weights " +
                             shape_str(w.shape()));
    if (bias.size() != cout)
        throw DimensionError("conv2d_3x3 bias length must equal Cout");
    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    std::vector<S> out(h * wd * cout);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < wd; ++xx)
            for (std::int64_t co = 0; co < cout; ++co)
                out[(y * wd + xx) * cout + co] = bn->data[co];
    for (std::int64_t ky = 0; ky < 3; ++ky) {
        for (std::int64_t kx = 0; kx < 3; ++kx) {
            CMap K(wn->data.data() + (ky * 3 + kx) * cin * cout, cin, cout);
            for (std::int64_t y = 0; y < h; ++y) {
                const std::int64_t sy = y + ky - 1;
                if (sy < 0 || sy >= h) continue;
                for (std::int64_t xx = 0; xx < wd; ++xx) {
                    const std::int64_t sx = xx + kx - 1;
                    if (sx < 0 || sx >= wd) continue;
                    Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> in_px(
                        xn->data.data() + (sy * wd + sx) * cin, cin);
                    Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> out_px(
                        out.data() + (y * wd + xx) * cout, cout);
                    out_px.noalias() += in_px * K;
                }
            }
        }
    }
    auto backprop = [xn, wn, bn, h, wd, cin, cout](detail::Node<S>& self) {
        if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (std::int64_t p = 0; p < h * wd; ++p)
                for (std::int64_t co = 0; co < cout; ++co)
                    gb[co] += self.grad[p * cout + co];
        }
        const bool need_x = xn->requires_grad;
        const bool need_w = wn->requires_grad;
        if (!need_x && !need_w) return;
        if (need_x) xn->ensure_grad();
        if (need_w) wn->ensure_grad();
        for (std::int64_t ky = 0; ky < 3; ++ky) {
            for (std::int64_t kx = 0; kx < 3; ++kx) {
                CMap K(wn->data.data() + (ky * 3 + kx) * cin * cout, cin, cout);
                for (std::int64_t y = 0; y < h; ++y) {
                    const std::int64_t sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    for (std::int64_t xx = 0; xx < wd; ++xx) {
                        const std::int64_t sx = xx + kx - 1;
                        if (sx < 0 || sx >= wd) continue;
                        Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> gout(
                            self.grad.data() + (y * wd + xx) * cout, cout);
                        if (need_x) {
                            Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gx(
                                xn->grad.data() + (sy * wd + sx) * cin, cin);
                            gx.noalias() += gout * K.transpose();
                        }
                        if (need_w) {
                            Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> in_px(
                                xn->data.data() + (sy * wd + sx) * cin, cin);
                            Eigen::Map<Mat> gw(
                                wn->grad.data() + (ky * 3 + kx) * cin * cout, cin, cout);
                            gw.noalias() += in_px.transpose() * gout;
                        }
                    }
                }
            }
        }
    };
    return Tensor<S>::from_node(detail::make_result<S>(
        Shape{h, wd, cout}, std::move(out), {xn, wn, bn}, backprop));
}

// ---------------------------------------------------------------------------
// Reverse-mode sweep. Gradients accumulate across calls until zeroed.
// ---------------------------------------------------------------------------

template <typename S>
void backward(const Tensor<S>& loss) {
    if (loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got " +
                            shape_str(loss.shape()));
    using NodeT = detail::Node<S>;
    std::vector<NodeT*> order;
    std::unordered_set<NodeT*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<NodeT*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeT* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior gradients are scratch for this sweep; only leaves accumulate
    // across calls.
    for (NodeT* n : order)
        if (!n->parents.empty()) n->grad.assign(n->data.size(), S(0));
    auto* root = loss.node().get();
    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check against the analytic backward pass.
// Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
// ---------------------------------------------------------------------------

template <typename S>
double grad_check(const std::function<Tensor<S>(const Tensor<S>&)>& f,
                  const Tensor<S>& x, S eps) {
    Tensor<S> xg(x.shape(), x.data(), /*requires_grad=*/true);
    Tensor<S> y = f(xg);
    backward(y);
    const auto analytic = xg.grad();

    Tensor<S> xp(x.shape(), x.data(), false);
    double max_err = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const S orig = xp.mutable_data()[i];
        xp.mutable_data()[i] = orig + eps;
        const double fp = static_cast<double>(f(xp).item());
        xp.mutable_data()[i] = orig - eps;
        const double fm = static_cast<double>(f(xp).item());
        xp.mutable_data()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * static_cast<double>(eps));
        const double a = static_cast<double>(analytic[i]);
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace sst
