#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sumformer/fourier.hpp"
#include "sumformer/tensor.hpp"

namespace sumformer {

/// A learnable weight: value plus an accumulated gradient of identical shape.
template <typename S>
struct Parameter {
    Tensor<S> value;
    Tensor<S> grad;

    Parameter() = default;
    explicit Parameter(Tensor<S> v) : value(std::move(v)), grad(Tensor<S>::zeros(value.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), S(0)); }
};

template <typename S>
class Tape;

/// Handle to a node on a tape. Cheap to copy; never outlives its tape.
template <typename S>
struct Value {
    Tape<S>* tape = nullptr;
    int idx = -1;

    const Tensor<S>& val() const;
    const Shape& shape() const;
};

/// Records primitive operations in execution order; backward() replays them in
/// exact reverse order and accumulates into every reachable Parameter's grad.
/// Single-threaded by contract; independent tapes may run concurrently.
template <typename S>
class Tape {
   public:
    Value<S> constant(Tensor<S> v) { return {this, push(std::move(v), {}, nullptr, false)}; }

    /// A differentiable leaf that is not a Parameter (e.g. gradcheck inputs).
    Value<S> input(Tensor<S> v) { return {this, push(std::move(v), {}, nullptr, true)}; }

    /// Leaf bound to a Parameter; the same Parameter maps to one node per tape.
    Value<S> param(Parameter<S>& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return {this, it->second};
        int idx = push(p.value, {}, nullptr, true);
        nodes_[static_cast<std::size_t>(idx)].bound = &p;
        param_nodes_.emplace(&p, idx);
        return {this, idx};
    }

    void backward(Value<S> loss) {
        if (loss.tape != this) throw std::invalid_argument("backward: value from another tape");
        auto& ln = node(loss.idx);
        if (ln.value.numel() != 1) throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(ln.value.shape));
        for (int i = 0; i <= loss.idx; ++i) {
            auto& n = node(i);
            n.grad = Tensor<S>::zeros(n.value.shape);
        }
        node(loss.idx).grad[0] = S(1);
        for (int i = loss.idx; i >= 0; --i) {
            auto& n = node(i);
            if (n.pull) n.pull(*this, i);
        }
        for (int i = 0; i <= loss.idx; ++i) {
            auto& n = node(i);
            if (n.bound) {
                auto g = rows_view(n.bound->grad);
                g += rows_view(n.grad);
            }
        }
    }

    const Tensor<S>& value_of(int idx) const { return node(idx).value; }
    const Tensor<S>& grad_of(int idx) const { return node(idx).grad; }
    std::size_t size() const { return nodes_.size(); }

    // -- internals used by the op free functions --

    using Pull = std::function<void(Tape&, int)>;

    int push(Tensor<S> v, std::vector<int> parents, Pull pull, bool track) {
        nodes_.push_back(Node{std::move(v), Tensor<S>{}, std::move(parents), std::move(pull), nullptr, track});
        return static_cast<int>(nodes_.size()) - 1;
    }

    bool tracks(int idx) const { return node(idx).track; }

    Tensor<S>& grad_ref(int idx) { return node(idx).grad; }
    const Tensor<S>& val_ref(int idx) const { return node(idx).value; }
    const std::vector<int>& parents_of(int idx) const { return node(idx).parents; }

   private:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        std::vector<int> parents;
        Pull pull;
        Parameter<S>* bound;
        bool track;
    };

    Node& node(int idx) { return nodes_.at(static_cast<std::size_t>(idx)); }
    const Node& node(int idx) const { return nodes_.at(static_cast<std::size_t>(idx)); }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter<S>*, int> param_nodes_;
};

template <typename S>
const Tensor<S>& Value<S>::val() const {
    return tape->value_of(idx);
}

template <typename S>
const Shape& Value<S>::shape() const {
    return tape->value_of(idx).shape;
}

namespace detail {

template <typename S>
Tape<S>& same_tape(Value<S> a, Value<S> b) {
    if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("values belong to different tapes");
    return *a.tape;
}

template <typename S>
void accumulate(Tensor<S>& dst, const Tensor<S>& src) {
    rows_view(dst) += rows_view(src);
}

}  // namespace detail

// ---- elementwise ------------------------------------------------------------

template <typename S>
Value<S> add(Value<S> a, Value<S> b) {
    auto& t = detail::same_tape(a, b);
    if (a.shape() != b.shape())
        throw std::invalid_argument("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<S> out = a.val();
    detail::accumulate(out, b.val());
    int pa = a.idx, pb = b.idx;
    return {&t, t.push(std::move(out), {pa, pb},
                       [pa, pb](Tape<S>& tp, int self) {
                           detail::accumulate(tp.grad_ref(pa), tp.grad_ref(self));
                           detail::accumulate(tp.grad_ref(pb), tp.grad_ref(self));
                       },
                       t.tracks(pa) || t.tracks(pb))};
}

template <typename S>
Value<S> sub(Value<S> a, Value<S> b) {
    auto& t = detail::same_tape(a, b);
    if (a.shape() != b.shape())
        throw std::invalid_argument("sub shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<S> out = a.val();
    rows_view(out) -= rows_view(b.val());
    int pa = a.idx, pb = b.idx;
    return {&t, t.push(std::move(out), {pa, pb},
                       [pa, pb](Tape<S>& tp, int self) {
                           detail::accumulate(tp.grad_ref(pa), tp.grad_ref(self));
                           rows_view(tp.grad_ref(pb)) -= rows_view(tp.grad_ref(self));
                       },
                       t.tracks(pa) || t.tracks(pb))};
}

template <typename S>
Value<S> mul(Value<S> a, Value<S> b) {
    auto& t = detail::same_tape(a, b);
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<S> out = a.val();
    rows_view(out).array() *= rows_view(b.val()).array();
    int pa = a.idx, pb = b.idx;
    return {&t, t.push(std::move(out), {pa, pb},
                       [pa, pb](Tape<S>& tp, int self) {
                           rows_view(tp.grad_ref(pa)).array() +=
                               rows_view(tp.grad_ref(self)).array() * rows_view(tp.val_ref(pb)).array();
                           rows_view(tp.grad_ref(pb)).array() +=
                               rows_view(tp.grad_ref(self)).array() * rows_view(tp.val_ref(pa)).array();
                       },
                       t.tracks(pa) || t.tracks(pb))};
}

template <typename S>
Value<S> scale(Value<S> a, S c) {
    auto& t = *a.tape;
    Tensor<S> out = a.val();
    rows_view(out) *= c;
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa, c](Tape<S>& tp, int self) {
                           rows_view(tp.grad_ref(pa)) += c * rows_view(tp.grad_ref(self));
                       },
                       t.tracks(pa))};
}

template <typename S>
Value<S> operator+(Value<S> a, Value<S> b) { return add(a, b); }
template <typename S>
Value<S> operator-(Value<S> a, Value<S> b) { return sub(a, b); }
template <typename S>
Value<S> operator*(Value<S> a, Value<S> b) { return mul(a, b); }

// ---- matrix products --------------------------------------------------------

template <typename S>
Value<S> matmul(Value<S> a, Value<S> b) {
    auto& t = detail::same_tape(a, b);
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
        throw std::invalid_argument("matmul shape mismatch: " + shape_str(as) + " x " + shape_str(bs));
    const int m = as[0], k = as[1], n = bs[1];
    Tensor<S> out(Shape{m, n});
    mat_view(out, m, n).noalias() = mat_view(a.val(), m, k) * mat_view(b.val(), k, n);
    int pa = a.idx, pb = b.idx;
    return {&t, t.push(std::move(out), {pa, pb},
                       [pa, pb, m, k, n](Tape<S>& tp, int self) {
                           auto g = mat_view(tp.grad_ref(self), m, n);
                           mat_view(tp.grad_ref(pa), m, k).noalias() += g * mat_view(tp.val_ref(pb), k, n).transpose();
                           mat_view(tp.grad_ref(pb), k, n).noalias() += mat_view(tp.val_ref(pa), m, k).transpose() * g;
                       },
                       t.tracks(pa) || t.tracks(pb))};
}

/// Shared left operand: w (p,m) applied to every batch slice of x (B,m,n).
template <typename S>
Value<S> lmatmul(Value<S> w, Value<S> x) {
    auto& t = detail::same_tape(w, x);
    const auto& ws = w.shape();
    const auto& xs = x.shape();
    if (ws.size() != 2 || xs.size() != 3 || ws[1] != xs[1])
        throw std::invalid_argument("lmatmul shape mismatch: " + shape_str(ws) + " x " + shape_str(xs));
    const int B = xs[0], m = xs[1], n = xs[2], p = ws[0];
    Tensor<S> out(Shape{B, p, n});
    auto wv = mat_view(w.val(), p, m);
    for (int b = 0; b < B; ++b)
        Eigen::Map<MatrixRM<S>>(out.ptr() + static_cast<std::int64_t>(b) * p * n, p, n).noalias() =
            wv * Eigen::Map<const MatrixRM<S>>(x.val().ptr() + static_cast<std::int64_t>(b) * m * n, m, n);
    int pw = w.idx, px = x.idx;
    return {&t, t.push(std::move(out), {pw, px},
                       [pw, px, B, m, n, p](Tape<S>& tp, int self) {
                           auto wv = mat_view(tp.val_ref(pw), p, m);
                           auto dw = mat_view(tp.grad_ref(pw), p, m);
                           for (int b = 0; b < B; ++b) {
                               Eigen::Map<const MatrixRM<S>> g(tp.grad_ref(self).ptr() + static_cast<std::int64_t>(b) * p * n, p, n);
                               Eigen::Map<const MatrixRM<S>> xb(tp.val_ref(px).ptr() + static_cast<std::int64_t>(b) * m * n, m, n);
                               Eigen::Map<MatrixRM<S>> dx(tp.grad_ref(px).ptr() + static_cast<std::int64_t>(b) * m * n, m, n);
                               dw.noalias() += g * xb.transpose();
                               dx.noalias() += wv.transpose() * g;
                           }
                       },
                       t.tracks(pw) || t.tracks(px))};
}

template <typename S>
Value<S> bmm(Value<S> a, Value<S> b) {
    auto& t = detail::same_tape(a, b);
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
        throw std::invalid_argument("bmm shape mismatch: " + shape_str(as) + " x " + shape_str(bs));
    const int B = as[0], m = as[1], k = as[2], n = bs[2];
    Tensor<S> out(Shape{B, m, n});
    for (int i = 0; i < B; ++i)
        Eigen::Map<MatrixRM<S>>(out.ptr() + static_cast<std::int64_t>(i) * m * n, m, n).noalias() =
            Eigen::Map<const MatrixRM<S>>(a.val().ptr() + static_cast<std::int64_t>(i) * m * k, m, k) *
            Eigen::Map<const MatrixRM<S>>(b.val().ptr() + static_cast<std::int64_t>(i) * k * n, k, n);
    int pa = a.idx, pb = b.idx;
    return {&t, t.push(std::move(out), {pa, pb},
                       [pa, pb, B, m, k, n](Tape<S>& tp, int self) {
                           for (int i = 0; i < B; ++i) {
                               Eigen::Map<const MatrixRM<S>> g(tp.grad_ref(self).ptr() + static_cast<std::int64_t>(i) * m * n, m, n);
                               Eigen::Map<const MatrixRM<S>> av(tp.val_ref(pa).ptr() + static_cast<std::int64_t>(i) * m * k, m, k);
                               Eigen::Map<const MatrixRM<S>> bv(tp.val_ref(pb).ptr() + static_cast<std::int64_t>(i) * k * n, k, n);
                               Eigen::Map<MatrixRM<S>> da(tp.grad_ref(pa).ptr() + static_cast<std::int64_t>(i) * m * k, m, k);
                               Eigen::Map<MatrixRM<S>> db(tp.grad_ref(pb).ptr() + static_cast<std::int64_t>(i) * k * n, k, n);
                               da.noalias() += g * bv.transpose();
                               db.noalias() += av.transpose() * g;
                           }
                       },
                       t.tracks(pa) || t.tracks(pb))};
}

/// Batched a @ b^T: (B,m,k) x (B,n,k) -> (B,m,n).
template <typename S>
Value<S> bmm_nt(Value<S> a, Value<S> b) {
    auto& t = detail::same_tape(a, b);
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[2])
        throw std::invalid_argument("bmm_nt shape mismatch: " + shape_str(as) + " x " + shape_str(bs));
    const int B = as[0], m = as[1], k = as[2], n = bs[1];
    Tensor<S> out(Shape{B, m, n});
    for (int i = 0; i < B; ++i)
        Eigen::Map<MatrixRM<S>>(out.ptr() + static_cast<std::int64_t>(i) * m * n, m, n).noalias() =
            Eigen::Map<const MatrixRM<S>>(a.val().ptr() + static_cast<std::int64_t>(i) * m * k, m, k) *
            Eigen::Map<const MatrixRM<S>>(b.val().ptr() + static_cast<std::int64_t>(i) * n * k, n, k).transpose();
    int pa = a.idx, pb = b.idx;
    return {&t, t.push(std::move(out), {pa, pb},
                       [pa, pb, B, m, k, n](Tape<S>& tp, int self) {
                           for (int i = 0; i < B; ++i) {
                               Eigen::Map<const MatrixRM<S>> g(tp.grad_ref(self).ptr() + static_cast<std::int64_t>(i) * m * n, m, n);
                               Eigen::Map<const MatrixRM<S>> av(tp.val_ref(pa).ptr() + static_cast<std::int64_t>(i) * m * k, m, k);
                               Eigen::Map<const MatrixRM<S>> bv(tp.val_ref(pb).ptr() + static_cast<std::int64_t>(i) * n * k, n, k);
                               Eigen::Map<MatrixRM<S>> da(tp.grad_ref(pa).ptr() + static_cast<std::int64_t>(i) * m * k, m, k);
                               Eigen::Map<MatrixRM<S>> db(tp.grad_ref(pb).ptr() + static_cast<std::int64_t>(i) * n * k, n, k);
                               da.noalias() += g * bv;
                               db.noalias() += g.transpose() * av;
                           }
                       },
                       t.tracks(pa) || t.tracks(pb))};
}

// ---- structural -------------------------------------------------------------

template <typename S>
Value<S> reshape(Value<S> a, Shape sh) {
    auto& t = *a.tape;
    Tensor<S> out = reshaped(a.val(), std::move(sh));
    int pa = a.idx;
    Shape orig = a.shape();
    return {&t, t.push(std::move(out), {pa},
                       [pa, orig](Tape<S>& tp, int self) {
                           detail::accumulate(tp.grad_ref(pa), reshaped(tp.grad_ref(self), orig));
                       },
                       t.tracks(pa))};
}

template <typename S>
Value<S> permute(Value<S> a, std::vector<int> perm) {
    auto& t = *a.tape;
    Tensor<S> out = permuted(a.val(), perm);
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa, perm](Tape<S>& tp, int self) {
                           detail::accumulate(tp.grad_ref(pa), permuted(tp.grad_ref(self), inverse_permutation(perm)));
                       },
                       t.tracks(pa))};
}

/// Replicates a tensor `count` times along a new leading axis.
template <typename S>
Value<S> tile0(Value<S> a, int count) {
    auto& t = *a.tape;
    const Tensor<S>& v = a.val();
    Shape sh;
    sh.push_back(count);
    sh.insert(sh.end(), v.shape.begin(), v.shape.end());
    Tensor<S> out(sh);
    const std::int64_t n = v.numel();
    for (int i = 0; i < count; ++i) std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::int64_t>(i) * n);
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa, count, n](Tape<S>& tp, int self) {
                           auto dst = mat_view(tp.grad_ref(pa), 1, n);
                           for (int i = 0; i < count; ++i)
                               dst += Eigen::Map<const MatrixRM<S>>(tp.grad_ref(self).ptr() + static_cast<std::int64_t>(i) * n, 1, n);
                       },
                       t.tracks(pa))};
}

// ---- row-broadcast ----------------------------------------------------------

/// out[r, j] = x[r, j] * v[j], v rank-1 over the last axis.
template <typename S>
Value<S> mul_rowvec(Value<S> x, Value<S> v) {
    auto& t = detail::same_tape(x, v);
    const std::int64_t d = x.shape().back();
    if (v.val().numel() != d)
        throw std::invalid_argument("mul_rowvec vector extent " + std::to_string(v.val().numel()) +
                                    " != last axis " + std::to_string(d));
    Tensor<S> out = x.val();
    auto o = rows_view(out);
    auto vv = mat_view(v.val(), 1, d);
    o.array().rowwise() *= vv.row(0).array();
    int px = x.idx, pv = v.idx;
    return {&t, t.push(std::move(out), {px, pv},
                       [px, pv, d](Tape<S>& tp, int self) {
                           auto g = rows_view(tp.grad_ref(self));
                           auto vv = mat_view(tp.val_ref(pv), 1, d);
                           rows_view(tp.grad_ref(px)).array() += g.array().rowwise() * vv.row(0).array();
                           mat_view(tp.grad_ref(pv), 1, d).array() +=
                               (g.array() * rows_view(tp.val_ref(px)).array()).colwise().sum();
                       },
                       t.tracks(px) || t.tracks(pv))};
}

/// out[r, j] = x[r, j] + v[j].
template <typename S>
Value<S> add_rowvec(Value<S> x, Value<S> v) {
    auto& t = detail::same_tape(x, v);
    const std::int64_t d = x.shape().back();
    if (v.val().numel() != d)
        throw std::invalid_argument("add_rowvec vector extent " + std::to_string(v.val().numel()) +
                                    " != last axis " + std::to_string(d));
    Tensor<S> out = x.val();
    rows_view(out).array().rowwise() += mat_view(v.val(), 1, d).row(0).array();
    int px = x.idx, pv = v.idx;
    return {&t, t.push(std::move(out), {px, pv},
                       [px, pv, d](Tape<S>& tp, int self) {
                           auto g = rows_view(tp.grad_ref(self));
                           detail::accumulate(tp.grad_ref(px), tp.grad_ref(self));
                           mat_view(tp.grad_ref(pv), 1, d) += g.colwise().sum();
                       },
                       t.tracks(px) || t.tracks(pv))};
}

/// Broadcast over the middle axis: a (B,m,n) * b (B,1,n).
template <typename S>
Value<S> mul_brow(Value<S> a, Value<S> b) {
    auto& t = detail::same_tape(a, b);
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() != 3 || bs.size() != 3 || bs[1] != 1 || as[0] != bs[0] || as[2] != bs[2])
        throw std::invalid_argument("mul_brow shape mismatch: " + shape_str(as) + " vs " + shape_str(bs));
    const int B = as[0], m = as[1], n = as[2];
    Tensor<S> out = a.val();
    for (int i = 0; i < B; ++i)
        Eigen::Map<MatrixRM<S>>(out.ptr() + static_cast<std::int64_t>(i) * m * n, m, n).array().rowwise() *=
            Eigen::Map<const MatrixRM<S>>(b.val().ptr() + static_cast<std::int64_t>(i) * n, 1, n).row(0).array();
    int pa = a.idx, pb = b.idx;
    return {&t, t.push(std::move(out), {pa, pb},
                       [pa, pb, B, m, n](Tape<S>& tp, int self) {
                           for (int i = 0; i < B; ++i) {
                               Eigen::Map<const MatrixRM<S>> g(tp.grad_ref(self).ptr() + static_cast<std::int64_t>(i) * m * n, m, n);
                               Eigen::Map<const MatrixRM<S>> av(tp.val_ref(pa).ptr() + static_cast<std::int64_t>(i) * m * n, m, n);
                               Eigen::Map<const MatrixRM<S>> bv(tp.val_ref(pb).ptr() + static_cast<std::int64_t>(i) * n, 1, n);
                               Eigen::Map<MatrixRM<S>> da(tp.grad_ref(pa).ptr() + static_cast<std::int64_t>(i) * m * n, m, n);
                               Eigen::Map<MatrixRM<S>> db(tp.grad_ref(pb).ptr() + static_cast<std::int64_t>(i) * n, 1, n);
                               da.array() += g.array().rowwise() * bv.row(0).array();
                               db.array() += (g.array() * av.array()).colwise().sum();
                           }
                       },
                       t.tracks(pa) || t.tracks(pb))};
}

// ---- nonlinearities ---------------------------------------------------------

template <typename S>
Value<S> softmax_last(Value<S> a) {
    auto& t = *a.tape;
    Tensor<S> out = softmax(a.val(), -1);
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa](Tape<S>& tp, int self) {
                           auto y = rows_view(tp.val_ref(self));
                           auto g = rows_view(tp.grad_ref(self));
                           auto dx = rows_view(tp.grad_ref(pa));
                           for (Eigen::Index r = 0; r < y.rows(); ++r) {
                               S dot = (g.row(r).array() * y.row(r).array()).sum();
                               dx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
                           }
                       },
                       t.tracks(pa))};
}

/// Zero mean, unit variance over the last axis (population variance + eps).
/// Affine layer_norm is this followed by mul_rowvec/add_rowvec.
template <typename S>
Value<S> normalize_last(Value<S> a, S eps) {
    auto& t = *a.tape;
    const Tensor<S>& x = a.val();
    Tensor<S> out(x.shape);
    const std::int64_t d = x.shape.back();
    std::vector<S> inv_sigma(static_cast<std::size_t>(x.numel() / d));
    {
        auto xin = rows_view(x);
        auto o = rows_view(out);
        for (Eigen::Index r = 0; r < xin.rows(); ++r) {
            S mu = xin.row(r).mean();
            S var = (xin.row(r).array() - mu).square().mean();
            S inv = S(1) / std::sqrt(var + eps);
            inv_sigma[static_cast<std::size_t>(r)] = inv;
            o.row(r) = (xin.row(r).array() - mu) * inv;
        }
    }
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa, inv_sigma = std::move(inv_sigma)](Tape<S>& tp, int self) {
                           auto y = rows_view(tp.val_ref(self));
                           auto g = rows_view(tp.grad_ref(self));
                           auto dx = rows_view(tp.grad_ref(pa));
                           for (Eigen::Index r = 0; r < y.rows(); ++r) {
                               S gm = g.row(r).mean();
                               S gym = (g.row(r).array() * y.row(r).array()).mean();
                               dx.row(r).array() +=
                                   inv_sigma[static_cast<std::size_t>(r)] * (g.row(r).array() - gm - y.row(r).array() * gym);
                           }
                       },
                       t.tracks(pa))};
}

template <typename S>
Value<S> gelu(Value<S> a) {
    auto& t = *a.tape;
    Tensor<S> out = gelu(a.val());
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa](Tape<S>& tp, int self) {
                           const Tensor<S>& x = tp.val_ref(pa);
                           const Tensor<S>& g = tp.grad_ref(self);
                           Tensor<S>& dx = tp.grad_ref(pa);
                           const S inv_sqrt2 = S(1) / std::sqrt(S(2));
                           const S inv_sqrt2pi = S(0.3989422804014326779399460599343);
                           for (std::int64_t i = 0; i < x.numel(); ++i) {
                               S cdf = S(0.5) * std::erfc(-x[i] * inv_sqrt2);
                               S pdf = inv_sqrt2pi * std::exp(S(-0.5) * x[i] * x[i]);
                               dx[i] += g[i] * (cdf + x[i] * pdf);
                           }
                       },
                       t.tracks(pa))};
}

/// Low-pass projection over the last axis; self-adjoint, so the backward pass
/// applies the same filter to the incoming gradient.
template <typename S>
Value<S> lowpass_last(Value<S> a, int keep_bins) {
    auto& t = *a.tape;
    Tensor<S> out = low_pass_filter(a.val(), keep_bins);
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa, keep_bins](Tape<S>& tp, int self) {
                           detail::accumulate(tp.grad_ref(pa), low_pass_filter(tp.grad_ref(self), keep_bins));
                       },
                       t.tracks(pa))};
}

/// Inverted dropout; identity when inactive or p == 0.
template <typename S>
Value<S> dropout(Value<S> a, double p, std::mt19937_64& rng, bool active) {
    if (!active || p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
    auto& t = *a.tape;
    Tensor<S> mask(a.shape());
    std::bernoulli_distribution keep(1.0 - p);
    const S scale = static_cast<S>(1.0 / (1.0 - p));
    for (auto& m : mask.data) m = keep(rng) ? scale : S(0);
    Tensor<S> out = a.val();
    rows_view(out).array() *= rows_view(mask).array();
    int pa = a.idx;
    return {&t, t.push(std::move(out), {pa},
                       [pa, mask = std::move(mask)](Tape<S>& tp, int self) {
                           rows_view(tp.grad_ref(pa)).array() +=
                               rows_view(tp.grad_ref(self)).array() * rows_view(mask).array();
                       },
                       t.tracks(pa))};
}

// ---- reductions -------------------------------------------------------------

template <typename S>
Value<S> sum_all(Value<S> a) {
    auto& t = *a.tape;
    S s = rows_view(a.val()).sum();
    int pa = a.idx;
    return {&t, t.push(Tensor<S>::scalar(s), {pa},
                       [pa](Tape<S>& tp, int self) {
                           S g = tp.grad_ref(self)[0];
                           rows_view(tp.grad_ref(pa)).array() += g;
                       },
                       t.tracks(pa))};
}

template <typename S>
Value<S> mean_all(Value<S> a) {
    return scale(sum_all(a), S(1) / static_cast<S>(a.val().numel()));
}

template <typename S>
Value<S> mse(Value<S> pred, Value<S> target) {
    Value<S> d = sub(pred, target);
    return mean_all(mul(d, d));
}

// ---- composites -------------------------------------------------------------

/// Full layer_norm with learnable affine over the last axis.
template <typename S>
Value<S> layer_norm_last(Value<S> x, Value<S> gamma, Value<S> beta, S eps) {
    return add_rowvec(mul_rowvec(normalize_last(x, eps), gamma), beta);
}

template <typename S>
Value<S> softmax_axis(Value<S> x, int axis) {
    int r = static_cast<int>(x.shape().size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw std::invalid_argument("softmax axis out of range for " + shape_str(x.shape()));
    if (axis == r - 1) return softmax_last(x);
    std::vector<int> perm;
    for (int i = 0; i < r; ++i)
        if (i != axis) perm.push_back(i);
    perm.push_back(axis);
    return permute(softmax_last(permute(x, perm)), inverse_permutation(perm));
}

template <typename S>
void zero_grads(const std::vector<Parameter<S>*>& params) {
    for (auto* p : params) p->zero_grad();
}

}  // namespace sumformer
