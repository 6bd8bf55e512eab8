#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sumformer {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

/// Dense row-major tensor, last axis fastest. The scalar type is float for
/// training and double for gradient checks.
template <typename S>
struct Tensor {
    Shape shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(Shape sh) : shape(std::move(sh)), data(static_cast<std::size_t>(shape_numel(shape)), S(0)) {
        check_extents();
    }
    Tensor(Shape sh, S fill) : shape(std::move(sh)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {
        check_extents();
    }
    Tensor(Shape sh, std::vector<S> values) : shape(std::move(sh)), data(std::move(values)) {
        check_extents();
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }
    static Tensor full(Shape sh, S v) { return Tensor(std::move(sh), v); }
    static Tensor scalar(S v) { return Tensor(Shape{1}, std::vector<S>{v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int size(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    S& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
    const S& operator()(int i) const { return data[static_cast<std::size_t>(i)]; }
    S& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    const S& operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    S& operator()(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    const S& operator()(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    S& operator()(int i, int j, int k, int l) {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    const S& operator()(int i, int j, int k, int l) const {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

   private:
    void check_extents() const {
        for (int e : shape)
            if (e <= 0) throw std::invalid_argument("nonpositive extent in shape " + shape_str(shape));
    }
};

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
Eigen::Map<MatrixRM<S>> mat_view(Tensor<S>& t, std::int64_t rows, std::int64_t cols) {
    if (rows * cols != t.numel())
        throw std::invalid_argument("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                    " does not cover tensor " + shape_str(t.shape));
    return Eigen::Map<MatrixRM<S>>(t.ptr(), rows, cols);
}

template <typename S>
Eigen::Map<const MatrixRM<S>> mat_view(const Tensor<S>& t, std::int64_t rows, std::int64_t cols) {
    if (rows * cols != t.numel())
        throw std::invalid_argument("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                    " does not cover tensor " + shape_str(t.shape));
    return Eigen::Map<const MatrixRM<S>>(t.ptr(), rows, cols);
}

/// 2D view using the last axis as columns and everything before it as rows.
template <typename S>
Eigen::Map<MatrixRM<S>> rows_view(Tensor<S>& t) {
    std::int64_t cols = t.shape.empty() ? 1 : t.shape.back();
    return mat_view(t, t.numel() / cols, cols);
}

template <typename S>
Eigen::Map<const MatrixRM<S>> rows_view(const Tensor<S>& t) {
    std::int64_t cols = t.shape.empty() ? 1 : t.shape.back();
    return mat_view(t, t.numel() / cols, cols);
}

// ---- shape helpers ----------------------------------------------------------

template <typename S>
Tensor<S> reshaped(const Tensor<S>& t, Shape sh) {
    if (shape_numel(sh) != t.numel())
        throw std::invalid_argument("cannot reshape " + shape_str(t.shape) + " to " + shape_str(sh));
    Tensor<S> out = t;
    out.shape = std::move(sh);
    return out;
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size());
    std::int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<std::size_t>(i)] = acc;
        acc *= s[static_cast<std::size_t>(i)];
    }
    return st;
}

/// Axis permutation: out[i_perm[0], ..] = in[i_0, ..].
template <typename S>
Tensor<S> permuted(const Tensor<S>& t, const std::vector<int>& perm) {
    int r = t.rank();
    if (static_cast<int>(perm.size()) != r)
        throw std::invalid_argument("permutation rank mismatch for " + shape_str(t.shape));
    Shape out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = t.shape[static_cast<std::size_t>(perm[i])];
    Tensor<S> out(out_shape);
    auto in_strides = row_major_strides(t.shape);
    std::vector<std::int64_t> out_stride_of_in_axis(static_cast<std::size_t>(r));
    auto out_strides = row_major_strides(out_shape);
    for (int i = 0; i < r; ++i) out_stride_of_in_axis[static_cast<std::size_t>(perm[i])] = out_strides[static_cast<std::size_t>(i)];

    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    const std::int64_t n = t.numel();
    std::int64_t out_off = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
        out.data[static_cast<std::size_t>(out_off)] = t.data[static_cast<std::size_t>(flat)];
        for (int ax = r - 1; ax >= 0; --ax) {
            auto a = static_cast<std::size_t>(ax);
            if (++idx[a] < t.shape[a]) {
                out_off += out_stride_of_in_axis[a];
                break;
            }
            idx[a] = 0;
            out_off -= out_stride_of_in_axis[a] * (t.shape[a] - 1);
        }
    }
    return out;
}

inline std::vector<int> inverse_permutation(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    return inv;
}

// ---- elementwise / reduction kernels ---------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul shape mismatch: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Tensor<S> c(Shape{a.shape[0], b.shape[1]});
    mat_view(c, a.shape[0], b.shape[1]).noalias() =
        mat_view(a, a.shape[0], a.shape[1]) * mat_view(b, b.shape[0], b.shape[1]);
    return c;
}

/// Numerically stable softmax along `axis`.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
    int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw std::invalid_argument("softmax axis out of range for " + shape_str(x.shape));
    if (axis != r - 1) {
        std::vector<int> perm;
        for (int i = 0; i < r; ++i)
            if (i != axis) perm.push_back(i);
        perm.push_back(axis);
        return permuted(softmax(permuted(x, perm), r - 1), inverse_permutation(perm));
    }
    Tensor<S> y(x.shape);
    auto xin = rows_view(x);
    auto out = rows_view(y);
    for (Eigen::Index i = 0; i < xin.rows(); ++i) {
        S m = xin.row(i).maxCoeff();
        out.row(i) = (xin.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return y;
}

/// Zero-mean, unit-variance over the last axis (population variance), then affine.
/// gamma/beta are rank-1 over the normalized axis.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
    std::int64_t d = x.shape.back();
    if (gamma.numel() != d || beta.numel() != d)
        throw std::invalid_argument("layer_norm affine params must have extent " + std::to_string(d));
    Tensor<S> y(x.shape);
    auto xin = rows_view(x);
    auto out = rows_view(y);
    auto g = mat_view(gamma, 1, d);
    auto b = mat_view(beta, 1, d);
    for (Eigen::Index i = 0; i < xin.rows(); ++i) {
        S mu = xin.row(i).mean();
        S var = (xin.row(i).array() - mu).square().mean();
        S inv = S(1) / std::sqrt(var + eps);
        out.row(i) = (((xin.row(i).array() - mu) * inv) * g.row(0).array() + b.row(0).array()).matrix();
    }
    return y;
}

/// Exact GELU: x * Phi(x) with the Gaussian CDF.
template <typename S>
S gelu_scalar(S x) {
    return x * S(0.5) * std::erfc(-x / std::sqrt(S(2)));
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    Tensor<S> y(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = gelu_scalar(x[i]);
    return y;
}

template <typename S>
bool all_finite(const Tensor<S>& x) {
    for (std::int64_t i = 0; i < x.numel(); ++i)
        if (!std::isfinite(x[i])) return false;
    return true;
}

template <typename S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    S m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// ---- seeded fills -----------------------------------------------------------

template <typename S>
void fill_uniform(Tensor<S>& t, S lo, S hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<S> dist(lo, hi);
    for (auto& v : t.data) v = dist(rng);
}

template <typename S>
void fill_normal(Tensor<S>& t, S mean, S stddev, std::mt19937_64& rng) {
    std::normal_distribution<S> dist(mean, stddev);
    for (auto& v : t.data) v = dist(rng);
}

}  // namespace sumformer
