#pragma once

#include <complex>
#include <vector>

#include "sumformer/tensor.hpp"

namespace sumformer {

/// Real-input DFT coefficients over the last axis: bins 0..floor(T/2).
template <typename S>
struct Spectrum {
    Shape shape;  // (..., bins)
    std::vector<std::complex<S>> data;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int bins() const { return shape.back(); }
};

inline int rdft_bins(int T) { return T / 2 + 1; }

namespace detail {

template <typename S>
struct DftTables {
    // twiddle[k*T + t] = exp(-2*pi*i*k*t/T) for k in [0, bins)
    std::vector<std::complex<S>> fwd;
    int T = 0;
    int bins = 0;
};

template <typename S>
DftTables<S> make_dft_tables(int T) {
    DftTables<S> tab;
    tab.T = T;
    tab.bins = rdft_bins(T);
    tab.fwd.resize(static_cast<std::size_t>(tab.bins) * T);
    const double two_pi = 6.283185307179586476925286766559;
    for (int k = 0; k < tab.bins; ++k)
        for (int t = 0; t < T; ++t) {
            double ang = -two_pi * static_cast<double>(k) * static_cast<double>(t) / static_cast<double>(T);
            tab.fwd[static_cast<std::size_t>(k) * T + t] =
                std::complex<S>(static_cast<S>(std::cos(ang)), static_cast<S>(std::sin(ang)));
        }
    return tab;
}

}  // namespace detail

template <typename S>
Spectrum<S> rdft(const Tensor<S>& x) {
    const int T = x.shape.back();
    if (T < 2) throw std::invalid_argument("rdft requires last-axis length >= 2, got " + std::to_string(T));
    const int bins = rdft_bins(T);
    auto tab = detail::make_dft_tables<S>(T);

    Spectrum<S> out;
    out.shape = x.shape;
    out.shape.back() = bins;
    const std::int64_t rows = x.numel() / T;
    out.data.assign(static_cast<std::size_t>(rows) * bins, std::complex<S>(0, 0));
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* in = x.ptr() + r * T;
        std::complex<S>* o = out.data.data() + r * bins;
        for (int k = 0; k < bins; ++k) {
            std::complex<S> acc(0, 0);
            const std::complex<S>* w = tab.fwd.data() + static_cast<std::size_t>(k) * T;
            for (int t = 0; t < T; ++t) acc += w[t] * in[t];
            o[k] = acc;
        }
    }
    return out;
}

template <typename S>
Tensor<S> irdft(const Spectrum<S>& spec, int T) {
    const int bins = rdft_bins(T);
    if (spec.bins() != bins)
        throw std::invalid_argument("irdft bin count mismatch: spectrum has " + std::to_string(spec.bins()) +
                                    " bins, length " + std::to_string(T) + " needs " + std::to_string(bins));
    auto tab = detail::make_dft_tables<S>(T);

    Shape out_shape = spec.shape;
    out_shape.back() = T;
    Tensor<S> out(out_shape);
    const std::int64_t rows = spec.numel() / bins;
    const S inv_t = S(1) / static_cast<S>(T);
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::complex<S>* in = spec.data.data() + r * bins;
        S* o = out.ptr() + r * T;
        for (int t = 0; t < T; ++t) {
            // conjugate-symmetric expansion; bin 0 and (even T) Nyquist counted once
            S acc = in[0].real();
            for (int k = 1; k < bins; ++k) {
                const auto& w = tab.fwd[static_cast<std::size_t>(k) * T + t];  // exp(-i...)
                S term = in[k].real() * w.real() + in[k].imag() * w.imag();    // Re(X_k * conj(w)) = Re(X_k e^{+i...})
                bool counted_once = (T % 2 == 0) && (k == bins - 1);
                acc += counted_once ? term : S(2) * term;
            }
            o[t] = acc * inv_t;
        }
    }
    return out;
}

/// Zeroes every bin >= keep_bins, exactly. Idempotent by construction.
template <typename S>
void low_pass_inplace(Spectrum<S>& spec, int keep_bins) {
    const int bins = spec.bins();
    if (keep_bins < 1 || keep_bins > bins)
        throw std::invalid_argument("keep_bins " + std::to_string(keep_bins) + " out of range [1," +
                                    std::to_string(bins) + "]");
    const std::int64_t rows = spec.numel() / bins;
    for (std::int64_t r = 0; r < rows; ++r)
        for (int k = keep_bins; k < bins; ++k) spec.data[static_cast<std::size_t>(r) * bins + k] = std::complex<S>(0, 0);
}

/// rdft -> zero bins >= keep_bins -> irdft, over the last axis. A symmetric
/// linear projection, so it is its own adjoint.
template <typename S>
Tensor<S> low_pass_filter(const Tensor<S>& x, int keep_bins) {
    Spectrum<S> spec = rdft(x);
    low_pass_inplace(spec, keep_bins);
    return irdft(spec, x.shape.back());
}

template <typename S>
S spectrum_energy(const Spectrum<S>& spec) {
    S e = 0;
    for (const auto& c : spec.data) e += std::norm(c);
    return e;
}

}  // namespace sumformer
