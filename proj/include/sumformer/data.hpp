#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "sumformer/embedding.hpp"

namespace sumformer {

// ---- binary grid-series file --------------------------------------------------
//
// magic "SMVS" | u32 version | u32 T,C,H,W | u32 steps_per_day | u32 steps_per_week
// | payload: T*C*H*W float32, little-endian, t-major then (c,h,w)

constexpr std::uint32_t kGridFileVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff), static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("truncated file: expected 4 more bytes");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace detail

template <typename S>
void write_grid_series(const std::string& path, const GridSeries<S>& g) {
    g.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write("SMVS", 4);
    detail::put_u32(os, kGridFileVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(g.T()));
    detail::put_u32(os, static_cast<std::uint32_t>(g.C()));
    detail::put_u32(os, static_cast<std::uint32_t>(g.H()));
    detail::put_u32(os, static_cast<std::uint32_t>(g.W()));
    detail::put_u32(os, static_cast<std::uint32_t>(g.steps_per_day));
    detail::put_u32(os, static_cast<std::uint32_t>(g.steps_per_week));
    for (std::int64_t i = 0; i < g.values.numel(); ++i) detail::put_f32(os, static_cast<float>(g.values[i]));
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

template <typename S>
GridSeries<S> read_grid_series(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SMVS")
        throw std::runtime_error("bad magic in '" + path + "': expected SMVS");
    std::uint32_t version = detail::get_u32(is);
    if (version != kGridFileVersion)
        throw std::runtime_error("version mismatch in '" + path + "': file has " + std::to_string(version) +
                                 ", reader supports " + std::to_string(kGridFileVersion));
    std::uint32_t T = detail::get_u32(is), C = detail::get_u32(is), H = detail::get_u32(is), W = detail::get_u32(is);
    std::uint32_t per_day = detail::get_u32(is), per_week = detail::get_u32(is);
    const std::int64_t count = static_cast<std::int64_t>(T) * C * H * W;

    is.seekg(0, std::ios::end);
    const std::int64_t total = static_cast<std::int64_t>(is.tellg());
    const std::int64_t expected = 4 + 4 * 7 + 4 * count;
    if (total < expected)
        throw std::runtime_error("truncated payload in '" + path + "': file has " + std::to_string(total) +
                                 " bytes, header implies " + std::to_string(expected));
    is.seekg(4 + 4 * 7, std::ios::beg);

    Tensor<S> values(Shape{static_cast<int>(T), static_cast<int>(C), static_cast<int>(H), static_cast<int>(W)});
    for (std::int64_t i = 0; i < count; ++i) values[i] = static_cast<S>(detail::get_f32(is));
    return GridSeries<S>(std::move(values), static_cast<int>(per_day), static_cast<int>(per_week));
}

// ---- synthetic generator ------------------------------------------------------

/// Periodic mobility stand-in: per-cell base level modulated by a daily and a
/// weekly sinusoid, with a smooth spatial phase field so neighbouring cells
/// correlate. Gaussian noise, clipped at zero. Deterministic per seed.
template <typename S>
GridSeries<S> synth_generate(int T, int C, int H, int W, int steps_per_day, double noise_sigma, std::uint64_t seed) {
    if (T < 1 || C < 1 || H < 1 || W < 1 || steps_per_day < 1)
        throw std::invalid_argument("synth_generate requires positive dimensions");
    std::mt19937_64 rng(seed);
    const double daily_amp = 0.6, weekly_amp = 0.15;
    const double two_pi = 6.283185307179586;
    const int steps_per_week = 7 * steps_per_day;

    Tensor<double> base(Shape{C, H, W});
    Tensor<double> phase(Shape{C, H, W});
    std::uniform_real_distribution<double> jitter(0.0, 2.0);
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                base(c, h, w) = 10.0 + 6.0 * std::sin(3.141592653589793 * (h + 0.5) / H) *
                                            std::sin(3.141592653589793 * (w + 0.5) / W) +
                                3.0 * c + jitter(rng);
                phase(c, h, w) = 0.5 * 3.141592653589793 *
                                 (static_cast<double>(h) / H + static_cast<double>(w) / W);
            }

    std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
    Tensor<S> values(Shape{T, C, H, W});
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    double v = base(c, h, w) *
                               (1.0 + daily_amp * std::sin(two_pi * t / steps_per_day + phase(c, h, w)) +
                                weekly_amp * std::sin(two_pi * t / steps_per_week));
                    if (noise_sigma > 0) v += noise(rng);
                    values(t, c, h, w) = static_cast<S>(std::max(0.0, v));
                }
    return GridSeries<S>(std::move(values), steps_per_day);
}

// ---- chronological split ------------------------------------------------------

struct SplitSpec {
    int train_tenths = 7;
    int val_tenths = 1;
    int test_tenths = 2;
    int min_segment_len = 0;  // usually T_in + horizon

    std::string label() const {
        return std::to_string(train_tenths) + ":" + std::to_string(val_tenths) + ":" + std::to_string(test_tenths);
    }
};

template <typename S>
struct Splits {
    GridSeries<S> train, val, test;
    int val_offset = 0;   // global index of the first val step
    int test_offset = 0;  // global index of the first test step
};

template <typename S>
GridSeries<S> slice_time(const GridSeries<S>& g, int start, int len) {
    Tensor<S> out(Shape{len, g.C(), g.H(), g.W()});
    const std::int64_t frame = static_cast<std::int64_t>(g.C()) * g.H() * g.W();
    std::copy(g.values.data.begin() + start * frame, g.values.data.begin() + (start + len) * frame, out.data.begin());
    return GridSeries<S>(std::move(out), g.steps_per_day, g.steps_per_week);
}

template <typename S>
Splits<S> split(const GridSeries<S>& g, const SplitSpec& spec) {
    if (spec.train_tenths + spec.val_tenths + spec.test_tenths != 10)
        throw std::invalid_argument("split ratio must sum to 10 tenths, got " + spec.label());
    const int T = g.T();
    const int train_len = T * spec.train_tenths / 10;
    const int val_len = T * spec.val_tenths / 10;
    const int test_len = T - train_len - val_len;
    auto check = [&](const char* name, int len) {
        if (len < spec.min_segment_len)
            throw std::invalid_argument(std::string(name) + " segment of length " + std::to_string(len) +
                                        " is too short for one window of " + std::to_string(spec.min_segment_len));
    };
    check("train", train_len);
    check("val", val_len);
    check("test", test_len);
    Splits<S> out;
    out.train = slice_time(g, 0, train_len);
    out.val = slice_time(g, train_len, val_len);
    out.test = slice_time(g, train_len + val_len, test_len);
    out.val_offset = train_len;
    out.test_offset = train_len + val_len;
    return out;
}

// ---- normalization ------------------------------------------------------------

struct NormStats {
    double mean = 0.0;
    double std = 1.0;  // floored at 1e-8
};

template <typename S>
NormStats compute_norm_stats(const Tensor<S>& train_values) {
    NormStats st;
    double sum = 0.0;
    for (std::int64_t i = 0; i < train_values.numel(); ++i) sum += static_cast<double>(train_values[i]);
    st.mean = sum / static_cast<double>(train_values.numel());
    double sq = 0.0;
    for (std::int64_t i = 0; i < train_values.numel(); ++i) {
        double d = static_cast<double>(train_values[i]) - st.mean;
        sq += d * d;
    }
    st.std = std::max(1e-8, std::sqrt(sq / static_cast<double>(train_values.numel())));
    return st;
}

template <typename S>
Tensor<S> normalize(const Tensor<S>& t, const NormStats& st) {
    Tensor<S> out = t;
    for (auto& v : out.data) v = static_cast<S>((static_cast<double>(v) - st.mean) / st.std);
    return out;
}

template <typename S>
Tensor<S> denormalize(const Tensor<S>& t, const NormStats& st) {
    Tensor<S> out = t;
    for (auto& v : out.data) v = static_cast<S>(static_cast<double>(v) * st.std + st.mean);
    return out;
}

template <typename S>
GridSeries<S> normalize(const GridSeries<S>& g, const NormStats& st) {
    return GridSeries<S>(normalize(g.values, st), g.steps_per_day, g.steps_per_week);
}

template <typename S>
GridSeries<S> denormalize(const GridSeries<S>& g, const NormStats& st) {
    return GridSeries<S>(denormalize(g.values, st), g.steps_per_day, g.steps_per_week);
}

// ---- sliding windows ----------------------------------------------------------

template <typename S>
struct WindowSample {
    Tensor<S> input;   // (G, T_in)
    Tensor<S> target;  // (G, horizon)
    int start = 0;
};

inline int window_count(int len, int T_in, int horizon, int stride) {
    if (stride < 1) throw std::invalid_argument("window stride must be >= 1");
    if (len < T_in + horizon)
        throw std::invalid_argument("segment of length " + std::to_string(len) + " is too short for one window of " +
                                    std::to_string(T_in + horizon));
    return (len - T_in - horizon) / stride + 1;
}

inline std::vector<int> window_starts(int len, int T_in, int horizon, int stride) {
    const int n = window_count(len, T_in, horizon, stride);
    std::vector<int> starts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) starts[static_cast<std::size_t>(i)] = i * stride;
    return starts;
}

/// Copies columns [start, start+len) of a (G, T) series.
template <typename S>
Tensor<S> copy_window(const Tensor<S>& series, int start, int len) {
    const int G = series.shape[0], T = series.shape[1];
    if (start < 0 || start + len > T)
        throw std::invalid_argument("window [" + std::to_string(start) + "," + std::to_string(start + len) +
                                    ") out of range for length " + std::to_string(T));
    Tensor<S> out(Shape{G, len});
    for (int g = 0; g < G; ++g)
        std::copy(series.data.begin() + static_cast<std::int64_t>(g) * T + start,
                  series.data.begin() + static_cast<std::int64_t>(g) * T + start + len,
                  out.data.begin() + static_cast<std::int64_t>(g) * len);
    return out;
}

template <typename S>
WindowSample<S> extract_window(const Tensor<S>& series, int start, int T_in, int horizon) {
    WindowSample<S> s;
    s.start = start;
    s.input = copy_window(series, start, T_in);
    s.target = copy_window(series, start + T_in, horizon);
    return s;
}

}  // namespace sumformer
