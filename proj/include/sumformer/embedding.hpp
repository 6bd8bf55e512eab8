#pragma once

#include "sumformer/tape.hpp"

namespace sumformer {

/// Grid-shaped mobility record: (T, C, H, W) flow counts plus calendar metadata.
template <typename S>
struct GridSeries {
    Tensor<S> values;  // (T, C, H, W)
    int steps_per_day = 0;
    int steps_per_week = 0;

    GridSeries() = default;
    GridSeries(Tensor<S> v, int per_day) : values(std::move(v)), steps_per_day(per_day), steps_per_week(7 * per_day) {
        validate();
    }
    GridSeries(Tensor<S> v, int per_day, int per_week)
        : values(std::move(v)), steps_per_day(per_day), steps_per_week(per_week) {
        validate();
    }

    int T() const { return values.shape[0]; }
    int C() const { return values.shape[1]; }
    int H() const { return values.shape[2]; }
    int W() const { return values.shape[3]; }
    int variables() const { return C() * H() * W(); }

    void validate() const {
        if (values.rank() != 4)
            throw std::invalid_argument("grid series must be rank 4 (T,C,H,W), got " + shape_str(values.shape));
        if (steps_per_day < 1 || steps_per_week != 7 * steps_per_day)
            throw std::invalid_argument("calendar metadata requires steps_per_week == 7 * steps_per_day");
    }
};

/// (G, T) view of a grid series with G = C*H*W. Row order is fixed to
/// c-major, then h, then w, so exports stay interpretable.
template <typename S>
struct SuperMVSeries {
    Tensor<S> values;  // (G, T)
    int C = 0, H = 0, W = 0;

    int G() const { return values.shape[0]; }
    int T() const { return values.shape[1]; }

    static int row_index(int c, int h, int w, int H, int W) { return (c * H + h) * W + w; }
    int row_index(int c, int h, int w) const { return row_index(c, h, w, H, W); }
};

template <typename S>
SuperMVSeries<S> flatten_video(const GridSeries<S>& g) {
    const int T = g.T(), C = g.C(), H = g.H(), W = g.W();
    SuperMVSeries<S> out;
    out.C = C;
    out.H = H;
    out.W = W;
    out.values = Tensor<S>(Shape{C * H * W, T});
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    out.values(SuperMVSeries<S>::row_index(c, h, w, H, W), t) = g.values(t, c, h, w);
    return out;
}

template <typename S>
GridSeries<S> unflatten_video(const SuperMVSeries<S>& s, int steps_per_day) {
    const int T = s.T(), C = s.C, H = s.H, W = s.W;
    GridSeries<S> g(Tensor<S>(Shape{T, C, H, W}), steps_per_day);
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) g.values(t, c, h, w) = s.values(s.row_index(c, h, w), t);
    return g;
}

/// Temporal patching layout: T = L_seg * N_seg exactly, no padding.
struct PatchConfig {
    int L_seg = 16;
    int N_seg = 0;
    int d_model = 128;
};

inline int patch_count(int T, int L_seg) {
    if (L_seg < 1 || T % L_seg != 0)
        throw std::invalid_argument("series length " + std::to_string(T) + " is not divisible by patch length " +
                                    std::to_string(L_seg));
    return T / L_seg;
}

/// (G, T) -> (G, N_seg, L_seg); patch j covers timesteps [j*L_seg, (j+1)*L_seg).
template <typename S>
Tensor<S> patch_partition(const Tensor<S>& series, int L_seg) {
    if (series.rank() != 2) throw std::invalid_argument("patch_partition expects (G,T), got " + shape_str(series.shape));
    const int G = series.shape[0], T = series.shape[1];
    const int N = patch_count(T, L_seg);
    return reshaped(series, Shape{G, N, L_seg});  // row-major: contiguous split along time
}

template <typename S>
struct EmbeddingParams {
    Parameter<S> w_patch;  // (L_seg, d_model), shared across variables and segments
    Parameter<S> w_pos;    // (G, N_seg, d_model)
};

/// Eq-style token embedding: x' @ w_patch + w_pos.
template <typename S>
Value<S> embed(Tape<S>& tape, const Tensor<S>& patches, EmbeddingParams<S>& p) {
    const int G = patches.shape[0], N = patches.shape[1], L = patches.shape[2];
    const int d = p.w_patch.value.shape[1];
    if (p.w_patch.value.shape[0] != L)
        throw std::invalid_argument("embed: patch length " + std::to_string(L) + " != w_patch rows " +
                                    std::to_string(p.w_patch.value.shape[0]));
    if (p.w_pos.value.shape != Shape{G, N, d})
        throw std::invalid_argument("embed: w_pos shape " + shape_str(p.w_pos.value.shape) + " != " +
                                    shape_str(Shape{G, N, d}));
    Value<S> x = tape.constant(reshaped(patches, Shape{G * N, L}));
    Value<S> tok = matmul(x, tape.param(p.w_patch));
    return add(reshape(tok, Shape{G, N, d}), tape.param(p.w_pos));
}

/// Batched variant; w_pos is tiled across the leading batch axis.
template <typename S>
Value<S> embed_batched(Tape<S>& tape, const Tensor<S>& patches, EmbeddingParams<S>& p, int batch) {
    const int BG = patches.shape[0], N = patches.shape[1], L = patches.shape[2];
    const int G = BG / batch;
    const int d = p.w_patch.value.shape[1];
    Value<S> x = tape.constant(reshaped(patches, Shape{BG * N, L}));
    Value<S> tok = reshape(matmul(x, tape.param(p.w_patch)), Shape{batch, G, N, d});
    Value<S> pos = tile0(tape.param(p.w_pos), batch);
    return reshape(add(tok, pos), Shape{BG, N, d});
}

/// Concatenates r_win adjacent tokens per variable and projects back to
/// d_model with one linear layer. N_seg == 1 passes through unchanged.
template <typename S>
Value<S> patch_merge(Tape<S>& tape, Value<S> x, int r_win, Parameter<S>& merge_weights) {
    const Shape& sh = x.shape();
    if (sh.size() != 3) throw std::invalid_argument("patch_merge expects (G,N,d), got " + shape_str(sh));
    const int G = sh[0], N = sh[1], d = sh[2];
    if (N == 1) return x;
    if (r_win < 1 || N % r_win != 0)
        throw std::invalid_argument("patch count " + std::to_string(N) + " is not divisible by merge window " +
                                    std::to_string(r_win));
    if (merge_weights.value.shape != Shape{r_win * d, d})
        throw std::invalid_argument("merge weights must be " + shape_str(Shape{r_win * d, d}) + ", got " +
                                    shape_str(merge_weights.value.shape));
    // adjacent tokens are contiguous in memory, so the concat is a reshape
    Value<S> grouped = reshape(x, Shape{G * (N / r_win), r_win * d});
    return reshape(matmul(grouped, tape.param(merge_weights)), Shape{G, N / r_win, d});
}

/// Non-overlapping spatio-temporal tubes for the ViT-style tokenization:
/// (T,C,H,W) -> (G_spatial, N_seg, L_spatial^2 * C * L_seg).
template <typename S>
Tensor<S> tube_partition(const GridSeries<S>& g, int L_spatial, int L_seg) {
    const int T = g.T(), C = g.C(), H = g.H(), W = g.W();
    if (L_spatial < 1 || H % L_spatial != 0 || W % L_spatial != 0)
        throw std::invalid_argument("spatial extents " + std::to_string(H) + "x" + std::to_string(W) +
                                    " are not divisible by spatial patch size " + std::to_string(L_spatial));
    const int N = patch_count(T, L_seg);
    const int gh = H / L_spatial, gw = W / L_spatial;
    const int g_spatial = gh * gw;
    const int tube = L_spatial * L_spatial * C * L_seg;
    Tensor<S> out(Shape{g_spatial, N, tube});
    for (int ph = 0; ph < gh; ++ph)
        for (int pw = 0; pw < gw; ++pw)
            for (int j = 0; j < N; ++j) {
                int row = ph * gw + pw;
                int k = 0;
                for (int dh = 0; dh < L_spatial; ++dh)
                    for (int dw = 0; dw < L_spatial; ++dw)
                        for (int c = 0; c < C; ++c)
                            for (int dt = 0; dt < L_seg; ++dt)
                                out(row, j, k++) =
                                    g.values(j * L_seg + dt, c, ph * L_spatial + dh, pw * L_spatial + dw);
            }
    return out;
}

template <typename S>
struct TubeEmbeddingParams {
    Parameter<S> w_tube;  // (tube_len, d_model), shared across tubes
    Parameter<S> w_pos;   // (G_spatial, N_seg, d_model)
};

template <typename S>
Value<S> tube_embed(Tape<S>& tape, const GridSeries<S>& g, int L_spatial, int L_seg, TubeEmbeddingParams<S>& p) {
    Tensor<S> tubes = tube_partition(g, L_spatial, L_seg);
    const int Gs = tubes.shape[0], N = tubes.shape[1], len = tubes.shape[2];
    const int d = p.w_tube.value.shape[1];
    if (p.w_tube.value.shape[0] != len)
        throw std::invalid_argument("tube_embed: tube length " + std::to_string(len) + " != w_tube rows " +
                                    std::to_string(p.w_tube.value.shape[0]));
    Value<S> x = tape.constant(reshaped(tubes, Shape{Gs * N, len}));
    Value<S> tok = reshape(matmul(x, tape.param(p.w_tube)), Shape{Gs, N, d});
    return add(tok, tape.param(p.w_pos));
}

}  // namespace sumformer
