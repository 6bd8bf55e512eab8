#pragma once

#include <memory>
#include <optional>
#include <string>

#include "sumformer/blocks.hpp"
#include "sumformer/embedding.hpp"

namespace sumformer {

enum class TsbKind { Mhsa, Mlp, None };

/// One of the seven named configurations (TSB choice x ISSB choice x tokenization).
struct VariantSpec {
    std::string name;
    TsbKind tsb = TsbKind::Mhsa;
    IssbKind issb = IssbKind::Dictionary;
    bool tube = false;          // ViT-style spatio-temporal tube tokens
    bool joint_tokens = false;  // TS: one dictionary attention over all G*N tokens
};

inline VariantSpec variant_from_name(const std::string& name) {
    if (name == "AD") return {name, TsbKind::Mhsa, IssbKind::Dictionary, false, false};
    if (name == "MD") return {name, TsbKind::Mlp, IssbKind::Dictionary, false, false};
    if (name == "AL") return {name, TsbKind::Mhsa, IssbKind::LowRank, false, false};
    if (name == "AA") return {name, TsbKind::Mhsa, IssbKind::Additive, false, false};
    if (name == "AF") return {name, TsbKind::Mhsa, IssbKind::Full, false, false};
    if (name == "TS") return {name, TsbKind::None, IssbKind::Dictionary, false, true};
    if (name == "ViT") return {name, TsbKind::Mhsa, IssbKind::Dictionary, true, false};
    throw std::invalid_argument("unknown variant '" + name + "' (expected AD, MD, AL, AA, AF, TS or ViT)");
}

inline int variant_id(const std::string& name) {
    static const char* names[] = {"AD", "MD", "AL", "AA", "AF", "TS", "ViT"};
    for (int i = 0; i < 7; ++i)
        if (name == names[i]) return i;
    throw std::invalid_argument("unknown variant '" + name + "'");
}

inline std::string variant_name_from_id(int id) {
    static const char* names[] = {"AD", "MD", "AL", "AA", "AF", "TS", "ViT"};
    if (id < 0 || id >= 7) throw std::invalid_argument("bad variant id " + std::to_string(id));
    return names[id];
}

struct ModelConfig {
    int L_seg = 16;
    int d_model = 128;
    int depth = 4;
    int r_win = 2;
    int g = 256;  // dictionary / low-rank width
    int heads = 4;
    int d_qkv = 0;      // 0 -> d_model / heads
    int keep_bins = 0;  // 0 -> lower half of the real-DFT bins
    int horizon = 128;
    int input_len = 128;
    int L_spatial = 2;  // ViT only
    VariantSpec variant = variant_from_name("AD");
    // grid dimensions, filled in from the dataset before building
    int C = 0, H = 0, W = 0;

    int resolved_d_qkv() const {
        if (d_qkv > 0) return d_qkv;
        if (heads < 1 || d_model % heads != 0)
            throw std::invalid_argument("d_model " + std::to_string(d_model) + " not divisible by heads " +
                                        std::to_string(heads) + "; set d_qkv explicitly");
        return d_model / heads;
    }
    int resolved_keep_bins() const { return keep_bins > 0 ? keep_bins : default_keep_bins(input_len); }
    int variables() const { return C * H * W; }
};

/// Token counts entering each block, plus the final count fed to the head.
inline std::vector<int> n_seg_trace(const ModelConfig& cfg) {
    int n = patch_count(cfg.input_len, cfg.L_seg);
    std::vector<int> trace;
    for (int l = 0; l < cfg.depth; ++l) {
        trace.push_back(n);
        if (n > 1) {
            if (n % cfg.r_win != 0)
                throw std::invalid_argument("token count " + std::to_string(n) + " at block " + std::to_string(l) +
                                            " is not divisible by r_win " + std::to_string(cfg.r_win));
            n /= cfg.r_win;
        }
    }
    trace.push_back(n);
    return trace;
}

template <typename S>
struct TvfBlockParams {
    std::optional<AttentionParams<S>> tsb_attn;
    std::optional<MixerParams<S>> tsb_mixer;
    std::optional<WrapperParams<S>> tsb_wrap;
    IssbParams<S> issb;
    WrapperParams<S> issb_wrap;
    LfsbParams<S> lfsb;
    WrapperParams<S> lfsb_wrap;
    std::optional<Parameter<S>> merge;
    int n_seg = 0;  // tokens entering this block
};

template <typename S>
struct ModelParams {
    ModelConfig cfg;
    EmbeddingParams<S> embedding;    // super-multivariate path
    TubeEmbeddingParams<S> tube;     // ViT path
    std::vector<TvfBlockParams<S>> blocks;
    Parameter<S> head_gamma, head_beta;  // pre-head LayerNorm
    Parameter<S> head;                   // (d_model, horizon) or (d_model, horizon*L^2*C) for tubes

    bool uses_tube() const { return cfg.variant.tube && cfg.L_spatial > 1; }
    int token_variables() const {
        return uses_tube() ? (cfg.H / cfg.L_spatial) * (cfg.W / cfg.L_spatial) : cfg.variables();
    }
    int head_width() const {
        return uses_tube() ? cfg.horizon * cfg.L_spatial * cfg.L_spatial * cfg.C : cfg.horizon;
    }
};

namespace detail {

/// Visits every parameter in the fixed initialization/serialization order:
/// embedding, blocks in depth order, head.
template <typename S, typename F>
void visit_params(ModelParams<S>& m, F&& fn) {
    if (m.uses_tube()) {
        fn("embed.w_tube", m.tube.w_tube);
        fn("embed.w_pos", m.tube.w_pos);
    } else {
        fn("embed.w_patch", m.embedding.w_patch);
        fn("embed.w_pos", m.embedding.w_pos);
    }
    auto visit_attn = [&](const std::string& prefix, AttentionParams<S>& a) {
        fn(prefix + ".wq", a.wq);
        fn(prefix + ".wk", a.wk);
        fn(prefix + ".wv", a.wv);
        fn(prefix + ".wo", a.wo);
    };
    auto visit_wrap = [&](const std::string& prefix, WrapperParams<S>& w) {
        fn(prefix + ".gamma1", w.gamma1);
        fn(prefix + ".beta1", w.beta1);
        fn(prefix + ".gamma2", w.gamma2);
        fn(prefix + ".beta2", w.beta2);
        fn(prefix + ".w_hidden", w.w_hidden);
        fn(prefix + ".w_out", w.w_out);
    };
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        auto& b = m.blocks[l];
        std::string bp = "block" + std::to_string(l);
        if (b.tsb_attn) visit_attn(bp + ".tsb.attn", *b.tsb_attn);
        if (b.tsb_mixer) {
            fn(bp + ".tsb.mixer.w1", b.tsb_mixer->w1);
            fn(bp + ".tsb.mixer.w2", b.tsb_mixer->w2);
            fn(bp + ".tsb.mixer.w3", b.tsb_mixer->w3);
            fn(bp + ".tsb.mixer.w4", b.tsb_mixer->w4);
        }
        if (b.tsb_wrap) visit_wrap(bp + ".tsb.wrap", *b.tsb_wrap);
        std::visit(
            [&](auto& ip) {
                using P = std::decay_t<decltype(ip)>;
                if constexpr (std::is_same_v<P, FullIssbParams<S>>) {
                    visit_attn(bp + ".issb.attn", ip.attn);
                } else if constexpr (std::is_same_v<P, DictionaryIssbParams<S>>) {
                    fn(bp + ".issb.dic", ip.dic);
                    visit_attn(bp + ".issb.agg", ip.aggregate);
                    visit_attn(bp + ".issb.read", ip.read);
                } else if constexpr (std::is_same_v<P, LowRankIssbParams<S>>) {
                    fn(bp + ".issb.w_lin", ip.w_lin);
                    visit_attn(bp + ".issb.attn", ip.attn);
                } else {
                    visit_attn(bp + ".issb.proj", ip.proj);
                    fn(bp + ".issb.summary_q", ip.summary_q);
                    fn(bp + ".issb.summary_k", ip.summary_k);
                    fn(bp + ".issb.w1", ip.w1);
                    fn(bp + ".issb.w2", ip.w2);
                }
            },
            b.issb);
        visit_wrap(bp + ".issb.wrap", b.issb_wrap);
        fn(bp + ".lfsb.w1", b.lfsb.w1);
        fn(bp + ".lfsb.w2", b.lfsb.w2);
        visit_wrap(bp + ".lfsb.wrap", b.lfsb_wrap);
        if (b.merge) fn(bp + ".merge", *b.merge);
    }
    fn("head.gamma", m.head_gamma);
    fn("head.beta", m.head_beta);
    fn("head.w", m.head);
}

template <typename S>
struct ParamInit {
    std::mt19937_64 rng;
    explicit ParamInit(std::uint64_t seed) : rng(seed) {}

    Parameter<S> uniform(Shape sh, int fan_in) {
        Tensor<S> t(sh);
        S bound = S(1) / std::sqrt(static_cast<S>(fan_in));
        fill_uniform(t, -bound, bound, rng);
        return Parameter<S>(std::move(t));
    }
    Parameter<S> linear(int rows, int cols) { return uniform(Shape{rows, cols}, rows); }
    Parameter<S> zeros(Shape sh) { return Parameter<S>(Tensor<S>::zeros(std::move(sh))); }
    Parameter<S> ones(Shape sh) { return Parameter<S>(Tensor<S>::full(std::move(sh), S(1))); }

    AttentionParams<S> attention(int d_model, int heads, int d_qkv) {
        AttentionParams<S> a;
        a.heads = heads;
        a.d_qkv = d_qkv;
        a.wq = linear(d_model, heads * d_qkv);
        a.wk = linear(d_model, heads * d_qkv);
        a.wv = linear(d_model, heads * d_qkv);
        a.wo = linear(heads * d_qkv, d_model);
        return a;
    }
    WrapperParams<S> wrapper(int d_model) {
        WrapperParams<S> w;
        w.gamma1 = ones(Shape{d_model});
        w.beta1 = zeros(Shape{d_model});
        w.gamma2 = ones(Shape{d_model});
        w.beta2 = zeros(Shape{d_model});
        w.w_hidden = linear(d_model, 2 * d_model);
        w.w_out = linear(2 * d_model, d_model);
        return w;
    }
};

}  // namespace detail

/// Deterministic parameter allocation for one variant; throws on invalid
/// configurations (unknown variant, tube tokenization outside ViT,
/// indivisible patching, token count not reducing to one).
template <typename S>
ModelParams<S> build_model(const ModelConfig& config, std::uint64_t seed) {
    ModelConfig cfg = config;
    variant_id(cfg.variant.name);  // validates the name
    if (cfg.variant.tube && cfg.variant.name != "ViT")
        throw std::invalid_argument("tube tokenization is only available for the ViT variant");
    if (cfg.C < 1 || cfg.H < 1 || cfg.W < 1)
        throw std::invalid_argument("model config needs grid dimensions C,H,W >= 1");
    if (cfg.g < 1) throw std::invalid_argument("dictionary size g must be >= 1");
    if (cfg.horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    // spatial patch size 1 degenerates to the standard super-multivariate path
    if (cfg.variant.tube && cfg.L_spatial == 1) cfg.variant.tube = false;
    if (cfg.variant.tube && (cfg.H % cfg.L_spatial != 0 || cfg.W % cfg.L_spatial != 0))
        throw std::invalid_argument("grid " + std::to_string(cfg.H) + "x" + std::to_string(cfg.W) +
                                    " is not divisible by L_spatial " + std::to_string(cfg.L_spatial));

    const int d = cfg.d_model;
    const int dq = cfg.resolved_d_qkv();
    const int keep = cfg.resolved_keep_bins();
    if (keep < 1 || keep > rdft_bins(cfg.input_len))
        throw std::invalid_argument("keep_bins " + std::to_string(keep) + " out of range for input length " +
                                    std::to_string(cfg.input_len));
    std::vector<int> trace = n_seg_trace(cfg);
    if (trace.back() != 1)
        throw std::invalid_argument("token count ends at " + std::to_string(trace.back()) +
                                    " after " + std::to_string(cfg.depth) + " blocks; it must reach 1");

    ModelParams<S> m;
    m.cfg = cfg;
    detail::ParamInit<S> init(seed);

    const bool tube = m.uses_tube();
    const int g_vars = m.token_variables();
    const int n0 = trace[0];
    if (tube) {
        const int tube_len = cfg.L_spatial * cfg.L_spatial * cfg.C * cfg.L_seg;
        m.tube.w_tube = init.linear(tube_len, d);
        m.tube.w_pos = init.zeros(Shape{g_vars, n0, d});
    } else {
        m.embedding.w_patch = init.linear(cfg.L_seg, d);
        m.embedding.w_pos = init.zeros(Shape{g_vars, n0, d});
    }

    m.blocks.resize(static_cast<std::size_t>(cfg.depth));
    for (int l = 0; l < cfg.depth; ++l) {
        auto& b = m.blocks[static_cast<std::size_t>(l)];
        b.n_seg = trace[static_cast<std::size_t>(l)];
        switch (cfg.variant.tsb) {
            case TsbKind::Mhsa:
                b.tsb_attn = init.attention(d, cfg.heads, dq);
                b.tsb_wrap = init.wrapper(d);
                break;
            case TsbKind::Mlp: {
                MixerParams<S> mix;
                mix.w1 = init.linear(d, 2 * d);
                mix.w2 = init.linear(2 * d, d);
                mix.w3 = init.linear(b.n_seg, 2 * b.n_seg);
                mix.w4 = init.linear(2 * b.n_seg, b.n_seg);
                b.tsb_mixer = std::move(mix);
                b.tsb_wrap = init.wrapper(d);
                break;
            }
            case TsbKind::None:
                break;
        }
        switch (cfg.variant.issb) {
            case IssbKind::Full: {
                FullIssbParams<S> p;
                p.attn = init.attention(d, cfg.heads, dq);
                b.issb = std::move(p);
                break;
            }
            case IssbKind::Dictionary: {
                DictionaryIssbParams<S> p;
                p.dic = init.uniform(Shape{cfg.g, d}, d);
                p.aggregate = init.attention(d, cfg.heads, dq);
                p.read = init.attention(d, cfg.heads, dq);
                b.issb = std::move(p);
                break;
            }
            case IssbKind::LowRank: {
                LowRankIssbParams<S> p;
                const int width = cfg.variant.joint_tokens ? g_vars * b.n_seg : g_vars;
                p.w_lin = init.uniform(Shape{cfg.g, width}, width);
                p.attn = init.attention(d, cfg.heads, dq);
                b.issb = std::move(p);
                break;
            }
            case IssbKind::Additive: {
                AdditiveIssbParams<S> p;
                p.proj = init.attention(d, cfg.heads, dq);
                p.summary_q = init.uniform(Shape{dq}, dq);
                p.summary_k = init.uniform(Shape{dq}, dq);
                p.w1 = init.linear(dq, dq);
                p.w2 = init.linear(dq, dq);
                b.issb = std::move(p);
                break;
            }
        }
        b.issb_wrap = init.wrapper(d);
        b.lfsb.w1 = init.linear(b.n_seg * d, cfg.input_len);
        b.lfsb.w2 = init.linear(cfg.input_len, b.n_seg * d);
        b.lfsb.keep_bins = keep;
        b.lfsb_wrap = init.wrapper(d);
        if (b.n_seg > 1) b.merge = init.linear(cfg.r_win * d, d);
    }

    m.head_gamma = init.ones(Shape{d});
    m.head_beta = init.zeros(Shape{d});
    m.head = init.linear(d, m.head_width());
    return m;
}

template <typename S>
std::vector<Parameter<S>*> parameter_registry(ModelParams<S>& m) {
    std::vector<Parameter<S>*> out;
    detail::visit_params(m, [&](const std::string&, Parameter<S>& p) { out.push_back(&p); });
    return out;
}

template <typename S>
std::vector<std::string> parameter_names(ModelParams<S>& m) {
    std::vector<std::string> out;
    detail::visit_params(m, [&](const std::string& n, Parameter<S>&) { out.push_back(n); });
    return out;
}

template <typename S>
Parameter<S>* find_parameter(ModelParams<S>& m, const std::string& name) {
    Parameter<S>* found = nullptr;
    detail::visit_params(m, [&](const std::string& n, Parameter<S>& p) {
        if (n == name) found = &p;
    });
    return found;
}

inline std::int64_t param_count(const ModelConfig& cfg) {
    auto m = build_model<float>(cfg, 0);
    std::int64_t n = 0;
    detail::visit_params(m, [&](const std::string&, Parameter<float>& p) { n += p.value.numel(); });
    return n;
}

// ---- forward ------------------------------------------------------------------

template <typename S>
struct ForwardCtx {
    bool training = false;
    std::mt19937_64* rng = nullptr;
    AttentionProbe<S>* probe = nullptr;
};

namespace detail {

template <typename S>
Value<S> run_blocks(Tape<S>& tape, ModelParams<S>& m, Value<S> x, int batch, ForwardCtx<S>& ctx) {
    std::mt19937_64 fallback_rng(0);
    std::mt19937_64& rng = ctx.rng ? *ctx.rng : fallback_rng;
    const ModelConfig& cfg = m.cfg;
    for (std::size_t l = 0; l < m.blocks.size(); ++l) {
        auto& b = m.blocks[l];
        if (b.tsb_attn)
            x = wrap_residual(tape, x, [&](Value<S> v) { return tsb_mhsa(tape, v, *b.tsb_attn); }, *b.tsb_wrap);
        else if (b.tsb_mixer)
            x = wrap_residual(
                tape, x, [&](Value<S> v) { return tsb_mlp(tape, v, *b.tsb_mixer, rng, ctx.training); }, *b.tsb_wrap);

        AttentionProbe<S>* probe =
            (ctx.probe && ctx.probe->target_layer == static_cast<int>(l)) ? ctx.probe : nullptr;
        auto issb_sub = [&](Value<S> v) -> Value<S> {
            if (cfg.variant.joint_tokens) {
                const Shape sh = v.shape();  // (batch*G, N, d)
                Value<S> joint = reshape(v, Shape{sh[0] * sh[1], 1, sh[2]});
                Value<S> out = issb_forward(tape, joint, batch, b.issb, probe);
                return reshape(out, sh);
            }
            return issb_forward(tape, v, batch, b.issb, probe);
        };
        x = wrap_residual(tape, x, issb_sub, b.issb_wrap);

        x = wrap_residual(tape, x, [&](Value<S> v) { return lfsb_forward(tape, v, b.lfsb); }, b.lfsb_wrap);

        if (b.merge) x = patch_merge(tape, x, cfg.r_win, *b.merge);
    }
    return x;
}

template <typename S>
Value<S> run_head(Tape<S>& tape, ModelParams<S>& m, Value<S> tokens) {
    const Shape& sh = tokens.shape();  // (rows, 1, d)
    if (sh[1] != 1) throw std::logic_error("head expects a single fused token per variable");
    const int rows = sh[0], d = sh[2];
    Value<S> flat = reshape(tokens, Shape{rows, d});
    flat = layer_norm_last(flat, tape.param(m.head_gamma), tape.param(m.head_beta), static_cast<S>(kLayerNormEps));
    return matmul(flat, tape.param(m.head));
}

}  // namespace detail

/// Pipeline for super-multivariate tokens: windows (B, G, T) -> (B, G, horizon),
/// in normalized units.
template <typename S>
Value<S> forward_super_batched(Tape<S>& tape, ModelParams<S>& m, const Tensor<S>& windows, ForwardCtx<S>& ctx) {
    if (m.uses_tube()) throw std::invalid_argument("tube-tokenized model fed super-multivariate windows");
    const ModelConfig& cfg = m.cfg;
    if (windows.rank() != 3 || windows.shape[1] != cfg.variables() || windows.shape[2] != cfg.input_len)
        throw std::invalid_argument("window tensor " + shape_str(windows.shape) + " does not match config (B," +
                                    std::to_string(cfg.variables()) + "," + std::to_string(cfg.input_len) + ")");
    const int B = windows.shape[0], G = windows.shape[1];
    const int N = patch_count(cfg.input_len, cfg.L_seg);
    Tensor<S> patches = reshaped(windows, Shape{B * G, N, cfg.L_seg});
    Value<S> x = embed_batched(tape, patches, m.embedding, B);
    x = detail::run_blocks(tape, m, x, B, ctx);
    Value<S> y = detail::run_head(tape, m, x);
    return reshape(y, Shape{B, G, cfg.horizon});
}

/// Pipeline for tube tokens: grid windows (B, T, C, H, W) -> raw head outputs
/// (B * G_spatial, horizon * L_spatial^2 * C), in normalized units. Targets for
/// the loss come from tube_partition-ing the target grids the same way.
template <typename S>
Value<S> forward_tube_batched(Tape<S>& tape, ModelParams<S>& m, const std::vector<Tensor<S>>& grid_windows,
                              ForwardCtx<S>& ctx) {
    if (!m.uses_tube()) throw std::invalid_argument("super-multivariate model fed tube windows");
    const ModelConfig& cfg = m.cfg;
    const int B = static_cast<int>(grid_windows.size());
    const int Gs = m.token_variables();
    const int N = patch_count(cfg.input_len, cfg.L_seg);
    const int tube_len = cfg.L_spatial * cfg.L_spatial * cfg.C * cfg.L_seg;
    Tensor<S> tubes(Shape{B * Gs, N, tube_len});
    for (int i = 0; i < B; ++i) {
        GridSeries<S> win(grid_windows[static_cast<std::size_t>(i)], 1);
        Tensor<S> t = tube_partition(win, cfg.L_spatial, cfg.L_seg);
        std::copy(t.data.begin(), t.data.end(), tubes.data.begin() + static_cast<std::int64_t>(i) * t.numel());
    }
    Value<S> flat = matmul(tape.constant(reshaped(tubes, Shape{B * Gs * N, tube_len})), tape.param(m.tube.w_tube));
    Value<S> x = reshape(flat, Shape{B, Gs, N, cfg.d_model});
    x = add(x, tile0(tape.param(m.tube.w_pos), B));
    x = reshape(x, Shape{B * Gs, N, cfg.d_model});
    x = detail::run_blocks(tape, m, x, B, ctx);
    return detail::run_head(tape, m, x);  // (B*Gs, head_width)
}

/// Rearranges tube head outputs back into a grid forecast (horizon, C, H, W).
/// The per-token layout matches tube_partition: (dh, dw, c, t).
template <typename S>
Tensor<S> tube_to_grid(const ModelConfig& cfg, const Tensor<S>& head_out) {
    const int L = cfg.L_spatial, C = cfg.C, H = cfg.H, W = cfg.W, tau = cfg.horizon;
    const int gw = W / L;
    Tensor<S> out(Shape{tau, C, H, W});
    for (int row = 0; row < head_out.shape[0]; ++row) {
        const int ph = row / gw, pw = row % gw;
        int k = 0;
        for (int dh = 0; dh < L; ++dh)
            for (int dw = 0; dw < L; ++dw)
                for (int c = 0; c < C; ++c)
                    for (int t = 0; t < tau; ++t) out(t, c, ph * L + dh, pw * L + dw) = head_out(row, k++);
    }
    return out;
}

/// Single-window forecast in the input's units (caller handles normalization):
/// (T, C, H, W) -> (horizon, C, H, W). Deterministic; dropout inactive.
template <typename S>
Tensor<S> forward(ModelParams<S>& m, const GridSeries<S>& window) {
    const ModelConfig& cfg = m.cfg;
    if (window.T() != cfg.input_len || window.C() != cfg.C || window.H() != cfg.H || window.W() != cfg.W)
        throw std::invalid_argument("window " + shape_str(window.values.shape) + " does not match model config");
    Tape<S> tape;
    ForwardCtx<S> ctx;
    if (m.uses_tube()) {
        Value<S> y = forward_tube_batched(tape, m, std::vector<Tensor<S>>{window.values}, ctx);
        return tube_to_grid(cfg, y.val());
    }
    SuperMVSeries<S> s = flatten_video(window);
    Tensor<S> batch1 = reshaped(s.values, Shape{1, s.G(), s.T()});
    Value<S> y = forward_super_batched(tape, m, batch1, ctx);
    const Tensor<S>& yv = y.val();  // (1, G, tau)
    Tensor<S> out(Shape{cfg.horizon, cfg.C, cfg.H, cfg.W});
    for (int c = 0; c < cfg.C; ++c)
        for (int h = 0; h < cfg.H; ++h)
            for (int w = 0; w < cfg.W; ++w) {
                int row = SuperMVSeries<S>::row_index(c, h, w, cfg.H, cfg.W);
                for (int t = 0; t < cfg.horizon; ++t) out(t, c, h, w) = yv(0, row, t);
            }
    return out;
}

/// Softmax row of the full-attention inter-series sub-block for one query
/// variable, averaged over heads; only defined for the full mechanism.
template <typename S>
Tensor<S> export_attention(ModelParams<S>& m, const Tensor<S>& super_window, int variable, int layer,
                           int patch_index) {
    if (m.cfg.variant.issb != IssbKind::Full)
        throw std::invalid_argument("attention export requires the full-attention variant, model is '" +
                                    std::string(issb_kind_name(m.cfg.variant.issb)) + "'");
    if (layer < 0 || layer >= static_cast<int>(m.blocks.size()))
        throw std::invalid_argument("layer " + std::to_string(layer) + " out of range");
    if (patch_index < 0 || patch_index >= m.blocks[static_cast<std::size_t>(layer)].n_seg)
        throw std::invalid_argument("patch index " + std::to_string(patch_index) + " out of range for layer " +
                                    std::to_string(layer));
    if (variable < 0 || variable >= m.cfg.variables())
        throw std::invalid_argument("variable " + std::to_string(variable) + " out of range");
    Tape<S> tape;
    AttentionProbe<S> probe;
    probe.target_layer = layer;
    probe.patch_index = patch_index;
    probe.query_variable = variable;
    ForwardCtx<S> ctx;
    ctx.probe = &probe;
    Tensor<S> batch1 = reshaped(super_window, Shape{1, super_window.shape[0], super_window.shape[1]});
    forward_super_batched(tape, m, batch1, ctx);
    if (!probe.captured) throw std::logic_error("attention probe was not reached");
    return probe.row;
}

}  // namespace sumformer
