#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "sumformer/tape.hpp"

namespace sumformer {

constexpr double kLayerNormEps = 1e-5;

/// Counts evaluated attention-score pairs (query x key, independent of head
/// count). Thread-local so concurrent tapes do not interfere.
inline thread_local std::uint64_t g_score_pairs = 0;

inline void reset_score_counter() { g_score_pairs = 0; }
inline std::uint64_t score_counter() { return g_score_pairs; }

// ---- multi-head attention ----------------------------------------------------

template <typename S>
struct AttentionParams {
    Parameter<S> wq, wk, wv;  // (d_model, heads * d_qkv)
    Parameter<S> wo;          // (heads * d_qkv, d_model)
    int heads = 1;
    int d_qkv = 0;

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&wq);
        out.push_back(&wk);
        out.push_back(&wv);
        out.push_back(&wo);
    }
};

namespace detail {

/// (Bt, M, d) -> (Bt*heads, M, d_qkv) through one projection matrix.
template <typename S>
Value<S> project_heads(Tape<S>& tape, Value<S> tokens, Parameter<S>& w, int heads, int d_qkv) {
    const Shape& sh = tokens.shape();
    const int Bt = sh[0], M = sh[1], d = sh[2];
    Value<S> flat = matmul(reshape(tokens, Shape{Bt * M, d}), tape.param(w));
    Value<S> split = permute(reshape(flat, Shape{Bt, M, heads, d_qkv}), {0, 2, 1, 3});
    return reshape(split, Shape{Bt * heads, M, d_qkv});
}

template <typename S>
Value<S> merge_heads(Tape<S>& tape, Value<S> x, Parameter<S>& wo, int Bt, int M, int heads, int d_qkv) {
    Value<S> merged = permute(reshape(x, Shape{Bt, heads, M, d_qkv}), {0, 2, 1, 3});
    Value<S> flat = matmul(reshape(merged, Shape{Bt * M, heads * d_qkv}), tape.param(wo));
    const int d = wo.value.shape[1];
    return reshape(flat, Shape{Bt, M, d});
}

}  // namespace detail

/// Scaled-dot-product multi-head attention over each batch slice:
/// queries (Bt, Mq, d) attend to keys/values (Bt, Mk, d). When `scores_out`
/// is non-null it receives the softmax tensor (Bt*heads, Mq, Mk).
template <typename S>
Value<S> batched_mhsa(Tape<S>& tape, Value<S> q_src, Value<S> kv_src, AttentionParams<S>& p,
                      Value<S>* scores_out = nullptr) {
    const Shape& qs = q_src.shape();
    const Shape& ks = kv_src.shape();
    if (qs.size() != 3 || ks.size() != 3 || qs[0] != ks[0] || qs[2] != ks[2])
        throw std::invalid_argument("mhsa shape mismatch: " + shape_str(qs) + " vs " + shape_str(ks));
    const int Bt = qs[0], Mq = qs[1], Mk = ks[1], d = qs[2];
    if (p.wq.value.shape[0] != d)
        throw std::invalid_argument("mhsa: token width " + std::to_string(d) + " != projection rows " +
                                    std::to_string(p.wq.value.shape[0]));
    Value<S> q = detail::project_heads(tape, q_src, p.wq, p.heads, p.d_qkv);
    Value<S> k = detail::project_heads(tape, kv_src, p.wk, p.heads, p.d_qkv);
    Value<S> v = detail::project_heads(tape, kv_src, p.wv, p.heads, p.d_qkv);

    g_score_pairs += static_cast<std::uint64_t>(Bt) * Mq * Mk;
    Value<S> scores = softmax_last(scale(bmm_nt(q, k), S(1) / std::sqrt(static_cast<S>(p.d_qkv))));
    if (scores_out) *scores_out = scores;

    Value<S> ctx = bmm(scores, v);
    return detail::merge_heads(tape, ctx, p.wo, Bt, Mq, p.heads, p.d_qkv);
}

// ---- temporal sub-block -------------------------------------------------------

/// Self-attention across the patches of each variable; parameters are shared
/// over the leading axis (variables, and batch when stacked).
template <typename S>
Value<S> tsb_mhsa(Tape<S>& tape, Value<S> x, AttentionParams<S>& p) {
    return batched_mhsa(tape, x, x, p);
}

template <typename S>
struct MixerParams {
    Parameter<S> w1, w2;  // token-internal: (d, hidden_d), (hidden_d, d)
    Parameter<S> w3, w4;  // cross-patch:    (N, hidden_n), (hidden_n, N)
    double dropout_rate = 0.1;

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&w1);
        out.push_back(&w2);
        out.push_back(&w3);
        out.push_back(&w4);
    }
};

/// MLP-mixer pair: pre-norm residual mix over d_model, then over N_seg.
/// The inner LayerNorms carry no affine parameters.
template <typename S>
Value<S> tsb_mlp(Tape<S>& tape, Value<S> x, MixerParams<S>& p, std::mt19937_64& rng, bool training) {
    const Shape& sh = x.shape();
    const int R = sh[0], N = sh[1], d = sh[2];
    const S eps = static_cast<S>(kLayerNormEps);

    Value<S> t = normalize_last(reshape(x, Shape{R * N, d}), eps);
    t = matmul(t, tape.param(p.w1));
    t = gelu(t);
    t = matmul(t, tape.param(p.w2));
    t = dropout(t, p.dropout_rate, rng, training);
    Value<S> z = add(x, reshape(t, Shape{R, N, d}));

    Value<S> zc = reshape(permute(z, {0, 2, 1}), Shape{R * d, N});
    Value<S> c = normalize_last(zc, eps);
    c = matmul(c, tape.param(p.w3));
    c = gelu(c);
    c = matmul(c, tape.param(p.w4));
    c = dropout(c, p.dropout_rate, rng, training);
    Value<S> mixed = permute(reshape(add(zc, c), Shape{R, d, N}), {0, 2, 1});
    return mixed;
}

// ---- inter-series sub-block ---------------------------------------------------

template <typename S>
struct FullIssbParams {
    AttentionParams<S> attn;
    void collect(std::vector<Parameter<S>*>& out) { attn.collect(out); }
};

template <typename S>
struct DictionaryIssbParams {
    Parameter<S> dic;  // (g, d_model)
    AttentionParams<S> aggregate;  // dictionary queries the inputs
    AttentionParams<S> read;       // inputs query the aggregated message
    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&dic);
        aggregate.collect(out);
        read.collect(out);
    }
};

template <typename S>
struct LowRankIssbParams {
    Parameter<S> w_lin;  // (g, G)
    AttentionParams<S> attn;
    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&w_lin);
        attn.collect(out);
    }
};

template <typename S>
struct AdditiveIssbParams {
    AttentionParams<S> proj;      // wq/wk/wv/wo as in MHSA
    Parameter<S> summary_q;       // (d_qkv)
    Parameter<S> summary_k;       // (d_qkv)
    Parameter<S> w1, w2;          // (d_qkv, d_qkv); w2 projects the key-value
                                  // interaction, w1 the residual sum
    void collect(std::vector<Parameter<S>*>& out) {
        proj.collect(out);
        out.push_back(&summary_q);
        out.push_back(&summary_k);
        out.push_back(&w1);
        out.push_back(&w2);
    }
};

template <typename S>
using IssbParams =
    std::variant<FullIssbParams<S>, DictionaryIssbParams<S>, LowRankIssbParams<S>, AdditiveIssbParams<S>>;

enum class IssbKind { Full, Dictionary, LowRank, Additive };

inline IssbKind issb_kind_from(const std::string& name) {
    if (name == "full") return IssbKind::Full;
    if (name == "dictionary") return IssbKind::Dictionary;
    if (name == "lowrank") return IssbKind::LowRank;
    if (name == "additive") return IssbKind::Additive;
    throw std::invalid_argument("unknown inter-series mechanism '" + name + "'");
}

inline const char* issb_kind_name(IssbKind k) {
    switch (k) {
        case IssbKind::Full: return "full";
        case IssbKind::Dictionary: return "dictionary";
        case IssbKind::LowRank: return "lowrank";
        case IssbKind::Additive: return "additive";
    }
    return "?";
}

/// Captures one softmax row of the full-attention inter-series sub-block.
template <typename S>
struct AttentionProbe {
    int target_layer = 0;
    int patch_index = 0;
    int query_variable = 0;
    bool captured = false;
    Tensor<S> row;  // (G), head-averaged
};

namespace detail {

/// (B*G, N, d) -> (B*N, G, d): group tokens of one patch index across variables.
template <typename S>
Value<S> to_patch_major(Value<S> x, int batch) {
    const Shape& sh = x.shape();
    const int G = sh[0] / batch, N = sh[1], d = sh[2];
    Value<S> grouped = permute(reshape(x, Shape{batch, G, N, d}), {0, 2, 1, 3});
    return reshape(grouped, Shape{batch * N, G, d});
}

template <typename S>
Value<S> from_patch_major(Value<S> x, int batch) {
    const Shape& sh = x.shape();
    const int N = sh[0] / batch, G = sh[1], d = sh[2];
    Value<S> grouped = permute(reshape(x, Shape{batch, N, G, d}), {0, 2, 1, 3});
    return reshape(grouped, Shape{batch * G, N, d});
}

template <typename S>
void capture_probe(AttentionProbe<S>* probe, const Value<S>& scores, int heads) {
    if (!probe) return;
    const Tensor<S>& sc = scores.val();  // (Bt*heads, Mq, Mk)
    const int Mq = sc.shape[1], Mk = sc.shape[2];
    if (probe->patch_index * heads >= sc.shape[0] || probe->query_variable >= Mq)
        throw std::invalid_argument("attention probe out of range");
    probe->row = Tensor<S>(Shape{Mk});
    for (int h = 0; h < heads; ++h)
        for (int k = 0; k < Mk; ++k)
            probe->row(k) += sc(probe->patch_index * heads + h, probe->query_variable, k);
    for (int k = 0; k < Mk; ++k) probe->row(k) /= static_cast<S>(heads);
    probe->captured = true;
}

}  // namespace detail

template <typename S>
Value<S> issb_full(Tape<S>& tape, Value<S> x, int batch, FullIssbParams<S>& p, AttentionProbe<S>* probe = nullptr) {
    Value<S> tokens = detail::to_patch_major(x, batch);
    Value<S> scores;
    Value<S> out = batched_mhsa(tape, tokens, tokens, p.attn, probe ? &scores : nullptr);
    detail::capture_probe(probe, probe ? scores : out, p.attn.heads);
    return detail::from_patch_major(out, batch);
}

template <typename S>
Value<S> issb_dictionary(Tape<S>& tape, Value<S> x, int batch, DictionaryIssbParams<S>& p) {
    Value<S> tokens = detail::to_patch_major(x, batch);
    Value<S> dic = tile0(tape.param(p.dic), tokens.shape()[0]);
    Value<S> message = batched_mhsa(tape, dic, tokens, p.aggregate);
    Value<S> out = batched_mhsa(tape, tokens, message, p.read);
    return detail::from_patch_major(out, batch);
}

template <typename S>
Value<S> issb_lowrank(Tape<S>& tape, Value<S> x, int batch, LowRankIssbParams<S>& p) {
    Value<S> tokens = detail::to_patch_major(x, batch);
    Value<S> compressed = lmatmul(tape.param(p.w_lin), tokens);
    Value<S> out = batched_mhsa(tape, tokens, compressed, p.attn);
    return detail::from_patch_major(out, batch);
}

template <typename S>
Value<S> issb_additive(Tape<S>& tape, Value<S> x, int batch, AdditiveIssbParams<S>& p) {
    Value<S> tokens = detail::to_patch_major(x, batch);
    const int Bt = tokens.shape()[0], G = tokens.shape()[1];
    const int h = p.proj.heads, dq = p.proj.d_qkv;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dq));

    Value<S> q = detail::project_heads(tape, tokens, p.proj.wq, h, dq);  // (Bt*h, G, dq)
    Value<S> k = detail::project_heads(tape, tokens, p.proj.wk, h, dq);
    Value<S> v = detail::project_heads(tape, tokens, p.proj.wv, h, dq);

    auto summarize = [&](Value<S> mat, Parameter<S>& vec) {
        g_score_pairs += static_cast<std::uint64_t>(Bt) * G;
        Value<S> raw = matmul(reshape(mat, Shape{Bt * h * G, dq}), reshape(tape.param(vec), Shape{dq, 1}));
        Value<S> att = softmax_last(scale(reshape(raw, Shape{Bt * h, G}), inv_sqrt));
        return bmm(reshape(att, Shape{Bt * h, 1, G}), mat);  // (Bt*h, 1, dq)
    };

    Value<S> q_global = summarize(q, p.summary_q);
    Value<S> keyed = mul_brow(k, q_global);
    Value<S> k_global = summarize(keyed, p.summary_k);
    Value<S> interaction = mul_brow(v, k_global);

    Value<S> flat = matmul(reshape(interaction, Shape{Bt * h * G, dq}), tape.param(p.w2));
    flat = add(reshape(q, Shape{Bt * h * G, dq}), flat);
    flat = matmul(flat, tape.param(p.w1));
    Value<S> out = detail::merge_heads(tape, reshape(flat, Shape{Bt * h, G, dq}), p.proj.wo, Bt, G, h, dq);
    return detail::from_patch_major(out, batch);
}

/// Dispatch over the four inter-series mechanisms. `x` is (batch*G, N, d).
template <typename S>
Value<S> issb_forward(Tape<S>& tape, Value<S> x, int batch, IssbParams<S>& params,
                      AttentionProbe<S>* probe = nullptr) {
    return std::visit(
        [&](auto& p) -> Value<S> {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, FullIssbParams<S>>)
                return issb_full(tape, x, batch, p, probe);
            else if constexpr (std::is_same_v<P, DictionaryIssbParams<S>>)
                return issb_dictionary(tape, x, batch, p);
            else if constexpr (std::is_same_v<P, LowRankIssbParams<S>>)
                return issb_lowrank(tape, x, batch, p);
            else
                return issb_additive(tape, x, batch, p);
        },
        params);
}

// ---- low-frequency filter sub-block -------------------------------------------

inline int default_keep_bins(int T) { return (rdft_bins(T) + 1) / 2; }

template <typename S>
struct LfsbParams {
    Parameter<S> w1;  // (N_seg * d_model, T_ref): patch -> full series
    Parameter<S> w2;  // (T_ref, N_seg * d_model): series -> patch
    int keep_bins = 0;

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&w1);
        out.push_back(&w2);
    }
};

/// Reshape to full-series rows, translate, low-pass in the frequency domain,
/// translate back, reshape to patches.
template <typename S>
Value<S> lfsb_forward(Tape<S>& tape, Value<S> x, LfsbParams<S>& p) {
    const Shape& sh = x.shape();
    const int R = sh[0], N = sh[1], d = sh[2];
    if (p.w1.value.shape[0] != N * d)
        throw std::invalid_argument("lfsb translator expects " + std::to_string(p.w1.value.shape[0]) +
                                    " features, got " + std::to_string(N * d));
    Value<S> series = matmul(reshape(x, Shape{R, N * d}), tape.param(p.w1));
    Value<S> filtered = lowpass_last(series, p.keep_bins);
    Value<S> back = matmul(filtered, tape.param(p.w2));
    return reshape(back, Shape{R, N, d});
}

// ---- residual wrapper ----------------------------------------------------------

template <typename S>
struct WrapperParams {
    Parameter<S> gamma1, beta1;   // post-sub-block LayerNorm
    Parameter<S> gamma2, beta2;   // post-MLP LayerNorm
    Parameter<S> w_hidden, w_out; // (d, 2d), (2d, d)

    void collect(std::vector<Parameter<S>*>& out) {
        out.push_back(&gamma1);
        out.push_back(&beta1);
        out.push_back(&gamma2);
        out.push_back(&beta2);
        out.push_back(&w_hidden);
        out.push_back(&w_out);
    }
};

/// xhat = LN(x + sub(x)); out = LN(xhat + MLP(xhat)).
template <typename S, typename SubBlock>
Value<S> wrap_residual(Tape<S>& tape, Value<S> x, SubBlock&& sub_block, WrapperParams<S>& p) {
    const Shape sh = x.shape();
    const int d = sh.back();
    const std::int64_t rows = shape_numel(sh) / d;
    const S eps = static_cast<S>(kLayerNormEps);

    Value<S> sub_out = sub_block(x);
    Value<S> xhat = layer_norm_last(add(x, sub_out), tape.param(p.gamma1), tape.param(p.beta1), eps);

    Value<S> m = matmul(reshape(xhat, Shape{static_cast<int>(rows), d}), tape.param(p.w_hidden));
    m = gelu(m);
    m = reshape(matmul(m, tape.param(p.w_out)), sh);
    return layer_norm_last(add(xhat, m), tape.param(p.gamma2), tape.param(p.beta2), eps);
}

}  // namespace sumformer
