#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>

#include "sumformer/baselines.hpp"
#include "sumformer/checkpoint.hpp"
#include "sumformer/config.hpp"

namespace sumformer {

/// Warmup epochs run at a constant warmup_lr; afterwards the rate follows a
/// per-iteration cosine from peak_lr down to min_lr at the very last step.
inline double lr_at(int epoch, std::int64_t step_in_epoch, std::int64_t steps_per_epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs)
        throw std::invalid_argument("epoch " + std::to_string(epoch) + " outside [0," + std::to_string(cfg.epochs) + ")");
    if (epoch < cfg.warmup_epochs) return cfg.warmup_lr;
    const std::int64_t total = static_cast<std::int64_t>(cfg.epochs - cfg.warmup_epochs) * steps_per_epoch;
    const std::int64_t index = static_cast<std::int64_t>(epoch - cfg.warmup_epochs) * steps_per_epoch + step_in_epoch;
    const double t = total > 1 ? static_cast<double>(index) / static_cast<double>(total - 1) : 0.0;
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + std::cos(3.141592653589793 * t));
}

// ---- data preparation -----------------------------------------------------------

template <typename S>
struct PreparedData {
    NormStats stats;
    int G = 0;
    int steps_per_day = 0;
    int steps_per_week = 0;
    // normalized and raw super-multivariate segments, (G, len)
    Tensor<S> train_norm, val_norm, test_norm;
    Tensor<S> train_raw, val_raw, test_raw;
    int val_offset = 0, test_offset = 0;
    // normalized grid segments, kept only for tube-tokenized models
    GridSeries<S> train_grid, val_grid, test_grid;
    bool has_grids = false;
};

template <typename S>
PreparedData<S> prepare_data(const GridSeries<S>& g, const SplitSpec& spec, bool keep_grids) {
    Splits<S> sp = split(g, spec);
    PreparedData<S> out;
    out.stats = compute_norm_stats(sp.train.values);
    out.G = g.variables();
    out.steps_per_day = g.steps_per_day;
    out.steps_per_week = g.steps_per_week;
    out.val_offset = sp.val_offset;
    out.test_offset = sp.test_offset;
    out.train_raw = flatten_video(sp.train).values;
    out.val_raw = flatten_video(sp.val).values;
    out.test_raw = flatten_video(sp.test).values;
    out.train_norm = normalize(out.train_raw, out.stats);
    out.val_norm = normalize(out.val_raw, out.stats);
    out.test_norm = normalize(out.test_raw, out.stats);
    if (keep_grids) {
        out.train_grid = normalize(sp.train, out.stats);
        out.val_grid = normalize(sp.val, out.stats);
        out.test_grid = normalize(sp.test, out.stats);
        out.has_grids = true;
    }
    return out;
}

// ---- evaluation -------------------------------------------------------------------

struct EvalMetrics {
    double mse_norm = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    int windows = 0;
};

namespace detail {

template <typename S>
Tensor<S> stack_windows(const Tensor<S>& series, const std::vector<int>& starts, std::size_t from, int count,
                        int offset, int len) {
    const int G = series.shape[0];
    Tensor<S> out(Shape{count, G, len});
    for (int b = 0; b < count; ++b) {
        Tensor<S> w = copy_window(series, starts[from + static_cast<std::size_t>(b)] + offset, len);
        std::copy(w.data.begin(), w.data.end(), out.data.begin() + static_cast<std::int64_t>(b) * G * len);
    }
    return out;
}

}  // namespace detail

/// Runs non-overlapping (stride = horizon by default) evaluation windows.
/// MSE is accumulated in normalized space, MAE/RMSE on denormalized values
/// pooled over all windows and elements.
template <typename S>
EvalMetrics evaluate_model(ModelParams<S>& m, const Tensor<S>& norm_super, const Tensor<S>& raw_super,
                           const NormStats& stats, int stride, int batch_cap = 16) {
    const ModelConfig& cfg = m.cfg;
    const int T_in = cfg.input_len, tau = cfg.horizon;
    std::vector<int> starts = window_starts(norm_super.shape[1], T_in, tau, stride);
    const int G = norm_super.shape[0];
    EvalMetrics out;
    MetricAccumulator acc;
    double sq_norm_sum = 0.0;
    std::int64_t norm_count = 0;
    ForwardCtx<S> ctx;
    for (std::size_t ofs = 0; ofs < starts.size(); ofs += static_cast<std::size_t>(batch_cap)) {
        const int bsz = static_cast<int>(std::min(starts.size() - ofs, static_cast<std::size_t>(batch_cap)));
        Tensor<S> inputs = detail::stack_windows(norm_super, starts, ofs, bsz, 0, T_in);
        Tape<S> tape;
        Value<S> pred = forward_super_batched(tape, m, inputs, ctx);
        const Tensor<S>& pv = pred.val();  // (B, G, tau)
        for (int b = 0; b < bsz; ++b) {
            const int s = starts[ofs + static_cast<std::size_t>(b)];
            Tensor<S> pred_b(Shape{G, tau});
            std::copy(pv.data.begin() + static_cast<std::int64_t>(b) * G * tau,
                      pv.data.begin() + static_cast<std::int64_t>(b + 1) * G * tau, pred_b.data.begin());
            Tensor<S> target_norm = copy_window(norm_super, s + T_in, tau);
            for (std::int64_t i = 0; i < pred_b.numel(); ++i) {
                const double e = static_cast<double>(pred_b[i]) - static_cast<double>(target_norm[i]);
                sq_norm_sum += e * e;
            }
            norm_count += pred_b.numel();
            acc.add(denormalize(pred_b, stats), copy_window(raw_super, s + T_in, tau));
        }
    }
    out.windows = static_cast<int>(starts.size());
    out.mse_norm = norm_count ? sq_norm_sum / static_cast<double>(norm_count) : 0.0;
    out.mae = acc.mae();
    out.rmse = acc.rmse();
    return out;
}

/// Tube-tokenized twin of evaluate_model; predictions and targets are compared
/// in tube layout (metrics are permutation-invariant).
template <typename S>
EvalMetrics evaluate_model_tube(ModelParams<S>& m, const GridSeries<S>& norm_grid, const GridSeries<S>& raw_grid,
                                const NormStats& stats, int stride) {
    const ModelConfig& cfg = m.cfg;
    const int T_in = cfg.input_len, tau = cfg.horizon;
    std::vector<int> starts = window_starts(norm_grid.T(), T_in, tau, stride);
    EvalMetrics out;
    MetricAccumulator acc;
    double sq_norm_sum = 0.0;
    std::int64_t norm_count = 0;
    ForwardCtx<S> ctx;
    const int Gs = m.token_variables();
    const int width = m.head_width();
    for (int s : starts) {
        Tape<S> tape;
        std::vector<Tensor<S>> wins{slice_time(norm_grid, s, T_in).values};
        Value<S> pred = forward_tube_batched(tape, m, wins, ctx);
        Tensor<S> pred_t = reshaped(pred.val(), Shape{Gs, width});
        GridSeries<S> norm_target = slice_time(norm_grid, s + T_in, tau);
        GridSeries<S> raw_target = slice_time(raw_grid, s + T_in, tau);
        Tensor<S> target_norm = reshaped(tube_partition(norm_target, cfg.L_spatial, tau), Shape{Gs, width});
        Tensor<S> target_raw = reshaped(tube_partition(raw_target, cfg.L_spatial, tau), Shape{Gs, width});
        for (std::int64_t i = 0; i < pred_t.numel(); ++i) {
            const double e = static_cast<double>(pred_t[i]) - static_cast<double>(target_norm[i]);
            sq_norm_sum += e * e;
        }
        norm_count += pred_t.numel();
        acc.add(denormalize(pred_t, stats), target_raw);
    }
    out.windows = static_cast<int>(starts.size());
    out.mse_norm = norm_count ? sq_norm_sum / static_cast<double>(norm_count) : 0.0;
    out.mae = acc.mae();
    out.rmse = acc.rmse();
    return out;
}

template <typename S>
EvalMetrics evaluate_any(ModelParams<S>& m, PreparedData<S>& data, int segment /*0 train, 1 val, 2 test*/,
                         int stride) {
    if (m.uses_tube()) {
        if (!data.has_grids) throw std::logic_error("grid segments were not prepared for a tube model");
        const GridSeries<S>& norm = segment == 0 ? data.train_grid : segment == 1 ? data.val_grid : data.test_grid;
        GridSeries<S> raw(denormalize(norm.values, data.stats), norm.steps_per_day, norm.steps_per_week);
        return evaluate_model_tube(m, norm, raw, data.stats, stride);
    }
    const Tensor<S>& norm = segment == 0 ? data.train_norm : segment == 1 ? data.val_norm : data.test_norm;
    const Tensor<S>& raw = segment == 0 ? data.train_raw : segment == 1 ? data.val_raw : data.test_raw;
    return evaluate_model(m, norm, raw, data.stats, stride);
}

// ---- training loop ----------------------------------------------------------------

struct EpochLog {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double last_lr = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_val = 0.0;
    EvalMetrics test_at_best;
    EvalMetrics test_at_final;
    std::string best_checkpoint;
    std::string final_checkpoint;
    std::string variant;
    std::string scenario;
};

template <typename S>
TrainResult train(const TrainConfig& tc, ModelConfig mc, PreparedData<S>& data, const std::string& out_dir,
                  bool verbose = true) {
    tc.validate();
    mc.input_len = tc.T_in;
    mc.horizon = tc.horizon;
    std::filesystem::create_directories(out_dir);

    ModelParams<S> model = build_model<S>(mc, tc.seed);
    std::vector<Parameter<S>*> registry = parameter_registry(model);
    AdamState<S> opt(registry);

    const bool tube = model.uses_tube();
    const int T_in = tc.T_in, tau = tc.horizon;
    const int train_len = tube ? data.train_grid.T() : data.train_norm.shape[1];
    std::vector<int> starts = window_starts(train_len, T_in, tau, 1);
    const std::int64_t steps_per_epoch =
        (static_cast<std::int64_t>(starts.size()) + tc.batch_size - 1) / tc.batch_size;

    std::mt19937_64 shuffle_rng(tc.seed);
    std::mt19937_64 dropout_rng(tc.seed + 1);

    TrainResult result;
    result.variant = mc.variant.name;
    result.scenario = tc.scenario();
    result.best_checkpoint = out_dir + "/best.sumf";
    result.final_checkpoint = out_dir + "/final.sumf";
    double best_val = std::numeric_limits<double>::infinity();

    const int G = data.G;
    const int Gs = model.token_variables();
    const int width = model.head_width();

    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        std::shuffle(starts.begin(), starts.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::int64_t sample_count = 0;
        double last_lr = 0.0;
        std::int64_t step = 0;
        for (std::size_t ofs = 0; ofs < starts.size(); ofs += static_cast<std::size_t>(tc.batch_size), ++step) {
            const int bsz = static_cast<int>(std::min(starts.size() - ofs, static_cast<std::size_t>(tc.batch_size)));
            Tape<S> tape;
            ForwardCtx<S> ctx;
            ctx.training = true;
            ctx.rng = &dropout_rng;
            Value<S> loss;
            if (tube) {
                std::vector<Tensor<S>> wins;
                wins.reserve(static_cast<std::size_t>(bsz));
                Tensor<S> targets(Shape{bsz * Gs, width});
                for (int b = 0; b < bsz; ++b) {
                    const int s = starts[ofs + static_cast<std::size_t>(b)];
                    wins.push_back(slice_time(data.train_grid, s, T_in).values);
                    GridSeries<S> tg = slice_time(data.train_grid, s + T_in, tau);
                    Tensor<S> tt = tube_partition(tg, mc.L_spatial, tau);
                    std::copy(tt.data.begin(), tt.data.end(),
                              targets.data.begin() + static_cast<std::int64_t>(b) * Gs * width);
                }
                Value<S> pred = forward_tube_batched(tape, model, wins, ctx);
                loss = mse(pred, tape.constant(std::move(targets)));
            } else {
                Tensor<S> inputs = detail::stack_windows(data.train_norm, starts, ofs, bsz, 0, T_in);
                Tensor<S> targets(Shape{bsz, G, tau});
                for (int b = 0; b < bsz; ++b) {
                    Tensor<S> w = copy_window(data.train_norm, starts[ofs + static_cast<std::size_t>(b)] + T_in, tau);
                    std::copy(w.data.begin(), w.data.end(),
                              targets.data.begin() + static_cast<std::int64_t>(b) * G * tau);
                }
                Value<S> pred = forward_super_batched(tape, model, inputs, ctx);
                loss = mse(pred, tape.constant(std::move(targets)));
            }
            const double loss_val = static_cast<double>(loss.val()[0]);
            if (!std::isfinite(loss_val))
                throw std::runtime_error("non-finite training loss " + std::to_string(loss_val) + " at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step) + "; aborting");
            zero_grads(registry);
            tape.backward(loss);
            last_lr = lr_at(epoch, step, steps_per_epoch, tc);
            adam_step(registry, opt, last_lr);
            loss_sum += loss_val * bsz;
            sample_count += bsz;
        }

        EvalMetrics val = evaluate_any(model, data, 1, tau);
        EpochLog log;
        log.epoch = epoch;
        log.train_mse = loss_sum / static_cast<double>(sample_count);
        log.val_mse = val.mse_norm;
        log.last_lr = last_lr;
        result.epochs.push_back(log);
        if (verbose)
            std::cout << "epoch " << epoch << " train_mse " << log.train_mse << " val_mse " << log.val_mse
                      << " lr " << last_lr << "\n";
        if (val.mse_norm < best_val) {
            best_val = val.mse_norm;
            result.best_epoch = epoch;
            save_checkpoint(result.best_checkpoint, model);
        }
    }
    result.best_val = best_val;
    save_checkpoint(result.final_checkpoint, model);

    result.test_at_final = evaluate_any(model, data, 2, tau);
    ModelParams<S> best_model = load_checkpoint<S>(result.best_checkpoint);
    result.test_at_best = evaluate_any(best_model, data, 2, tau);
    return result;
}

inline void write_epoch_log(std::ostream& os, const TrainResult& r) {
    os << "epoch,train_mse,val_mse,lr\n";
    for (const auto& e : r.epochs)
        os << e.epoch << "," << e.train_mse << "," << e.val_mse << "," << e.last_lr << "\n";
}

// ---- attention-scaling benchmark -----------------------------------------------------

struct BenchRow {
    std::string mechanism;
    int G = 0;
    int g = 0;  // dictionary / projection width where applicable
    std::uint64_t score_pairs = 0;
    double median_ms = 0.0;
};

inline void write_bench_header(std::ostream& os) { os << "mechanism,G,g,score_count,median_ms\n"; }

inline void write_bench_row(std::ostream& os, const BenchRow& r) {
    os << r.mechanism << "," << r.G << "," << r.g << "," << r.score_pairs << "," << r.median_ms << "\n";
}

template <typename S>
IssbParams<S> make_issb_params(IssbKind kind, int G, int g, int d_model, int heads, int d_qkv,
                               std::uint64_t seed) {
    detail::ParamInit<S> init(seed);
    switch (kind) {
        case IssbKind::Full: {
            FullIssbParams<S> p;
            p.attn = init.attention(d_model, heads, d_qkv);
            return p;
        }
        case IssbKind::Dictionary: {
            DictionaryIssbParams<S> p;
            p.dic = init.uniform(Shape{g, d_model}, d_model);
            p.aggregate = init.attention(d_model, heads, d_qkv);
            p.read = init.attention(d_model, heads, d_qkv);
            return p;
        }
        case IssbKind::LowRank: {
            LowRankIssbParams<S> p;
            p.w_lin = init.uniform(Shape{g, G}, G);
            p.attn = init.attention(d_model, heads, d_qkv);
            return p;
        }
        case IssbKind::Additive: {
            AdditiveIssbParams<S> p;
            p.proj = init.attention(d_model, heads, d_qkv);
            p.summary_q = init.uniform(Shape{d_qkv}, d_qkv);
            p.summary_k = init.uniform(Shape{d_qkv}, d_qkv);
            p.w1 = init.linear(d_qkv, d_qkv);
            p.w2 = init.linear(d_qkv, d_qkv);
            return p;
        }
    }
    throw std::logic_error("unreachable");
}

/// Median wall time and instrumented score counts of one ISSB forward at a
/// single patch index, per mechanism and variable count.
template <typename S>
std::vector<BenchRow> bench_issb(const std::vector<IssbKind>& mechanisms, const std::vector<int>& g_values,
                                 int dict_g, int d_model, int heads, int repeats, std::uint64_t seed = 1) {
    for (std::size_t i = 1; i < g_values.size(); ++i)
        if (g_values[i] <= g_values[i - 1]) throw std::invalid_argument("G values must be ascending");
    const int d_qkv = d_model / heads;
    std::vector<BenchRow> rows;
    for (IssbKind kind : mechanisms) {
        for (int G : g_values) {
            IssbParams<S> params = make_issb_params<S>(kind, G, dict_g, d_model, heads, d_qkv, seed);
            std::mt19937_64 rng(seed + static_cast<std::uint64_t>(G));
            Tensor<S> x(Shape{G, 1, d_model});
            fill_normal(x, S(0), S(1), rng);
            auto run_once = [&]() {
                Tape<S> tape;
                Value<S> v = tape.constant(x);
                reset_score_counter();
                issb_forward(tape, v, 1, params);
            };
            run_once();  // warmup
            std::uint64_t pairs = score_counter();
            std::vector<double> times;
            times.reserve(static_cast<std::size_t>(repeats));
            for (int r = 0; r < repeats; ++r) {
                auto t0 = std::chrono::steady_clock::now();
                run_once();
                auto t1 = std::chrono::steady_clock::now();
                times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            std::sort(times.begin(), times.end());
            BenchRow row;
            row.mechanism = issb_kind_name(kind);
            row.G = G;
            row.g = (kind == IssbKind::Dictionary || kind == IssbKind::LowRank) ? dict_g : 0;
            row.score_pairs = pairs;
            row.median_ms = times[times.size() / 2];
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace sumformer
