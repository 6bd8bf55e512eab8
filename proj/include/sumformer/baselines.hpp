#pragma once

#include <iomanip>
#include <ostream>

#include "sumformer/data.hpp"
#include "sumformer/optimizer.hpp"

namespace sumformer {

// ---- metrics -------------------------------------------------------------------

/// Pools absolute and squared errors over every element of every window, so
/// MAE/RMSE cover the whole evaluation set at once.
struct MetricAccumulator {
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    std::int64_t count = 0;

    template <typename S>
    void add(const Tensor<S>& pred, const Tensor<S>& target) {
        if (!pred.same_shape(target))
            throw std::invalid_argument("metric shape mismatch: " + shape_str(pred.shape) + " vs " +
                                        shape_str(target.shape));
        for (std::int64_t i = 0; i < pred.numel(); ++i) {
            const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
            abs_sum += std::abs(e);
            sq_sum += e * e;
        }
        count += pred.numel();
    }

    double mae() const { return count ? abs_sum / static_cast<double>(count) : 0.0; }
    double rmse() const { return count ? std::sqrt(sq_sum / static_cast<double>(count)) : 0.0; }
};

template <typename S>
double mae(const Tensor<S>& pred, const Tensor<S>& target) {
    MetricAccumulator acc;
    acc.add(pred, target);
    return acc.mae();
}

template <typename S>
double rmse(const Tensor<S>& pred, const Tensor<S>& target) {
    MetricAccumulator acc;
    acc.add(pred, target);
    return acc.rmse();
}

struct ForecastReport {
    std::string model;
    std::string scenario;  // "T_in-horizon"
    double mae = 0.0;
    double rmse = 0.0;
};

inline void write_report_header(std::ostream& os) { os << "model,scenario,mae,rmse\n"; }

inline void write_report_row(std::ostream& os, const ForecastReport& r) {
    os << r.model << "," << r.scenario << "," << std::fixed << std::setprecision(3) << r.mae << "," << r.rmse
       << "\n";
    os.unsetf(std::ios::floatfield);
}

// ---- heuristic baselines ---------------------------------------------------------

/// History average: per-variable mean of the input window, repeated.
template <typename S>
Tensor<S> ha_forecast(const Tensor<S>& input, int horizon) {
    if (input.rank() != 2 || input.shape[1] < 1)
        throw std::invalid_argument("ha_forecast expects a nonempty (G, T_in) window");
    const int G = input.shape[0], T = input.shape[1];
    Tensor<S> out(Shape{G, horizon});
    for (int g = 0; g < G; ++g) {
        S sum = 0;
        for (int t = 0; t < T; ++t) sum += input(g, t);
        const S mean = sum / static_cast<S>(T);
        for (int t = 0; t < horizon; ++t) out(g, t) = mean;
    }
    return out;
}

/// Periodic history: forecast(t) = history(t - period), with horizons longer
/// than the period wrapping onto the most recent observed period. `history`
/// holds all observations preceding the forecast origin `t_start`.
template <typename S>
Tensor<S> periodic_forecast(const Tensor<S>& history, int t_start, int horizon, int period) {
    if (history.rank() != 2) throw std::invalid_argument("periodic forecast expects (G, T) history");
    if (t_start > history.shape[1])
        throw std::invalid_argument("forecast origin " + std::to_string(t_start) + " beyond history length " +
                                    std::to_string(history.shape[1]));
    if (t_start < period)
        throw std::invalid_argument("insufficient history: origin " + std::to_string(t_start) +
                                    " needs at least one period of " + std::to_string(period) + " steps");
    const int G = history.shape[0];
    Tensor<S> out(Shape{G, horizon});
    for (int g = 0; g < G; ++g)
        for (int t = 0; t < horizon; ++t) out(g, t) = history(g, t_start - period + t % period);
    return out;
}

template <typename S>
Tensor<S> dh_forecast(const Tensor<S>& history, int t_start, int horizon, int steps_per_day) {
    return periodic_forecast(history, t_start, horizon, steps_per_day);
}

template <typename S>
Tensor<S> wh_forecast(const Tensor<S>& history, int t_start, int horizon, int steps_per_week) {
    return periodic_forecast(history, t_start, horizon, steps_per_week);
}

// ---- Nlinear ----------------------------------------------------------------------

/// One linear layer on the last-value-subtracted input, shared across variables:
/// yhat = (x - x_last) W + x_last.
template <typename S>
struct NlinearModel {
    Parameter<S> weights;  // (T_in, horizon)
    int T_in = 0;
    int horizon = 0;
};

template <typename S>
Tensor<S> nlinear_forecast(const NlinearModel<S>& model, const Tensor<S>& input) {
    if (input.rank() != 2 || input.shape[1] != model.T_in)
        throw std::invalid_argument("nlinear input " + shape_str(input.shape) + " does not match T_in " +
                                    std::to_string(model.T_in));
    const int G = input.shape[0];
    Tensor<S> centered = input;
    for (int g = 0; g < G; ++g) {
        const S last = input(g, model.T_in - 1);
        for (int t = 0; t < model.T_in; ++t) centered(g, t) -= last;
    }
    Tensor<S> out = matmul(centered, model.weights.value);
    for (int g = 0; g < G; ++g) {
        const S last = input(g, model.T_in - 1);
        for (int t = 0; t < model.horizon; ++t) out(g, t) += last;
    }
    return out;
}

struct NlinearFitConfig {
    int epochs = 20;
    int batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

/// Fits the shared weight matrix with Adam on MSE over stride-1 windows of a
/// (G, T) training series.
template <typename S>
NlinearModel<S> nlinear_fit(const Tensor<S>& train_series, int T_in, int horizon, const NlinearFitConfig& fit) {
    NlinearModel<S> model;
    model.T_in = T_in;
    model.horizon = horizon;
    model.weights = Parameter<S>(Tensor<S>::zeros(Shape{T_in, horizon}));

    std::vector<Parameter<S>*> params{&model.weights};
    AdamState<S> opt(params);
    std::mt19937_64 rng(fit.seed);
    std::vector<int> starts = window_starts(train_series.shape[1], T_in, horizon, 1);
    const int G = train_series.shape[0];

    for (int epoch = 0; epoch < fit.epochs; ++epoch) {
        std::shuffle(starts.begin(), starts.end(), rng);
        for (std::size_t ofs = 0; ofs < starts.size(); ofs += static_cast<std::size_t>(fit.batch_size)) {
            const int bsz = static_cast<int>(std::min(starts.size() - ofs, static_cast<std::size_t>(fit.batch_size)));
            Tensor<S> inputs(Shape{bsz * G, T_in});
            Tensor<S> targets(Shape{bsz * G, horizon});
            for (int b = 0; b < bsz; ++b) {
                WindowSample<S> w = extract_window(train_series, starts[ofs + static_cast<std::size_t>(b)], T_in, horizon);
                // train on centered inputs and last-value-shifted targets
                for (int g = 0; g < G; ++g) {
                    const S last = w.input(g, T_in - 1);
                    for (int t = 0; t < T_in; ++t) inputs(b * G + g, t) = w.input(g, t) - last;
                    for (int t = 0; t < horizon; ++t) targets(b * G + g, t) = w.target(g, t) - last;
                }
            }
            Tape<S> tape;
            Value<S> pred = matmul(tape.constant(std::move(inputs)), tape.param(model.weights));
            Value<S> loss = mse(pred, tape.constant(std::move(targets)));
            zero_grads(params);
            tape.backward(loss);
            adam_step(params, opt, fit.lr);
        }
    }
    zero_grads(params);
    return model;
}

}  // namespace sumformer
