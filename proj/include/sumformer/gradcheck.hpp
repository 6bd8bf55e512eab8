#pragma once

#include <functional>

#include "sumformer/tape.hpp"

namespace sumformer {

/// Central-difference gradient of a deterministic scalar function with respect
/// to one parameter. The function is re-evaluated from scratch per probe, so it
/// must not retain state across calls.
template <typename S>
Tensor<S> finite_diff_grad(const std::function<S()>& f, Parameter<S>& p, S step) {
    if (!(step > S(0))) throw std::invalid_argument("finite_diff_grad requires step > 0");
    Tensor<S> g(p.value.shape);
    for (std::int64_t i = 0; i < p.value.numel(); ++i) {
        const S saved = p.value[i];
        p.value[i] = saved + step;
        const S up = f();
        p.value[i] = saved - step;
        const S down = f();
        p.value[i] = saved;
        g[i] = (up - down) / (S(2) * step);
    }
    return g;
}

/// max over components of |a - n| / max(1, |a|, |n|).
template <typename S>
S max_rel_err(const Tensor<S>& analytic, const Tensor<S>& numeric) {
    if (!analytic.same_shape(numeric))
        throw std::invalid_argument("gradient shape mismatch: " + shape_str(analytic.shape) + " vs " +
                                    shape_str(numeric.shape));
    S worst = 0;
    for (std::int64_t i = 0; i < analytic.numel(); ++i) {
        S denom = std::max(S(1), std::max(std::abs(analytic[i]), std::abs(numeric[i])));
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

/// Checks every parameter of a taped scalar function against central
/// differences. `run` must build the loss on the given tape from the current
/// parameter values. Returns the worst relative error seen.
template <typename S>
S check_gradients(const std::function<Value<S>(Tape<S>&)>& run, const std::vector<Parameter<S>*>& params,
                  S step = S(1e-5)) {
    Tape<S> tape;
    Value<S> loss = run(tape);
    zero_grads(params);
    tape.backward(loss);

    std::vector<Tensor<S>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    S worst = 0;
    auto eval = [&]() -> S {
        Tape<S> t;
        return run(t).val()[0];
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<S> numeric = finite_diff_grad<S>(eval, *params[i], step);
        worst = std::max(worst, max_rel_err(analytic[i], numeric));
    }
    return worst;
}

}  // namespace sumformer
