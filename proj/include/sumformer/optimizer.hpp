#pragma once

#include "sumformer/tape.hpp"

namespace sumformer {

/// Adam with bias correction. Moments are shaped like their parameters;
/// gradients are left untouched (the caller zeroes them).
template <typename S>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Tensor<S>> m, v;

    explicit AdamState(const std::vector<Parameter<S>*>& params) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (auto* p : params) {
            m.push_back(Tensor<S>::zeros(p->value.shape));
            v.push_back(Tensor<S>::zeros(p->value.shape));
        }
    }
};

template <typename S>
void adam_step(const std::vector<Parameter<S>*>& params, AdamState<S>& state, double lr) {
    if (params.size() != state.m.size())
        throw std::invalid_argument("optimizer state tracks " + std::to_string(state.m.size()) +
                                    " parameters, got " + std::to_string(params.size()));
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter<S>& p = *params[i];
        Tensor<S>& m = state.m[i];
        Tensor<S>& v = state.v[i];
        for (std::int64_t j = 0; j < p.value.numel(); ++j) {
            const double g = static_cast<double>(p.grad[j]);
            const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * g;
            const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * g * g;
            m[j] = static_cast<S>(mj);
            v[j] = static_cast<S>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            p.value[j] = static_cast<S>(static_cast<double>(p.value[j]) - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

}  // namespace sumformer
