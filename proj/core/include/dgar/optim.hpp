#pragma once

#include <cmath>
#include <vector>

#include "dgar/autodiff.hpp"

namespace dgar {

// Adam with bias correction and decoupled weight decay. The decay is
// applied directly to the value before the Adam delta, so it does not pass
// through the moment estimates.
template <class S>
struct AdamState {
    int64_t step = 0;
    S lr = S(1e-4);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
    S weight_decay = S(1e-5);
    std::vector<Tensor<S>> m;  // one per parameter, same shape
    std::vector<Tensor<S>> v;

    void init(const std::vector<Parameter<S>*>& params) {
        m.clear();
        v.clear();
        for (const auto* p : params) {
            m.emplace_back(p->value.shape());
            v.emplace_back(p->value.shape());
        }
    }
};

template <class S>
void adam_step(AdamState<S>& state, const std::vector<Parameter<S>*>& params) {
    if (state.m.size() != params.size()) state.init(params);
    state.step += 1;
    S bc1 = S(1) - std::pow(state.beta1, S(state.step));
    S bc2 = S(1) - std::pow(state.beta2, S(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter<S>& p = *params[i];
        if (!p.trainable) continue;
        if (!p.grad.all_finite())
            throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
        Tensor<S>& m = state.m[i];
        Tensor<S>& v = state.v[i];
        for (int64_t j = 0; j < p.value.numel(); ++j) {
            if (state.weight_decay != S(0))
                p.value[j] -= state.lr * state.weight_decay * p.value[j];
            S g = p.grad[j];
            m[j] = state.beta1 * m[j] + (S(1) - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (S(1) - state.beta2) * g * g;
            S mhat = m[j] / bc1;
            S vhat = v[j] / bc2;
            p.value[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace dgar
