#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dgar/autodiff.hpp"

namespace dgar {

// A freshly built loss graph together with the leaf nodes that were bound
// to the parameters (parallel to the parameter list; an undefined Var marks
// a parameter the graph does not touch).
template <class S>
struct BoundLoss {
    Var<S> loss;
    std::vector<Var<S>> leaves;
};

// Creates a graph leaf carrying a parameter's current value.
template <class S>
Var<S> bind(const Parameter<S>& p) {
    return Var<S>::leaf(p.value, p.trainable);
}

// Accumulates leaf gradients back into the parameters after backward().
// Disconnected parameters keep a zero gradient.
template <class S>
void collect_gradients(const std::vector<Var<S>>& leaves,
                       const std::vector<Parameter<S>*>& params) {
    for (size_t i = 0; i < params.size(); ++i) {
        if (i >= leaves.size() || !leaves[i].defined()) continue;
        const Tensor<S>& g = leaves[i].grad();
        if (g.numel() == 0) continue;  // never reached by backward
        Tensor<S>& pg = params[i]->grad;
        for (int64_t j = 0; j < pg.numel(); ++j) pg[j] += g[j];
    }
}

// Central-difference gradient oracle. `builder` must rebuild a fresh graph
// from the current parameter values each call (pure in the parameters; any
// running statistics must be reset inside the builder). Returns max over
// all trainable coordinates of
//   |analytic - central_difference| / max(1, |central_difference|).
template <class S>
double finite_diff_check(const std::function<BoundLoss<S>()>& builder,
                         const std::vector<Parameter<S>*>& params, double epsilon = 0) {
    if (epsilon <= 0) epsilon = std::is_same_v<S, float> ? 1e-3 : 1e-6;

    BoundLoss<S> bound = builder();
    if (!bound.loss.value().is_scalar())
        throw ShapeError("finite_diff_check: loss must be scalar, got " +
                         bound.loss.value().shape_str());
    if (!std::isfinite(static_cast<double>(bound.loss.value()[0])))
        throw NumericError("finite_diff_check: non-finite loss value");
    backward(bound.loss);

    std::vector<Tensor<S>> analytic;
    for (size_t i = 0; i < params.size(); ++i) {
        if (i < bound.leaves.size() && bound.leaves[i].defined() &&
            bound.leaves[i].grad().numel() != 0)
            analytic.push_back(bound.leaves[i].grad());
        else
            analytic.push_back(Tensor<S>(params[i]->value.shape()));  // zeros
    }

    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<S>& p = *params[pi];
        if (!p.trainable) continue;
        for (int64_t j = 0; j < p.value.numel(); ++j) {
            S saved = p.value[j];
            p.value[j] = saved + S(epsilon);
            double fp = static_cast<double>(builder().loss.value()[0]);
            p.value[j] = saved - S(epsilon);
            double fm = static_cast<double>(builder().loss.value()[0]);
            p.value[j] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("finite_diff_check: non-finite loss at perturbed point");
            double fd = (fp - fm) / (2.0 * epsilon);
            double an = static_cast<double>(analytic[pi][j]);
            double rel = std::abs(an - fd) / std::max(1.0, std::abs(fd));
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace dgar
