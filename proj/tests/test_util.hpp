#pragma once

#include <vector>

#include "dgar/rng.hpp"
#include "dgar/tensor.hpp"

namespace testutil {

template <class S>
dgar::Tensor<S> randn(dgar::Rng& rng, std::vector<int64_t> shape, double std = 1.0,
                      double mean = 0.0) {
    dgar::Tensor<S> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = S(rng.gaussian(mean, std));
    return t;
}

// Values bounded away from zero, for ops with a kink at the origin.
template <class S>
dgar::Tensor<S> rand_away_from_zero(dgar::Rng& rng, std::vector<int64_t> shape,
                                    double margin = 0.2) {
    dgar::Tensor<S> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) {
        double mag = margin + rng.uniform(0.0, 1.3);
        t[i] = S(rng.uniform01() < 0.5 ? -mag : mag);
    }
    return t;
}

template <class S>
dgar::Tensor<S> rand_uniform(dgar::Rng& rng, std::vector<int64_t> shape, double lo, double hi) {
    dgar::Tensor<S> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = S(rng.uniform(lo, hi));
    return t;
}

}  // namespace testutil
