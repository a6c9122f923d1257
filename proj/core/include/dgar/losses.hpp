#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dgar/dataset.hpp"
#include "dgar/ops.hpp"
#include "dgar/rng.hpp"

namespace dgar::loss {

enum class AlignKind { coral, mmd, cmd, swd };
enum class MuMode { domain_own, whole_batch };

inline AlignKind align_from_string(const std::string& s) {
    if (s == "coral") return AlignKind::coral;
    if (s == "mmd") return AlignKind::mmd;
    if (s == "cmd") return AlignKind::cmd;
    if (s == "swd") return AlignKind::swd;
    throw ConfigError("unknown alignment '" + s + "' (valid: coral, mmd, cmd, swd)");
}
inline std::string to_string(AlignKind k) {
    switch (k) {
        case AlignKind::coral: return "coral";
        case AlignKind::mmd: return "mmd";
        case AlignKind::cmd: return "cmd";
        case AlignKind::swd: return "swd";
    }
    return "?";
}
inline MuMode mu_mode_from_string(const std::string& s) {
    if (s == "domain") return MuMode::domain_own;
    if (s == "batch") return MuMode::whole_batch;
    throw ConfigError("unknown mu mode '" + s + "' (valid: domain, batch)");
}

// Weights of the three-term training objective
//   L = L_cls + lambda * adapt_sign * L_adapt + gamma * L_align.
// adapt_sign = +1 applies the diversity term exactly as its printed formula
// (which *minimizes* pairwise distances between adapter means); -1 applies
// the prose reading that rewards diversity.
struct LossWeights {
    double lambda_ = 1.0;
    double gamma_ = 1.0;
    int adapt_sign = +1;

    void validate() const {
        if (lambda_ < 0 || gamma_ < 0) throw ConfigError("LossWeights: weights must be >= 0");
        if (adapt_sign != 1 && adapt_sign != -1)
            throw ConfigError("LossWeights: adapt_sign must be +1 or -1");
    }
};

// Mean cross-entropy over the batch, from logits. Labels 1-based.
template <class S>
Var<S> cls_loss(const Var<S>& logits, const std::vector<int>& labels) {
    std::vector<int> zero_based(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) zero_based[i] = labels[i] - 1;
    return cross_entropy_logits(logits, std::move(zero_based));
}

// Per-adapter mean outputs. In domain_own mode adapter k is averaged over
// its own domain's sub-batch (the k-th entry of `ranges`); whole_batch
// averages each adapter over the full batch.
template <class S>
std::vector<Var<S>> adapter_means(const std::vector<Var<S>>& z,
                                  const std::vector<data::DomainBatch::Range>& ranges,
                                  MuMode mode) {
    std::vector<Var<S>> mus;
    if (mode == MuMode::whole_batch) {
        for (const auto& zk : z) mus.push_back(mean_rows(zk));
        return mus;
    }
    if (ranges.size() != z.size())
        throw DataError("adapter_means: " + std::to_string(ranges.size()) + " sub-batches for " +
                        std::to_string(z.size()) + " adapters");
    for (size_t k = 0; k < z.size(); ++k) {
        const auto& r = ranges[k];
        if (r.end <= r.begin)
            throw DataError("adapter_means: empty sub-batch for adapter " + std::to_string(k));
        mus.push_back(mean_rows(slice_rows(z[k], r.begin, r.end)));
    }
    return mus;
}

// Mean pairwise squared distance between adapter means:
//   (2 / (K (K-1))) * sum_{i<j} ||mu_i - mu_j||^2.
// Zero for K = 1.
template <class S>
Var<S> adapter_diversity(const std::vector<Var<S>>& mus) {
    auto k = static_cast<int64_t>(mus.size());
    if (k < 2) return Var<S>::constant(Tensor<S>::scalar(S(0)));
    Var<S> acc;
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = i + 1; j < k; ++j) {
            Var<S> d = sqdist(mus[static_cast<size_t>(i)], mus[static_cast<size_t>(j)]);
            acc = acc.defined() ? add(acc, d) : d;
        }
    return scale(acc, S(2.0 / static_cast<double>(k * (k - 1))));
}

// CORAL objective over per-domain covariance matrices:
//   (2 / (K (K-1))) * sum_{i<j} ||Sigma_i - Sigma_j||_F^2.
// Written exactly as the pairwise distance formula; there is no extra
// 1/(4 d^2) factor (gamma absorbs scale).
template <class S>
Var<S> coral_align(const std::vector<Var<S>>& covs) {
    auto k = static_cast<int64_t>(covs.size());
    if (k < 2) throw DataError("coral_align: need >= 2 domains");
    Var<S> acc;
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = i + 1; j < k; ++j) {
            Var<S> d = sumsq(sub(covs[static_cast<size_t>(i)], covs[static_cast<size_t>(j)]));
            acc = acc.defined() ? add(acc, d) : d;
        }
    return scale(acc, S(2.0 / static_cast<double>(k * (k - 1))));
}

// Median of pairwise squared distances over the union of two samples
// (excluding self-pairs); the classic kernel bandwidth heuristic.
template <class S>
double median_sqdist(const Tensor<S>& a, const Tensor<S>& b) {
    int64_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
    std::vector<double> all;
    auto row = [&](int64_t i) { return i < n ? a.data() + i * d : b.data() + (i - n) * d; };
    for (int64_t i = 0; i < n + m; ++i)
        for (int64_t j = i + 1; j < n + m; ++j) {
            const S* ri = row(i);
            const S* rj = row(j);
            double acc = 0;
            for (int64_t t = 0; t < d; ++t) {
                double df = static_cast<double>(ri[t]) - static_cast<double>(rj[t]);
                acc += df * df;
            }
            all.push_back(acc);
        }
    if (all.empty()) return 1.0;
    std::nth_element(all.begin(), all.begin() + static_cast<int64_t>(all.size() / 2), all.end());
    double med = all[all.size() / 2];
    return med > 0 ? med : 1.0;
}

// Biased (V-statistic) estimate of squared MMD with a Gaussian kernel
// k(x, y) = exp(-||x - y||^2 / (2 bw^2)); guaranteed >= 0. bandwidth <= 0
// selects the median heuristic per pair.
template <class S>
Var<S> mmd_loss(const Var<S>& hi, const Var<S>& hj, double bandwidth = 0.0) {
    if (hi.value().dim(0) < 1 || hj.value().dim(0) < 1)
        throw DataError("mmd_loss: empty feature set");
    double bw2 = bandwidth > 0 ? bandwidth * bandwidth
                               : 0.5 * median_sqdist(hi.value(), hj.value());
    S c = S(-1.0 / (2.0 * bw2));
    Var<S> kxx = mean_all(exp_op(scale(pairwise_sqdist(hi, hi), c)));
    Var<S> kyy = mean_all(exp_op(scale(pairwise_sqdist(hj, hj), c)));
    Var<S> kxy = mean_all(exp_op(scale(pairwise_sqdist(hi, hj), c)));
    Var<S> raw = sub(add(kxx, kyy), scale(kxy, S(2)));
    return relu(raw);  // clips float cancellation noise below zero
}

// Central moment discrepancy of order M. Features are squashed by tanh
// first so all moments are bounded:
//   CMD = sum_{m=1..M} || moment_m(i) - moment_m(j) ||_2
// with the raw mean for m = 1 and centered moments for m >= 2.
template <class S>
Var<S> cmd_loss(const Var<S>& hi, const Var<S>& hj, int order = 5) {
    if (hi.value().dim(0) < 1 || hj.value().dim(0) < 1)
        throw DataError("cmd_loss: empty feature set");
    if (order < 1) throw ConfigError("cmd_loss: order must be >= 1");
    Var<S> ti = tanh_op(hi);
    Var<S> tj = tanh_op(hj);
    Var<S> mi = mean_rows(ti);
    Var<S> mj = mean_rows(tj);
    Var<S> acc = sqrt_op(sumsq(sub(mi, mj)));
    Var<S> ci = sub_rowvec(ti, mi);
    Var<S> cj = sub_rowvec(tj, mj);
    for (int m = 2; m <= order; ++m) {
        Var<S> momi = mean_rows(powi(ci, m));
        Var<S> momj = mean_rows(powi(cj, m));
        acc = add(acc, sqrt_op(sumsq(sub(momi, momj))));
    }
    return acc;
}

// Sliced Wasserstein distance: mean over random unit directions of the 1-D
// 2-Wasserstein distance between the projected samples.
template <class S>
Var<S> swd_loss(const Var<S>& hi, const Var<S>& hj, int n_slices, Rng& rng) {
    if (hi.value().dim(0) < 1 || hj.value().dim(0) < 1)
        throw DataError("swd_loss: empty feature set");
    if (n_slices < 1) throw ConfigError("swd_loss: need >= 1 slice");
    int64_t d = hi.value().dim(1);
    Var<S> acc;
    for (int s = 0; s < n_slices; ++s) {
        Tensor<S> dir({d, 1});
        double norm = 0;
        for (int64_t t = 0; t < d; ++t) {
            double g = rng.gaussian();
            dir[t] = S(g);
            norm += g * g;
        }
        norm = std::sqrt(std::max(norm, 1e-30));
        for (int64_t t = 0; t < d; ++t) dir[t] = S(static_cast<double>(dir[t]) / norm);
        Var<S> vd = Var<S>::constant(std::move(dir));
        Var<S> pi = reshape(matmul(hi, vd), {hi.value().dim(0)});
        Var<S> pj = reshape(matmul(hj, vd), {hj.value().dim(0)});
        Var<S> w2 = sqrt_op(wasserstein2_sq_1d(pi, pj));
        acc = acc.defined() ? add(acc, w2) : w2;
    }
    return scale(acc, S(1.0 / n_slices));
}

struct AlignOptions {
    AlignKind kind = AlignKind::coral;
    double mmd_bandwidth = 0.0;  // <= 0: median heuristic
    int cmd_order = 5;
    int swd_slices = 128;
    uint64_t swd_seed = 0;
};

// Mean pairwise alignment over the per-domain slices of the shared
// features h. Covariance-based alignment (and, for consistency, the
// alternatives) uses only domains with >= 2 samples in the batch; the
// 2/(K'(K'-1)) normalizer counts the domains actually used.
template <class S>
Var<S> align_loss(const Var<S>& h, const std::vector<data::DomainBatch::Range>& ranges,
                  const AlignOptions& opt) {
    std::vector<Var<S>> parts;
    for (const auto& r : ranges)
        if (r.end - r.begin >= 2) parts.push_back(slice_rows(h, r.begin, r.end));
    auto k = static_cast<int64_t>(parts.size());
    if (k < 2) return Var<S>::constant(Tensor<S>::scalar(S(0)));

    if (opt.kind == AlignKind::coral) {
        std::vector<Var<S>> covs;
        for (auto& p : parts) covs.push_back(batch_covariance(p));
        return coral_align(covs);
    }
    Rng rng(Rng::mix(opt.swd_seed, 0x51ced));
    Var<S> acc;
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = i + 1; j < k; ++j) {
            Var<S> pij;
            switch (opt.kind) {
                case AlignKind::mmd:
                    pij = mmd_loss(parts[static_cast<size_t>(i)], parts[static_cast<size_t>(j)],
                                   opt.mmd_bandwidth);
                    break;
                case AlignKind::cmd:
                    pij = cmd_loss(parts[static_cast<size_t>(i)], parts[static_cast<size_t>(j)],
                                   opt.cmd_order);
                    break;
                case AlignKind::swd:
                    pij = swd_loss(parts[static_cast<size_t>(i)], parts[static_cast<size_t>(j)],
                                   opt.swd_slices, rng);
                    break;
                default:
                    throw ConfigError("align_loss: bad kind");
            }
            acc = acc.defined() ? add(acc, pij) : pij;
        }
    return scale(acc, S(2.0 / static_cast<double>(k * (k - 1))));
}

// L = L_cls + lambda * adapt_sign * L_adapt + gamma * L_align. Undefined
// adapt/align vars are simply omitted (used to keep zero-weighted terms out
// of the graph entirely, so the lambda = gamma = 0 run *is* the plain
// cross-entropy run).
template <class S>
Var<S> total_loss(const Var<S>& cls, const Var<S>& adapt, const Var<S>& align,
                  const LossWeights& w) {
    w.validate();
    Var<S> total = cls;
    if (adapt.defined() && w.lambda_ != 0)
        total = add(total, scale(adapt, S(w.lambda_ * w.adapt_sign)));
    if (align.defined() && w.gamma_ != 0) total = add(total, scale(align, S(w.gamma_)));
    return total;
}

}  // namespace dgar::loss
