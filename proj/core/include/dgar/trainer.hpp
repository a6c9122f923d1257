#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dgar/dataset.hpp"
#include "dgar/losses.hpp"
#include "dgar/metrics.hpp"
#include "dgar/model.hpp"
#include "dgar/optim.hpp"

namespace dgar::train {

struct TrainConfig {
    loss::LossWeights weights;  // lambda, gamma, adapt_sign
    loss::AlignKind align = loss::AlignKind::coral;
    loss::MuMode mu_mode = loss::MuMode::domain_own;
    double mmd_bandwidth = 0.0;  // <= 0: median heuristic
    int cmd_order = 5;
    int swd_slices = 128;

    double lr = 1e-4;
    double weight_decay = 1e-5;
    int64_t batch_size = 32;
    int max_epochs = 100;
    int plateau_patience = 10;
    double lr_halving_factor = 0.5;
    double min_lr = 1e-6;
    int early_stop_patience = 20;
    uint64_t seed = 0;

    // Optional mode treating lambda and gamma as trainable nonnegative
    // scalars (softplus parameterized) with their own learning rate.
    bool learnable_hypers = false;
    double hyper_lr = 1e-3;

    void validate() const {
        weights.validate();
        if (lr <= 0 || batch_size < 1 || max_epochs < 1)
            throw ConfigError("TrainConfig: lr, batch_size, max_epochs must be positive");
        if (weight_decay < 0) throw ConfigError("TrainConfig: negative weight decay");
        if (plateau_patience < 1 || plateau_patience >= max_epochs)
            throw ConfigError("TrainConfig: plateau_patience must be in [1, max_epochs)");
        if (lr_halving_factor <= 0 || lr_halving_factor >= 1)
            throw ConfigError("TrainConfig: lr_halving_factor must be in (0, 1)");
        if (early_stop_patience < 1) throw ConfigError("TrainConfig: early_stop_patience >= 1");
    }
};

struct StepStats {
    int epoch = 0, step = 0;
    double cls = 0, adapt = 0, align = 0, total = 0;
};

struct EpochStats {
    double cls = 0, adapt = 0, align = 0, total = 0;
    double val_loss = 0, val_f1 = 0;
    double lr = 0;
    double lambda_eff = 0, gamma_eff = 0;  // resolved weights (trainable mode)
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::vector<StepStats> steps;
    int best_epoch = -1;
    bool early_stopped = false;
};

// ReduceLROnPlateau: halves the rate when the validation loss has not
// improved for `patience` consecutive epochs, then restarts the count.
class PlateauScheduler {
  public:
    PlateauScheduler(double lr, int patience, double factor, double min_lr)
        : lr_(lr), patience_(patience), factor_(factor), min_lr_(min_lr) {}

    double step(double val_loss) {
        if (val_loss < best_) {
            best_ = val_loss;
            since_ = 0;
        } else if (++since_ >= patience_) {
            lr_ = std::max(min_lr_, lr_ * factor_);
            since_ = 0;
        }
        return lr_;
    }

    double lr() const { return lr_; }

  private:
    double lr_;
    int patience_;
    double factor_;
    double min_lr_;
    double best_ = std::numeric_limits<double>::infinity();
    int since_ = 0;
};

// New learning rate given the per-epoch validation losses so far: halved
// when the best loss is at least `patience` epochs old (measured from the
// last halving), floored at min_lr.
inline double lr_schedule_step(const std::vector<double>& val_losses, double initial_lr,
                               int patience = 10, double factor = 0.5, double min_lr = 1e-6) {
    PlateauScheduler sch(initial_lr, patience, factor, min_lr);
    double lr = initial_lr;
    for (double v : val_losses) lr = sch.step(v);
    return lr;
}

// True when the best validation loss is at least `patience` epochs old.
inline bool early_stop_check(const std::vector<double>& val_losses, int patience) {
    if (val_losses.empty()) return false;
    size_t best = 0;
    for (size_t i = 1; i < val_losses.size(); ++i)
        if (val_losses[i] < val_losses[best]) best = i;
    return (val_losses.size() - 1 - best) >= static_cast<size_t>(patience);
}

// Fills D, L, C from the container; adapters == 0 in the base config means
// one adapter per source domain.
inline nn::ModelConfig resolve_model_config(nn::ModelConfig base, const data::DatasetContainer& c,
                                            const data::LodoFold& fold) {
    base.in_channels = c.manifest.d;
    base.seq_len = c.manifest.l;
    base.n_classes = c.manifest.n_classes;
    if (base.adapters == 0) base.adapters = static_cast<int64_t>(fold.source_domains.size());
    base.validate();
    return base;
}

template <class S>
struct TrainResult {
    nn::DgarModel<S> model;
    TrainHistory history;
};

namespace detail {

template <class S>
std::pair<Tensor<S>, std::vector<int>> assemble_batch(const data::DatasetContainer& c,
                                                      const std::vector<int64_t>& ids) {
    int64_t b = static_cast<int64_t>(ids.size());
    Tensor<S> x({b, c.manifest.d, c.manifest.l});
    std::vector<int> labels(static_cast<size_t>(b));
    int64_t per = c.manifest.d * c.manifest.l;
    for (int64_t i = 0; i < b; ++i) {
        const auto& r = c.records[static_cast<size_t>(ids[static_cast<size_t>(i)])];
        for (int64_t t = 0; t < per; ++t) x[i * per + t] = static_cast<S>(r.input[t]);
        labels[static_cast<size_t>(i)] = r.label;
    }
    return {std::move(x), std::move(labels)};
}

template <class S>
std::vector<int> predict_batched(nn::DgarModel<S>& model, const data::DatasetContainer& c,
                                 const std::vector<int64_t>& ids, int64_t batch = 64) {
    std::vector<int> preds;
    for (size_t at = 0; at < ids.size(); at += static_cast<size_t>(batch)) {
        std::vector<int64_t> part(ids.begin() + static_cast<int64_t>(at),
                                  ids.begin() + static_cast<int64_t>(
                                                    std::min(at + static_cast<size_t>(batch),
                                                             ids.size())));
        auto [x, labels] = assemble_batch<S>(c, part);
        auto p = model.predict(x);
        preds.insert(preds.end(), p.begin(), p.end());
    }
    return preds;
}

template <class S>
double mean_val_cls_loss(nn::DgarModel<S>& model, const data::DatasetContainer& c,
                         const std::vector<int64_t>& ids, int64_t batch = 64) {
    double acc = 0;
    for (size_t at = 0; at < ids.size(); at += static_cast<size_t>(batch)) {
        std::vector<int64_t> part(ids.begin() + static_cast<int64_t>(at),
                                  ids.begin() + static_cast<int64_t>(
                                                    std::min(at + static_cast<size_t>(batch),
                                                             ids.size())));
        auto [x, labels] = assemble_batch<S>(c, part);
        auto trace = model.forward(x, /*train=*/false, /*with_grad=*/false);
        auto l = loss::cls_loss(trace.logits, labels);
        acc += static_cast<double>(l.value()[0]) * static_cast<double>(part.size());
    }
    return acc / static_cast<double>(ids.size());
}

inline double softplus_inverse(double y) {
    // raw such that softplus(raw) == y; y == 0 maps to a large negative raw
    if (y <= 1e-8) return -18.0;
    return std::log(std::expm1(y));
}

}  // namespace detail

// Executes the full learning procedure on one fold: balanced multi-domain
// batches, shared extraction, per-adapter refinement, attention fusion,
// the three-term objective, Adam updates, plateau halving and early
// stopping; restores the best-validation checkpoint at the end.
//
// Zero-weighted loss terms are not built at all, so a lambda = gamma = 0
// run logs total == cls exactly.
template <class S>
TrainResult<S> train(const data::DatasetContainer& c, const data::LodoFold& fold,
                     const nn::ModelConfig& base_config, const TrainConfig& tc) {
    tc.validate();
    nn::ModelConfig mc = resolve_model_config(base_config, c, fold);
    if (fold.source_domains.empty()) throw DataError("train: fold has no source domains");

    nn::DgarModel<S> model(mc, Rng::mix(tc.seed, 0x90de1));
    auto params = model.parameters();

    AdamState<S> adam;
    adam.lr = S(tc.lr);
    adam.weight_decay = S(tc.weight_decay);
    adam.init(params);

    // optional trainable lambda/gamma (softplus parameterized)
    Parameter<S> raw_lambda("raw_lambda",
                            Tensor<S>::scalar(S(detail::softplus_inverse(tc.weights.lambda_))));
    Parameter<S> raw_gamma("raw_gamma",
                           Tensor<S>::scalar(S(detail::softplus_inverse(tc.weights.gamma_))));
    std::vector<Parameter<S>*> hyper_params{&raw_lambda, &raw_gamma};
    AdamState<S> hyper_adam;
    hyper_adam.lr = S(tc.hyper_lr);
    hyper_adam.weight_decay = S(0);
    hyper_adam.init(hyper_params);

    const bool use_adapt = tc.learnable_hypers || tc.weights.lambda_ != 0;
    const bool use_align = tc.learnable_hypers || tc.weights.gamma_ != 0;

    data::BalancedBatchSampler sampler(c, fold.train_ids, fold.source_domains, tc.batch_size);

    TrainHistory hist;
    PlateauScheduler sched(tc.lr, tc.plateau_patience, tc.lr_halving_factor, tc.min_lr);
    double best_val = std::numeric_limits<double>::infinity();
    typename nn::DgarModel<S>::Snapshot best_snapshot = model.snapshot();
    std::vector<double> val_losses;

    auto check_finite = [](double v, const char* term, int epoch, int step) {
        if (!std::isfinite(v))
            throw NumericError(std::string("train: non-finite ") + term + " loss at epoch " +
                               std::to_string(epoch) + ", step " + std::to_string(step));
    };

    for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
        auto batches = sampler.epoch(Rng::mix(tc.seed, 0xe90c4, static_cast<uint64_t>(epoch)));
        double ep_cls = 0, ep_adapt = 0, ep_align = 0, ep_total = 0;
        double lambda_eff = tc.weights.lambda_, gamma_eff = tc.weights.gamma_;

        for (size_t si = 0; si < batches.size(); ++si) {
            const auto& batch = batches[si];
            auto [x, labels] = detail::assemble_batch<S>(c, batch.ids);
            auto trace = model.forward(x, /*train=*/true);

            Var<S> cls = loss::cls_loss(trace.logits, labels);
            Var<S> adapt, align;
            if (use_adapt && mc.adapters >= 2) {
                // adapters follow the source-domain order; in the tail batch a
                // domain can run dry, so pair only the adapters with samples
                std::vector<Var<S>> mus;
                if (tc.mu_mode == loss::MuMode::whole_batch) {
                    mus = loss::adapter_means(trace.z, batch.ranges, tc.mu_mode);
                } else {
                    for (const auto& r : batch.ranges) {
                        auto it = std::find(fold.source_domains.begin(),
                                            fold.source_domains.end(), r.domain);
                        auto k = static_cast<size_t>(it - fold.source_domains.begin());
                        mus.push_back(mean_rows(slice_rows(trace.z[k], r.begin, r.end)));
                    }
                }
                adapt = loss::adapter_diversity(mus);
            }
            if (use_align) {
                loss::AlignOptions opt;
                opt.kind = tc.align;
                opt.mmd_bandwidth = tc.mmd_bandwidth;
                opt.cmd_order = tc.cmd_order;
                opt.swd_slices = tc.swd_slices;
                opt.swd_seed = Rng::mix(tc.seed, static_cast<uint64_t>(epoch), si);
                align = loss::align_loss(trace.h, batch.ranges, opt);
            }

            Var<S> total;
            if (tc.learnable_hypers) {
                Var<S> vl = softplus(Var<S>::leaf(raw_lambda.value, true));
                Var<S> vg = softplus(Var<S>::leaf(raw_gamma.value, true));
                lambda_eff = static_cast<double>(vl.value()[0]);
                gamma_eff = static_cast<double>(vg.value()[0]);
                total = cls;
                if (adapt.defined())
                    total = add(total, mul(scale(vl, S(tc.weights.adapt_sign)), adapt));
                if (align.defined()) total = add(total, mul(vg, align));
                // keep leaves reachable for gradient collection
                trace.leaves.push_back(vl);
                trace.leaves.push_back(vg);
            } else {
                total = loss::total_loss(cls, adapt, align, tc.weights);
            }

            StepStats ss;
            ss.epoch = epoch;
            ss.step = static_cast<int>(si);
            ss.cls = static_cast<double>(cls.value()[0]);
            ss.adapt = adapt.defined() ? static_cast<double>(adapt.value()[0]) : 0.0;
            ss.align = align.defined() ? static_cast<double>(align.value()[0]) : 0.0;
            ss.total = static_cast<double>(total.value()[0]);
            check_finite(ss.cls, "cls", epoch, ss.step);
            check_finite(ss.adapt, "adapt", epoch, ss.step);
            check_finite(ss.align, "align", epoch, ss.step);
            check_finite(ss.total, "total", epoch, ss.step);

            for (auto* p : params) p->zero_grad();
            raw_lambda.zero_grad();
            raw_gamma.zero_grad();
            backward(total);
            collect_gradients(std::vector<Var<S>>(trace.leaves.begin(),
                                                  trace.leaves.begin() +
                                                      static_cast<int64_t>(params.size())),
                              params);
            adam.lr = S(sched.lr());
            adam_step(adam, params);
            if (tc.learnable_hypers) {
                size_t n = trace.leaves.size();
                const Tensor<S>& gl = trace.leaves[n - 2].grad();
                const Tensor<S>& gg = trace.leaves[n - 1].grad();
                if (gl.numel()) raw_lambda.grad[0] += gl[0];
                if (gg.numel()) raw_gamma.grad[0] += gg[0];
                adam_step(hyper_adam, hyper_params);
            }

            ep_cls += ss.cls;
            ep_adapt += ss.adapt;
            ep_align += ss.align;
            ep_total += ss.total;
            hist.steps.push_back(ss);
        }

        auto n_steps = static_cast<double>(batches.size());
        EpochStats es;
        es.cls = ep_cls / n_steps;
        es.adapt = ep_adapt / n_steps;
        es.align = ep_align / n_steps;
        es.total = ep_total / n_steps;
        es.lr = sched.lr();
        es.lambda_eff = lambda_eff;
        es.gamma_eff = gamma_eff;

        es.val_loss = detail::mean_val_cls_loss(model, c, fold.val_ids);
        auto val_preds = detail::predict_batched(model, c, fold.val_ids);
        std::vector<int> val_true;
        for (int64_t id : fold.val_ids) val_true.push_back(c.records[static_cast<size_t>(id)].label);
        es.val_f1 = harness::compute_metrics(val_true, val_preds, c.manifest.n_classes).f1;

        hist.epochs.push_back(es);
        val_losses.push_back(es.val_loss);

        if (es.val_loss < best_val) {
            best_val = es.val_loss;
            best_snapshot = model.snapshot();
            hist.best_epoch = epoch;
        }
        sched.step(es.val_loss);
        if (early_stop_check(val_losses, tc.early_stop_patience)) {
            hist.early_stopped = true;
            break;
        }
    }

    model.restore(best_snapshot);
    return {std::move(model), std::move(hist)};
}

// 80/20 within-target split for the ERM-T oracle: the model is trained
// directly on the held-out domain and never participates in LODO training.
struct ErmTSplit {
    std::vector<int64_t> train_ids, val_ids, test_ids;
};

inline ErmTSplit make_erm_t_split(const data::DatasetContainer& c, int target_domain,
                                  uint64_t seed) {
    auto ids = c.record_ids_of_domain(target_domain);
    if (ids.empty())
        throw DataError("make_erm_t_split: no records for domain " +
                        std::to_string(target_domain));
    auto [train80, test20] = data::split_train_val(c, ids, 0.2, Rng::mix(seed, 0xe247));
    ErmTSplit s;
    s.test_ids = test20;
    auto [tr, val] = data::split_train_val(c, train80, 0.2, Rng::mix(seed, 0xe247, 1));
    s.train_ids = tr;
    s.val_ids = val;
    return s;
}

template <class S>
struct ErmTResult {
    TrainResult<S> result;
    ErmTSplit split;
};

template <class S>
ErmTResult<S> train_erm_t(const data::DatasetContainer& c, int target_domain,
                          nn::ModelConfig base_config, TrainConfig tc) {
    ErmTSplit split = make_erm_t_split(c, target_domain, tc.seed);
    data::LodoFold fold;
    fold.target_domain = -1;  // oracle run; trains on the target itself
    fold.source_domains = {target_domain};
    fold.train_ids = split.train_ids;
    fold.val_ids = split.val_ids;
    fold.test_ids = split.test_ids;
    base_config.adapters = 1;
    tc.weights.lambda_ = 0;
    tc.weights.gamma_ = 0;
    tc.learnable_hypers = false;
    auto r = train<S>(c, fold, base_config, tc);
    return {std::move(r), std::move(split)};
}

}  // namespace dgar::train
