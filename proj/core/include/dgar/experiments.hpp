#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dgar/metrics.hpp"
#include "dgar/trainer.hpp"

namespace dgar::harness {

// A method is a model architecture plus training objective configuration.
// The canonical presets:
//   dgar: one adapter per source domain, lambda = gamma = 1, CORAL
//   erm:  single adapter, lambda = gamma = 0 (plain pooled cross-entropy)
struct MethodConfig {
    std::string label = "dgar";
    nn::ModelConfig model;   // model.adapters == 0 -> one per source domain
    train::TrainConfig train;
};

MethodConfig make_dgar_method(nn::ModelConfig base = {}, train::TrainConfig tc = {});
MethodConfig make_erm_method(nn::ModelConfig base = {}, train::TrainConfig tc = {});

inline MethodConfig make_dgar_method(nn::ModelConfig base, train::TrainConfig tc) {
    MethodConfig m;
    m.label = "dgar";
    m.model = base;
    m.model.adapters = 0;  // per source domain
    m.train = tc;
    return m;
}

inline MethodConfig make_erm_method(nn::ModelConfig base, train::TrainConfig tc) {
    MethodConfig m;
    m.label = "erm";
    m.model = base;
    m.model.adapters = 1;
    m.train = tc;
    m.train.weights.lambda_ = 0;
    m.train.weights.gamma_ = 0;
    m.train.learnable_hypers = false;
    return m;
}

// Worker count for fold/sweep parallelism: DGAR_WORKERS env var, else the
// hardware concurrency. Each task derives its own seed, so results do not
// depend on the worker count.
inline int worker_count() {
    if (const char* env = std::getenv("DGAR_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(0..n_tasks-1) on `workers` threads. Tasks must be independent.
template <class Fn>
void parallel_tasks(int n_tasks, int workers, Fn&& fn) {
    workers = std::max(1, std::min(workers, n_tasks));
    if (workers == 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            try {
                for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// Mean pairwise Frobenius gap between per-domain covariance matrices of the
// shared features h, eval mode. The quantity CORAL drives down.
template <class S>
double feature_cov_gap(nn::DgarModel<S>& model, const data::DatasetContainer& c,
                       const std::vector<int>& domains, const std::vector<int64_t>& ids) {
    std::vector<Tensor<S>> covs;
    for (int dom : domains) {
        std::vector<int64_t> dom_ids;
        for (int64_t id : ids)
            if (c.records[static_cast<size_t>(id)].domain_id == dom) dom_ids.push_back(id);
        if (dom_ids.size() < 2) continue;
        // accumulate features in eval mode
        std::vector<Tensor<S>> feats;
        for (size_t at = 0; at < dom_ids.size(); at += 64) {
            std::vector<int64_t> part(
                dom_ids.begin() + static_cast<int64_t>(at),
                dom_ids.begin() + static_cast<int64_t>(std::min(at + 64, dom_ids.size())));
            auto [x, labels] = train::detail::assemble_batch<S>(c, part);
            auto trace = model.forward(x, false, false);
            feats.push_back(trace.h.value());
        }
        int64_t n = 0, d = feats[0].dim(1);
        for (auto& f : feats) n += f.dim(0);
        Tensor<S> all({n, d});
        int64_t row = 0;
        for (auto& f : feats) {
            std::copy(f.data(), f.data() + f.numel(), all.data() + row * d);
            row += f.dim(0);
        }
        Var<S> cov = batch_covariance(Var<S>::constant(std::move(all)));
        covs.push_back(cov.value());
    }
    if (covs.size() < 2) return 0.0;
    double acc = 0;
    int pairs = 0;
    for (size_t i = 0; i < covs.size(); ++i)
        for (size_t j = i + 1; j < covs.size(); ++j) {
            double s = 0;
            for (int64_t t = 0; t < covs[i].numel(); ++t) {
                double df = static_cast<double>(covs[i][t]) - static_cast<double>(covs[j][t]);
                s += df * df;
            }
            acc += s;
            ++pairs;
        }
    return acc / pairs;
}

// Eval-mode metrics of a trained model on a record set.
template <class S>
Metrics evaluate(nn::DgarModel<S>& model, const data::DatasetContainer& c,
                 const std::vector<int64_t>& ids) {
    if (ids.empty()) throw DataError("evaluate: empty record set");
    auto preds = train::detail::predict_batched(model, c, ids);
    std::vector<int> truth;
    for (int64_t id : ids) truth.push_back(c.records[static_cast<size_t>(id)].label);
    return compute_metrics(truth, preds, c.manifest.n_classes);
}

struct FoldRow {
    std::string fold_name;  // T-1 .. T-K, or "Average"
    int target_domain = -1;
    Metrics metrics;
    double cov_gap = 0;
    double wall_s = 0;
    int best_epoch = -1;
};

struct ExperimentReport {
    std::string method;
    uint64_t seed = 0;
    std::string config_note;
    std::vector<FoldRow> rows;  // per fold, then averaged in `average`
    FoldRow average;
    double wall_clock_s = 0;
};

// Trains one fold of the LODO protocol and evaluates on the held-out
// domain. Enforces at runtime that no training/validation record belongs
// to the target domain.
template <class S>
FoldRow run_fold(const data::DatasetContainer& c, const data::LodoFold& fold,
                 const MethodConfig& method, uint64_t seed, train::TrainHistory* out_hist = nullptr,
                 nn::DgarModel<S>* out_model = nullptr) {
    for (int64_t id : fold.train_ids)
        if (c.records[static_cast<size_t>(id)].domain_id == fold.target_domain)
            throw DataError("run_fold: training record from the held-out domain");
    for (int64_t id : fold.val_ids)
        if (c.records[static_cast<size_t>(id)].domain_id == fold.target_domain)
            throw DataError("run_fold: validation record from the held-out domain");

    train::TrainConfig tc = method.train;
    tc.seed = seed;
    auto t0 = std::chrono::steady_clock::now();
    auto result = train::train<S>(c, fold, method.model, tc);
    auto t1 = std::chrono::steady_clock::now();

    FoldRow row;
    row.target_domain = fold.target_domain;
    row.metrics = evaluate(result.model, c, fold.test_ids);
    row.cov_gap = feature_cov_gap(result.model, c, fold.source_domains, fold.train_ids);
    row.wall_s = std::chrono::duration<double>(t1 - t0).count();
    row.best_epoch = result.history.best_epoch;
    if (out_hist) *out_hist = std::move(result.history);
    if (out_model) *out_model = std::move(result.model);
    return row;
}

inline FoldRow average_rows(const std::vector<FoldRow>& rows) {
    FoldRow avg;
    avg.fold_name = "Average";
    if (rows.empty()) return avg;
    int nc = rows[0].metrics.n_classes;
    avg.metrics.n_classes = nc;
    avg.metrics.confusion.assign(static_cast<size_t>(nc) * nc, 0);
    for (const auto& r : rows) {
        avg.metrics.accuracy += r.metrics.accuracy;
        avg.metrics.precision += r.metrics.precision;
        avg.metrics.recall += r.metrics.recall;
        avg.metrics.f1 += r.metrics.f1;
        avg.cov_gap += r.cov_gap;
        avg.wall_s += r.wall_s;
        for (size_t i = 0; i < avg.metrics.confusion.size() && i < r.metrics.confusion.size(); ++i)
            avg.metrics.confusion[i] += r.metrics.confusion[i];
    }
    auto n = static_cast<double>(rows.size());
    avg.metrics.accuracy /= n;
    avg.metrics.precision /= n;
    avg.metrics.recall /= n;
    avg.metrics.f1 /= n;
    avg.cov_gap /= n;
    return avg;
}

// The leave-one-domain-out protocol: one fold per domain, trained on the
// sources only, evaluated on the held-out domain. Folds, splits and model
// seeds depend only on (container, seed), never on the method, so methods
// compare on identical data.
template <class S>
ExperimentReport run_lodo(const data::DatasetContainer& c, const MethodConfig& method,
                          uint64_t seed, int workers = 0) {
    auto folds = data::lodo_folds(c, 0.2, seed);
    if (workers <= 0) workers = worker_count();
    ExperimentReport rep;
    rep.method = method.label;
    rep.seed = seed;
    auto t0 = std::chrono::steady_clock::now();
    rep.rows.resize(folds.size());
    try {
        parallel_tasks(static_cast<int>(folds.size()), workers, [&](int i) {
            auto idx = static_cast<size_t>(i);
            FoldRow row = run_fold<S>(c, folds[idx], method, seed);
            row.fold_name = "T-" + std::to_string(i + 1);
            rep.rows[idx] = std::move(row);
        });
    } catch (const std::exception& e) {
        throw DataError("run_lodo(" + method.label + "): " + e.what());
    }
    rep.average = average_rows(rep.rows);
    rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// The four loss-term ablation variants, then the three alignment swaps.
// Variant 1 (cls only) is the trainer's lambda = gamma = 0 path on the
// DGAR architecture.
template <class S>
std::vector<ExperimentReport> run_ablation(const data::DatasetContainer& c,
                                           const MethodConfig& base, uint64_t seed,
                                           int workers = 0) {
    std::vector<MethodConfig> variants;
    auto v = [&](const std::string& label, double l, double g, loss::AlignKind kind) {
        MethodConfig m = base;
        m.label = label;
        m.train.weights.lambda_ = l;
        m.train.weights.gamma_ = g;
        m.train.align = kind;
        variants.push_back(std::move(m));
    };
    double l0 = base.train.weights.lambda_ > 0 ? base.train.weights.lambda_ : 1.0;
    double g0 = base.train.weights.gamma_ > 0 ? base.train.weights.gamma_ : 1.0;
    v("cls", 0, 0, loss::AlignKind::coral);
    v("cls+adapt", l0, 0, loss::AlignKind::coral);
    v("cls+align", 0, g0, loss::AlignKind::coral);
    v("full", l0, g0, loss::AlignKind::coral);
    v("full-mmd", l0, g0, loss::AlignKind::mmd);
    v("full-cmd", l0, g0, loss::AlignKind::cmd);
    v("full-swd", l0, g0, loss::AlignKind::swd);

    std::vector<ExperimentReport> reports;
    for (const auto& m : variants) reports.push_back(run_lodo<S>(c, m, seed, workers));
    return reports;
}

struct SweepCell {
    double lambda_ = 0, gamma_ = 0;
    double mean_accuracy = 0, mean_f1 = 0;
};

struct SweepResult {
    std::vector<double> lambda_grid, gamma_grid;
    std::vector<SweepCell> cells;  // row-major over (lambda, gamma)
    ExperimentReport erm_reference;  // same architecture, lambda = gamma = 0
};

// Full-factorial LODO-averaged accuracy over the (lambda, gamma) grid. The
// ERM reference row runs the swept architecture with both weights zero, so
// a grid containing (0, 0) reproduces it exactly.
template <class S>
SweepResult run_sweep(const data::DatasetContainer& c, const MethodConfig& base,
                      std::vector<double> lambda_grid, std::vector<double> gamma_grid,
                      uint64_t seed, int workers = 0) {
    if (lambda_grid.empty() || gamma_grid.empty())
        throw ConfigError("run_sweep: empty grid");
    SweepResult out;
    out.lambda_grid = lambda_grid;
    out.gamma_grid = gamma_grid;
    auto nl = lambda_grid.size();
    auto ng = gamma_grid.size();
    out.cells.resize(nl * ng);
    if (workers <= 0) workers = worker_count();
    // parallelism lives inside run_lodo (fold level); cells run serially to
    // keep peak memory bounded
    for (size_t i = 0; i < nl; ++i)
        for (size_t j = 0; j < ng; ++j) {
            MethodConfig m = base;
            m.label = "sweep";
            m.train.weights.lambda_ = lambda_grid[i];
            m.train.weights.gamma_ = gamma_grid[j];
            auto rep = run_lodo<S>(c, m, seed, workers);
            SweepCell cell;
            cell.lambda_ = lambda_grid[i];
            cell.gamma_ = gamma_grid[j];
            cell.mean_accuracy = rep.average.metrics.accuracy;
            cell.mean_f1 = rep.average.metrics.f1;
            out.cells[i * ng + j] = cell;
        }
    MethodConfig erm = base;
    erm.label = "erm-ref";
    erm.train.weights.lambda_ = 0;
    erm.train.weights.gamma_ = 0;
    out.erm_reference = run_lodo<S>(c, erm, seed, workers);
    return out;
}

struct BenchResult {
    std::string method;
    double avg_time_s = 0;   // per full pass over the test set
    double throughput = 0;   // samples / second
    double accuracy = 0;     // percent
    int n_runs = 0;
    int64_t n_samples = 0;
};

// Wall-clock inference timing over n_runs full passes (one warm-up pass
// excluded), plus the accuracy of the timed predictions.
template <class S>
BenchResult benchmark_inference(nn::DgarModel<S>& model, const data::DatasetContainer& c,
                                const std::vector<int64_t>& ids, int n_runs = 5,
                                const std::string& label = "dgar") {
    if (ids.empty()) throw DataError("benchmark_inference: empty test set");
    BenchResult r;
    r.method = label;
    r.n_runs = n_runs;
    r.n_samples = static_cast<int64_t>(ids.size());
    (void)train::detail::predict_batched(model, c, ids);  // warm-up
    std::vector<int> preds;
    double total = 0;
    for (int run = 0; run < n_runs; ++run) {
        auto t0 = std::chrono::steady_clock::now();
        preds = train::detail::predict_batched(model, c, ids);
        total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    r.avg_time_s = total / n_runs;
    r.throughput = static_cast<double>(ids.size()) / r.avg_time_s;
    std::vector<int> truth;
    for (int64_t id : ids) truth.push_back(c.records[static_cast<size_t>(id)].label);
    r.accuracy = compute_metrics(truth, preds, c.manifest.n_classes).accuracy;
    return r;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

void write_report_csv(const ExperimentReport& rep, const std::string& path);
void write_history_csv(const train::TrainHistory& hist, const std::string& path);
void write_sweep_csv(const SweepResult& sweep, const std::string& path);
void write_bench_csv(const std::vector<BenchResult>& rows, const std::string& path);
std::string render_summary_table(const std::vector<ExperimentReport>& reports);

}  // namespace dgar::harness
