#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "dgar/experiments.hpp"

namespace dgar::harness {

namespace {
std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << std::setprecision(10);
    return f;
}
}  // namespace

void write_report_csv(const ExperimentReport& rep, const std::string& path) {
    auto f = open_out(path);
    f << "method,fold,target_domain,accuracy,precision,recall,f1,cov_gap,best_epoch,wall_s\n";
    auto row = [&](const FoldRow& r) {
        f << rep.method << ',' << r.fold_name << ',' << r.target_domain << ','
          << r.metrics.accuracy << ',' << r.metrics.precision << ',' << r.metrics.recall << ','
          << r.metrics.f1 << ',' << r.cov_gap << ',' << r.best_epoch << ',' << r.wall_s << '\n';
    };
    for (const auto& r : rep.rows) row(r);
    row(rep.average);
}

void write_history_csv(const train::TrainHistory& hist, const std::string& path) {
    auto f = open_out(path);
    f << "epoch,cls,adapt,align,total,val_loss,val_f1,lr,lambda_eff,gamma_eff\n";
    for (size_t e = 0; e < hist.epochs.size(); ++e) {
        const auto& r = hist.epochs[e];
        f << e << ',' << r.cls << ',' << r.adapt << ',' << r.align << ',' << r.total << ','
          << r.val_loss << ',' << r.val_f1 << ',' << r.lr << ',' << r.lambda_eff << ','
          << r.gamma_eff << '\n';
    }
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
    auto f = open_out(path);
    f << "lambda,gamma,mean_accuracy,mean_f1\n";
    for (const auto& c : sweep.cells)
        f << c.lambda_ << ',' << c.gamma_ << ',' << c.mean_accuracy << ',' << c.mean_f1 << '\n';
}

void write_bench_csv(const std::vector<BenchResult>& rows, const std::string& path) {
    auto f = open_out(path);
    f << "method,avg_time_s,throughput_samples_per_s,accuracy,n_runs,n_samples\n";
    for (const auto& r : rows)
        f << r.method << ',' << r.avg_time_s << ',' << r.throughput << ',' << r.accuracy << ','
          << r.n_runs << ',' << r.n_samples << '\n';
}

// Text table in the layout of the classification-performance tables: one
// row per fold plus the average, one column per method.
std::string render_summary_table(const std::vector<ExperimentReport>& reports) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    if (reports.empty()) return "";
    os << std::setw(10) << std::left << "Target";
    for (const auto& r : reports) os << std::setw(12) << std::right << r.method;
    os << "\n";
    size_t n_rows = reports[0].rows.size();
    for (size_t i = 0; i < n_rows; ++i) {
        os << std::setw(10) << std::left << reports[0].rows[i].fold_name;
        for (const auto& r : reports)
            os << std::setw(12) << std::right
               << (i < r.rows.size() ? r.rows[i].metrics.f1 : 0.0);
        os << "\n";
    }
    os << std::setw(10) << std::left << "Average";
    for (const auto& r : reports) os << std::setw(12) << std::right << r.average.metrics.f1;
    os << "\n";
    return os.str();
}

}  // namespace dgar::harness
