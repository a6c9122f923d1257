#pragma once

#include <cstdint>
#include <vector>

#include "dgar/errors.hpp"

namespace dgar::harness {

// Classification metrics, all percentages in [0, 100]. Precision, recall
// and F1 are weighted by per-class support. The confusion matrix is C x C,
// row = true class, column = predicted class (1-based labels map to
// row/column label-1).
struct Metrics {
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    int n_classes = 0;
    std::vector<int64_t> confusion;  // row-major C x C

    int64_t at(int true_label, int pred_label) const {
        return confusion[static_cast<size_t>((true_label - 1) * n_classes + (pred_label - 1))];
    }
};

inline Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                               int n_classes) {
    if (y_true.empty()) throw DataError("compute_metrics: empty evaluation set");
    if (y_true.size() != y_pred.size())
        throw DataError("compute_metrics: label/prediction size mismatch");
    Metrics m;
    m.n_classes = n_classes;
    m.confusion.assign(static_cast<size_t>(n_classes) * n_classes, 0);
    int64_t correct = 0;
    for (size_t i = 0; i < y_true.size(); ++i) {
        int t = y_true[i], p = y_pred[i];
        if (t < 1 || t > n_classes || p < 1 || p > n_classes)
            throw DataError("compute_metrics: label outside [1, C]");
        m.confusion[static_cast<size_t>((t - 1) * n_classes + (p - 1))] += 1;
        if (t == p) ++correct;
    }
    const auto total = static_cast<double>(y_true.size());
    m.accuracy = 100.0 * static_cast<double>(correct) / total;

    double wp = 0, wr = 0, wf = 0;
    for (int c = 0; c < n_classes; ++c) {
        int64_t tp = m.confusion[static_cast<size_t>(c * n_classes + c)];
        int64_t support = 0, predicted = 0;
        for (int j = 0; j < n_classes; ++j) {
            support += m.confusion[static_cast<size_t>(c * n_classes + j)];
            predicted += m.confusion[static_cast<size_t>(j * n_classes + c)];
        }
        if (support == 0) continue;  // class absent from the set: weight 0
        double prec = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        double rec = static_cast<double>(tp) / static_cast<double>(support);
        double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        double w = static_cast<double>(support) / total;
        wp += w * prec;
        wr += w * rec;
        wf += w * f1;
    }
    m.precision = 100.0 * wp;
    m.recall = 100.0 * wr;
    m.f1 = 100.0 * wf;
    return m;
}

}  // namespace dgar::harness
