#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "htr/tensor.hpp"

namespace htr {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truth);

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Confusion {
    std::size_t classes = 0;
    std::vector<std::size_t> matrix; // matrix[truth * classes + predicted]
    std::vector<ConfusionCounts> per_class;

    std::size_t at(std::size_t truth, std::size_t predicted) const { return matrix[truth * classes + predicted]; }
    std::size_t total() const;
    std::size_t trace() const;
};

Confusion confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> truth,
                    std::size_t classes);

struct RocPoint {
    double threshold = 0.0; // predict positive when score >= threshold
    double tpr = 0.0;
    double fpr = 0.0;
};

// One-vs-rest curve. The first point uses a +inf sentinel threshold at
// (0, 0); each distinct score, descending, adds one point; the last is (1, 1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const bool> positive);

// Trapezoidal area over fpr. Points must be sorted by fpr.
double auc(std::span<const RocPoint> points);

struct PrecisionRecall {
    std::optional<double> precision; // empty when TP + FP == 0
    std::optional<double> recall;    // empty when TP + FN == 0
};

PrecisionRecall precision_recall(const ConfusionCounts& counts);

struct ClassReport {
    std::string label;
    ConfusionCounts counts;
    PrecisionRecall pr;
    std::optional<double> auc; // empty when the class has no positives or no negatives
    std::vector<RocPoint> roc;
};

struct EvalReport {
    double accuracy = 0.0;
    Confusion confusion;
    std::vector<ClassReport> classes;
};

// probs: (N, classes) softmax outputs; predictions are row argmaxes.
EvalReport evaluate_predictions(const Tensor& probs, std::span<const std::size_t> truth,
                                const std::vector<std::string>& label_map);

// sample_index,true_class,pred_class,score_0,...,score_{k-1}
void write_predictions_csv(std::ostream& out, const Tensor& probs, std::span<const std::size_t> truth);
// Header "true\pred,0,1,..." then one row per true class.
void write_confusion_csv(std::ostream& out, const Confusion& confusion);
// class,threshold,fpr,tpr
void write_roc_csv(std::ostream& out, std::size_t class_index, std::span<const RocPoint> points);
// class,char,auc ("nan" when undefined)
void write_auc_csv(std::ostream& out, const EvalReport& report);
// class,char,tp,fp,fn,tn,precision,recall,auc
void write_class_metrics_csv(std::ostream& out, const EvalReport& report);

} // namespace htr
