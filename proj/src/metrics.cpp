#include "htr/metrics.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <ostream>

#include "htr/csv.hpp"

namespace htr {

namespace {

void require_same_length(std::size_t a, std::size_t b) {
    if (a != b) {
        throw InputError("prediction and truth lengths differ: " + std::to_string(a) + " vs " + std::to_string(b));
    }
    if (a == 0) {
        throw InputError("metrics need at least one sample");
    }
}

std::string optional_real(const std::optional<double>& v) {
    return v ? format_real(*v) : "nan";
}

} // namespace

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truth) {
    require_same_length(predictions.size(), truth.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hits += predictions[i] == truth[i];
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::size_t Confusion::total() const { return std::accumulate(matrix.begin(), matrix.end(), std::size_t{0}); }

std::size_t Confusion::trace() const {
    std::size_t t = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        t += at(c, c);
    }
    return t;
}

Confusion confusion(std::span<const std::size_t> predictions, std::span<const std::size_t> truth,
                    std::size_t classes) {
    require_same_length(predictions.size(), truth.size());
    Confusion cm{classes, std::vector<std::size_t>(classes * classes, 0), std::vector<ConfusionCounts>(classes)};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= classes || predictions[i] >= classes) {
            throw InputError("label at sample " + std::to_string(i) + " outside " + std::to_string(classes) +
                             " classes");
        }
        ++cm.matrix[truth[i] * classes + predictions[i]];
    }
    std::vector<std::size_t> row_sum(classes, 0), col_sum(classes, 0);
    for (std::size_t t = 0; t < classes; ++t) {
        for (std::size_t p = 0; p < classes; ++p) {
            row_sum[t] += cm.at(t, p);
            col_sum[p] += cm.at(t, p);
        }
    }
    const std::size_t total = truth.size();
    for (std::size_t c = 0; c < classes; ++c) {
        ConfusionCounts& k = cm.per_class[c];
        k.tp = cm.at(c, c);
        k.fn = row_sum[c] - k.tp;
        k.fp = col_sum[c] - k.tp;
        k.tn = total - k.tp - k.fn - k.fp;
    }
    return cm;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) {
        throw InputError("roc_curve: scores and labels differ in length");
    }
    const auto pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
    const std::size_t neg = positive.size() - pos;
    if (pos == 0 || neg == 0) {
        throw InputError("roc_curve is undefined without both positive and negative samples");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> points{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        (positive[order[k]] ? tp : fp) += 1;
        // Tied scores form a single step.
        if (k + 1 == order.size() || scores[order[k + 1]] != scores[order[k]]) {
            points.push_back({scores[order[k]], double(tp) / double(pos), double(fp) / double(neg)});
        }
    }
    return points;
}

double auc(std::span<const RocPoint> points) {
    if (points.size() < 2) {
        throw InputError("auc needs at least 2 ROC points");
    }
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (points[i].fpr < points[i - 1].fpr) {
            throw InputError("auc expects points sorted by fpr");
        }
        area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    }
    return area;
}

PrecisionRecall precision_recall(const ConfusionCounts& counts) {
    PrecisionRecall pr;
    if (counts.tp + counts.fp > 0) {
        pr.precision = double(counts.tp) / double(counts.tp + counts.fp);
    }
    if (counts.tp + counts.fn > 0) {
        pr.recall = double(counts.tp) / double(counts.tp + counts.fn);
    }
    return pr;
}

EvalReport evaluate_predictions(const Tensor& probs, std::span<const std::size_t> truth,
                                const std::vector<std::string>& label_map) {
    if (probs.shape().rank() != 2 || probs.dim(0) != truth.size()) {
        throw ShapeError("probabilities " + probs.shape().to_string() + " do not match " +
                         std::to_string(truth.size()) + " labels");
    }
    const std::size_t n = probs.dim(0), classes = probs.dim(1);
    if (label_map.size() != classes) {
        throw CompatibilityError("label map has " + std::to_string(label_map.size()) + " entries for " +
                                 std::to_string(classes) + " classes");
    }
    std::vector<std::size_t> predicted(n);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = probs.data().subspan(r * classes, classes);
        predicted[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    EvalReport report;
    report.confusion = confusion(predicted, truth, classes);
    report.accuracy = accuracy(predicted, truth);

    std::vector<double> scores(n);
    const auto positive = std::make_unique<bool[]>(n);
    for (std::size_t c = 0; c < classes; ++c) {
        ClassReport cr{label_map[c], report.confusion.per_class[c], precision_recall(report.confusion.per_class[c]),
                       std::nullopt, {}};
        std::size_t pos = 0;
        for (std::size_t r = 0; r < n; ++r) {
            scores[r] = probs[r * classes + c];
            positive[r] = truth[r] == c;
            pos += truth[r] == c;
        }
        if (pos > 0 && pos < n) {
            cr.roc = roc_curve(scores, std::span<const bool>(positive.get(), n));
            cr.auc = auc(cr.roc);
        }
        report.classes.push_back(std::move(cr));
    }
    return report;
}

void write_predictions_csv(std::ostream& out, const Tensor& probs, std::span<const std::size_t> truth) {
    const std::size_t n = probs.dim(0), classes = probs.dim(1);
    out << "sample_index,true_class,pred_class";
    for (std::size_t c = 0; c < classes; ++c) {
        out << ",score_" << c;
    }
    out << '\n';
    for (std::size_t r = 0; r < n; ++r) {
        auto row = probs.data().subspan(r * classes, classes);
        const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
        out << r << ',' << truth[r] << ',' << pred;
        for (float v : row) {
            out << ',' << format_real(v);
        }
        out << '\n';
    }
}

void write_confusion_csv(std::ostream& out, const Confusion& cm) {
    out << "true\\pred";
    for (std::size_t p = 0; p < cm.classes; ++p) {
        out << ',' << p;
    }
    out << '\n';
    for (std::size_t t = 0; t < cm.classes; ++t) {
        out << t;
        for (std::size_t p = 0; p < cm.classes; ++p) {
            out << ',' << cm.at(t, p);
        }
        out << '\n';
    }
}

void write_roc_csv(std::ostream& out, std::size_t class_index, std::span<const RocPoint> points) {
    out << "class,threshold,fpr,tpr\n";
    for (const RocPoint& p : points) {
        out << class_index << ',' << format_real(p.threshold) << ',' << format_real(p.fpr) << ','
            << format_real(p.tpr) << '\n';
    }
}

void write_auc_csv(std::ostream& out, const EvalReport& report) {
    out << "class,char,auc\n";
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
        out << c << ',' << report.classes[c].label << ',' << optional_real(report.classes[c].auc) << '\n';
    }
}

void write_class_metrics_csv(std::ostream& out, const EvalReport& report) {
    out << "class,char,tp,fp,fn,tn,precision,recall,auc\n";
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
        const ClassReport& cr = report.classes[c];
        out << c << ',' << cr.label << ',' << cr.counts.tp << ',' << cr.counts.fp << ',' << cr.counts.fn << ','
            << cr.counts.tn << ',' << optional_real(cr.pr.precision) << ',' << optional_real(cr.pr.recall) << ','
            << optional_real(cr.auc) << '\n';
    }
}

} // namespace htr
