#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmsnet/config.hpp"

namespace dmsnet {

/// k x k counts; entry (i, j) is the number of samples of true class i
/// predicted as class j.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int k = kNumClasses) : k_(k), counts_(static_cast<std::size_t>(k) * k, 0) {}

    int classes() const { return k_; }
    std::int64_t& at(int truth, int pred) { return counts_[index(truth, pred)]; }
    std::int64_t at(int truth, int pred) const { return counts_[index(truth, pred)]; }
    std::int64_t total() const;
    std::int64_t trace() const;
    std::int64_t row_sum(int i) const;
    std::int64_t col_sum(int j) const;

    static ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows);
    std::vector<std::vector<std::int64_t>> rows() const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * k_ + j; }
    int k_;
    std::vector<std::int64_t> counts_;
};

/// InputError for unequal lengths or ids outside [0, k).
ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth, int k = kNumClasses);

struct ClassificationScores {
    double accuracy = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    std::vector<double> precision, recall, f1;  // per class, 0/0 -> 0
};

/// UndefinedMetricsError for an all-zero matrix.
ClassificationScores classification_scores(const ConfusionMatrix& cm);

/// Chance-corrected agreement (p_o - p_e) / (1 - p_e); 1 or 0 when p_e = 1.
double cohen_kappa(const ConfusionMatrix& cm);

/// One-vs-rest AUC of a single class as the fraction of positive/negative
/// pairs ranked correctly, ties counting one half. nullopt without both a
/// positive and a negative.
std::optional<double> pairwise_auc(std::span<const double> scores, std::span<const std::uint8_t> positives);

struct RocCurve {
    std::vector<double> fpr, tpr;  // starts at (0,0), ends at (1,1)
};

/// ROC points at every distinct score threshold (tied scores form a single
/// diagonal step).
RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> positives);
double trapezoid_auc(const RocCurve& curve);

struct AucSummary {
    double macro = 0.0;
    std::vector<std::optional<double>> per_class;
    std::vector<int> excluded_classes;  // no positives or no negatives
};

/// Macro one-vs-rest AUC. `scores` and `truth` are row-major n x k.
/// UndefinedMetricsError when no class has a defined AUC.
AucSummary auc_macro(std::span<const double> scores, std::span<const std::uint8_t> truth, int k);

struct PerClassMetrics {
    std::string name;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::optional<double> auc;
    std::int64_t support = 0;
};

struct MetricsReport {
    TaskMode task_mode = TaskMode::multiclass;
    double accuracy = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double kappa = 0.0;
    double f1_macro = 0.0;
    std::optional<double> auc_macro;  // absent when no class has both outcomes
    std::vector<int> auc_excluded_classes;
    ConfusionMatrix confusion;
    std::vector<PerClassMetrics> per_class;
    std::int64_t n_samples = 0;
};

/// Builds the full report from (n x 8) class scores and labels.
///
/// Multiclass: predictions are the argmax of the scores. Multilabel:
/// accuracy is the exact-match ratio of 0.5-thresholded decisions and
/// precision/recall/F1 are macro means over per-class binary decisions; the
/// confusion matrix and kappa use argmax prediction vs. first set label.
MetricsReport build_report(std::span<const double> scores, std::span<const LabelVector> labels, TaskMode mode);

nlohmann::json to_json(const MetricsReport& report);

}  // namespace dmsnet
