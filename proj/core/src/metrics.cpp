#include "dmsnet/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "dmsnet/errors.hpp"

namespace dmsnet {

using nlohmann::json;

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t t = 0;
    for (int i = 0; i < k_; ++i) t += at(i, i);
    return t;
}

std::int64_t ConfusionMatrix::row_sum(int i) const {
    std::int64_t s = 0;
    for (int j = 0; j < k_; ++j) s += at(i, j);
    return s;
}

std::int64_t ConfusionMatrix::col_sum(int j) const {
    std::int64_t s = 0;
    for (int i = 0; i < k_; ++i) s += at(i, j);
    return s;
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
    ConfusionMatrix cm(static_cast<int>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw InputError("confusion matrix must be square");
        for (std::size_t j = 0; j < rows.size(); ++j) {
            if (rows[i][j] < 0) throw InputError("confusion matrix entries must be non-negative");
            cm.at(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
        }
    }
    return cm;
}

std::vector<std::vector<std::int64_t>> ConfusionMatrix::rows() const {
    std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(k_), std::vector<std::int64_t>(static_cast<std::size_t>(k_)));
    for (int i = 0; i < k_; ++i) {
        for (int j = 0; j < k_; ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = at(i, j);
    }
    return out;
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth, int k) {
    if (k <= 0) throw InputError("confusion_matrix: class count must be positive");
    if (predicted.size() != truth.size()) {
        throw InputError("confusion_matrix: " + std::to_string(predicted.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " labels");
    }
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = predicted[i];
        if (t < 0 || t >= k || p < 0 || p >= k) {
            throw InputError("confusion_matrix: class id out of range at sample " + std::to_string(i));
        }
        ++cm.at(t, p);
    }
    return cm;
}

namespace {

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ClassificationScores classification_scores(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw UndefinedMetricsError("classification scores are undefined for an empty confusion matrix");

    ClassificationScores s;
    const int k = cm.classes();
    for (int c = 0; c < k; ++c) {
        const double tp = static_cast<double>(cm.at(c, c));
        const double p = safe_ratio(tp, static_cast<double>(cm.col_sum(c)));
        const double r = safe_ratio(tp, static_cast<double>(cm.row_sum(c)));
        s.precision.push_back(p);
        s.recall.push_back(r);
        s.f1.push_back(harmonic(p, r));
    }
    s.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    s.precision_macro = mean(s.precision);
    s.recall_macro = mean(s.recall);
    s.f1_macro = mean(s.f1);
    return s;
}

double cohen_kappa(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw UndefinedMetricsError("kappa is undefined for an empty confusion matrix");
    const double n = static_cast<double>(total);
    const double p_o = static_cast<double>(cm.trace()) / n;
    double p_e = 0.0;
    for (int i = 0; i < cm.classes(); ++i) {
        p_e += static_cast<double>(cm.row_sum(i)) * static_cast<double>(cm.col_sum(i));
    }
    p_e /= n * n;
    if (p_e == 1.0) return p_o == 1.0 ? 1.0 : 0.0;
    return (p_o - p_e) / (1.0 - p_e);
}

std::optional<double> pairwise_auc(std::span<const double> scores, std::span<const std::uint8_t> positives) {
    if (scores.size() != positives.size()) throw InputError("auc: scores and labels differ in length");
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) (positives[i] ? pos : neg).push_back(scores[i]);
    if (pos.empty() || neg.empty()) return std::nullopt;

    // Count wins with sorted negatives; ties contribute one half.
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double p : pos) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
        const auto hi = std::upper_bound(lo, neg.end(), p);
        wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> positives) {
    if (scores.size() != positives.size()) throw InputError("roc_curve: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double n_pos = 0.0, n_neg = 0.0;
    for (auto p : positives) (p ? n_pos : n_neg) += 1.0;

    RocCurve curve;
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (positives[order[i]] ? tp : fp) += 1.0;
            ++i;
        }
        curve.fpr.push_back(safe_ratio(fp, n_neg));
        curve.tpr.push_back(safe_ratio(tp, n_pos));
    }
    if (curve.fpr.back() != 1.0 || curve.tpr.back() != 1.0) {
        curve.fpr.push_back(1.0);
        curve.tpr.push_back(1.0);
    }
    return curve;
}

double trapezoid_auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
        area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) * 0.5;
    }
    return area;
}

AucSummary auc_macro(std::span<const double> scores, std::span<const std::uint8_t> truth, int k) {
    if (k <= 0 || scores.size() != truth.size() || scores.size() % static_cast<std::size_t>(k) != 0) {
        throw InputError("auc_macro: scores and labels must both be n x k");
    }
    const std::size_t n = scores.size() / static_cast<std::size_t>(k);
    AucSummary out;
    std::vector<double> col(n);
    std::vector<std::uint8_t> pos(n);
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = scores[i * k + c];
            pos[i] = truth[i * k + c] ? 1 : 0;
        }
        auto auc = pairwise_auc(col, pos);
        out.per_class.push_back(auc);
        if (auc) {
            sum += *auc;
            ++defined;
        } else {
            out.excluded_classes.push_back(c);
        }
    }
    if (defined == 0) throw UndefinedMetricsError("auc_macro: no class has both positive and negative samples");
    out.macro = sum / defined;
    return out;
}

MetricsReport build_report(std::span<const double> scores, std::span<const LabelVector> labels, TaskMode mode) {
    const std::size_t n = labels.size();
    if (scores.size() != n * kNumClasses) {
        throw InputError("build_report: expected " + std::to_string(n) + " x 8 scores");
    }
    for (const auto& l : labels) l.validate(mode);

    MetricsReport r;
    r.task_mode = mode;
    r.n_samples = static_cast<std::int64_t>(n);

    std::vector<int> pred(n), truth(n);
    std::vector<std::uint8_t> truth_bits(n * kNumClasses);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = scores.data() + i * kNumClasses;
        pred[i] = static_cast<int>(std::max_element(row, row + kNumClasses) - row);
        const auto& bits = labels[i].bits;
        truth[i] = static_cast<int>(std::find(bits.begin(), bits.end(), std::uint8_t{1}) - bits.begin());
        std::copy(bits.begin(), bits.end(), truth_bits.begin() + static_cast<std::ptrdiff_t>(i * kNumClasses));
    }
    r.confusion = confusion_matrix(pred, truth, kNumClasses);
    r.kappa = cohen_kappa(r.confusion);

    std::vector<double> precision(kNumClasses), recall(kNumClasses), f1(kNumClasses);
    if (mode == TaskMode::multiclass) {
        auto s = classification_scores(r.confusion);
        r.accuracy = s.accuracy;
        precision = s.precision;
        recall = s.recall;
        f1 = s.f1;
    } else {
        std::size_t exact = 0;
        std::vector<double> tp(kNumClasses), fp(kNumClasses), fn(kNumClasses);
        for (std::size_t i = 0; i < n; ++i) {
            bool all_match = true;
            for (int c = 0; c < kNumClasses; ++c) {
                const bool decided = scores[i * kNumClasses + c] >= 0.5;
                const bool actual = truth_bits[i * kNumClasses + c] != 0;
                all_match = all_match && decided == actual;
                if (decided && actual) tp[c] += 1;
                if (decided && !actual) fp[c] += 1;
                if (!decided && actual) fn[c] += 1;
            }
            exact += all_match ? 1 : 0;
        }
        r.accuracy = static_cast<double>(exact) / static_cast<double>(n);
        for (int c = 0; c < kNumClasses; ++c) {
            precision[c] = safe_ratio(tp[c], tp[c] + fp[c]);
            recall[c] = safe_ratio(tp[c], tp[c] + fn[c]);
            f1[c] = harmonic(precision[c], recall[c]);
        }
    }
    r.precision_macro = mean(precision);
    r.recall_macro = mean(recall);
    r.f1_macro = mean(f1);

    std::vector<std::optional<double>> class_auc(kNumClasses);
    try {
        auto auc = auc_macro(scores, truth_bits, kNumClasses);
        r.auc_macro = auc.macro;
        r.auc_excluded_classes = auc.excluded_classes;
        class_auc = auc.per_class;
    } catch (const UndefinedMetricsError&) {
        for (int c = 0; c < kNumClasses; ++c) r.auc_excluded_classes.push_back(c);
    }

    for (int c = 0; c < kNumClasses; ++c) {
        PerClassMetrics pc;
        pc.name = std::string(kClassNames[static_cast<std::size_t>(c)]);
        pc.precision = precision[c];
        pc.recall = recall[c];
        pc.f1 = f1[c];
        pc.auc = class_auc[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < n; ++i) pc.support += truth_bits[i * kNumClasses + c];
        r.per_class.push_back(pc);
    }
    return r;
}

json to_json(const MetricsReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json per_class = json::array();
    for (const auto& pc : r.per_class) {
        per_class.push_back({{"class", pc.name},
                             {"precision", pc.precision},
                             {"recall", pc.recall},
                             {"f1", pc.f1},
                             {"auc", opt(pc.auc)},
                             {"support", pc.support}});
    }
    return json{{"task_mode", to_string(r.task_mode)},
                {"accuracy", r.accuracy},
                {"precision_macro", r.precision_macro},
                {"recall_macro", r.recall_macro},
                {"kappa", r.kappa},
                {"f1_macro", r.f1_macro},
                {"auc_macro", opt(r.auc_macro)},
                {"auc_averaging", "macro"},
                {"auc_excluded_classes", r.auc_excluded_classes},
                {"confusion", r.confusion.rows()},
                {"class_names", std::vector<std::string>(kClassNames.begin(), kClassNames.end())},
                {"per_class", per_class},
                {"n_samples", r.n_samples}};
}

}  // namespace dmsnet
