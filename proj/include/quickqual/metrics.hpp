#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/matrix.hpp"

namespace quickqual {

/// Per-sample probabilities: n x 3 (Good, Usable, Bad) or n x 1 (p_bad).
struct PredictionSet {
    std::vector<std::string> ids;
    Matrix<double> probabilities;
    std::vector<int> true_labels;

    [[nodiscard]] std::size_t size() const noexcept { return true_labels.size(); }
    [[nodiscard]] bool scalar() const noexcept { return probabilities.cols() == 1; }

    void validate() const {
        require(probabilities.rows() == true_labels.size(), ErrorCode::shape_mismatch,
                "probability rows and labels differ");
        require(ids.empty() || ids.size() == true_labels.size(), ErrorCode::shape_mismatch, "ids and labels differ");
        require(probabilities.cols() == 1 || probabilities.cols() == kNumClasses, ErrorCode::shape_mismatch,
                "predictions must have 1 or 3 probability columns");
        for (std::size_t i = 0; i < probabilities.rows(); ++i) {
            double sum = 0.0;
            for (double p : probabilities.row(i)) {
                require(p >= 0.0 && p <= 1.0, ErrorCode::invalid_argument, "probability outside [0, 1]");
                sum += p;
            }
            if (probabilities.cols() == kNumClasses)
                require(std::abs(sum - 1.0) <= 1e-6, ErrorCode::invalid_argument,
                        "probability row " + std::to_string(i) + " does not sum to 1");
        }
    }
};

struct ConfusionMatrix {
    int classes = kNumClasses;
    Matrix<long long> counts;  // rows = truth, columns = prediction

    [[nodiscard]] long long total() const {
        return std::accumulate(counts.data().begin(), counts.data().end(), 0LL);
    }
};

inline void require_nonempty(std::size_t n) {
    require(n > 0, ErrorCode::invalid_argument, "metric needs at least one sample");
}

inline void require_same_length(std::size_t a, std::size_t b) {
    require(a == b, ErrorCode::shape_mismatch, "prediction and label counts differ");
}

inline std::vector<int> argmax_labels(const Matrix<double>& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        ClassProbabilities cp;
        for (std::size_t c = 0; c < kNumClasses; ++c) cp.p[c] = probs(i, c);
        out[i] = static_cast<int>(classify(cp));
    }
    return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    require_nonempty(truth.size());
    require_same_length(predicted.size(), truth.size());
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

inline ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                                        int classes = kNumClasses) {
    require_same_length(predicted.size(), truth.size());
    ConfusionMatrix cm{classes, Matrix<long long>(static_cast<std::size_t>(classes), static_cast<std::size_t>(classes), 0)};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require(truth[i] >= 0 && truth[i] < classes && predicted[i] >= 0 && predicted[i] < classes,
                ErrorCode::invalid_argument, "label outside class range");
        ++cm.counts(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
    }
    return cm;
}

/// Rows divided by their totals; empty rows stay zero.
inline Matrix<double> row_normalize(const ConfusionMatrix& cm) {
    const auto k = static_cast<std::size_t>(cm.classes);
    Matrix<double> out(k, k, 0.0);
    for (std::size_t r = 0; r < k; ++r) {
        long long total = 0;
        for (std::size_t c = 0; c < k; ++c) total += cm.counts(r, c);
        if (total == 0) continue;
        for (std::size_t c = 0; c < k; ++c)
            out(r, c) = static_cast<double>(cm.counts(r, c)) / static_cast<double>(total);
    }
    return out;
}

/// F1 of one class; 0 when the class has no true positives.
inline double class_f1(const ConfusionMatrix& cm, int cls) {
    const auto c = static_cast<std::size_t>(cls);
    const auto k = static_cast<std::size_t>(cm.classes);
    long long tp = cm.counts(c, c), fp = 0, fn = 0;
    for (std::size_t o = 0; o < k; ++o) {
        if (o == c) continue;
        fp += cm.counts(o, c);
        fn += cm.counts(c, o);
    }
    if (tp == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

/// Unweighted mean of per-class F1 over all `classes` labels, including
/// classes absent from both truth and prediction (which score 0).
inline double macro_f1(std::span<const int> predicted, std::span<const int> truth, int classes = kNumClasses) {
    require_nonempty(truth.size());
    const auto cm = confusion_matrix(predicted, truth, classes);
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += class_f1(cm, c);
    return sum / classes;
}

/// F1 of the positive class (label 1) of a binary problem.
inline double binary_f1(std::span<const int> predicted, std::span<const int> truth) {
    require_nonempty(truth.size());
    return class_f1(confusion_matrix(predicted, truth, 2), 1);
}

/// Normalised Mann-Whitney U: probability that a random positive outscores a
/// random negative, ties counting one half.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    require_same_length(scores.size(), labels.size());
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) {
                rank_sum += avg_rank;
                ++pos;
            }
        i = j;
    }
    for (int l : labels) require(l == 0 || l == 1, ErrorCode::invalid_argument, "AUC labels must be 0/1");
    const std::size_t neg = n - pos;
    require(pos > 0 && neg > 0, ErrorCode::undefined_metric, "AUC is undefined when only one class is present");
    const double u = rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Macro average of one-vs-rest AUCs over the probability columns.
inline double roc_auc_ovr(const Matrix<double>& probs, std::span<const int> truth) {
    require_same_length(probs.rows(), truth.size());
    const std::size_t k = probs.cols();
    double sum = 0.0;
    std::vector<double> col(probs.rows());
    std::vector<int> bin(probs.rows());
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            col[i] = probs(i, c);
            bin[i] = truth[i] == static_cast<int>(c) ? 1 : 0;
        }
        sum += roc_auc(col, bin);
    }
    return sum / static_cast<double>(k);
}

inline constexpr double kLogLossEps = 1e-15;

/// Mean of -log p(true class), probabilities clipped to [1e-15, 1 - 1e-15].
inline double log_loss(const Matrix<double>& probs, std::span<const int> truth) {
    require_nonempty(truth.size());
    require_same_length(probs.rows(), truth.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require(truth[i] >= 0 && static_cast<std::size_t>(truth[i]) < probs.cols(), ErrorCode::invalid_argument,
                "label outside probability columns");
        const double p = std::clamp(probs(i, static_cast<std::size_t>(truth[i])), kLogLossEps, 1.0 - kLogLossEps);
        sum -= std::log(p);
    }
    return sum / static_cast<double>(truth.size());
}

/// Binary log loss of scores p(label == 1).
inline double log_loss_binary(std::span<const double> scores, std::span<const int> labels) {
    require_nonempty(labels.size());
    require_same_length(scores.size(), labels.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = std::clamp(scores[i], kLogLossEps, 1.0 - kLogLossEps);
        sum -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return sum / static_cast<double>(labels.size());
}

enum class KappaWeights { none, quadratic };

/// kappa = 1 - sum(w O) / sum(w E), E the outer product of the marginals;
/// defined as 1 when the expected disagreement is zero.
inline double cohen_kappa(std::span<const int> predicted, std::span<const int> truth, KappaWeights weights,
                          int classes = kNumClasses) {
    require_nonempty(truth.size());
    const auto cm = confusion_matrix(predicted, truth, classes);
    const auto k = static_cast<std::size_t>(classes);
    const double n = static_cast<double>(truth.size());
    std::vector<double> row(k, 0.0), col(k, 0.0);
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) {
            row[r] += static_cast<double>(cm.counts(r, c));
            col[c] += static_cast<double>(cm.counts(r, c));
        }
    double observed = 0.0, expected = 0.0;
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) {
            double w;
            if (weights == KappaWeights::none) {
                w = r == c ? 0.0 : 1.0;
            } else {
                const double d = static_cast<double>(r) - static_cast<double>(c);
                w = d * d / ((k - 1.0) * (k - 1.0));
            }
            observed += w * static_cast<double>(cm.counts(r, c));
            expected += w * row[r] * col[c] / n;
        }
    if (expected == 0.0) return 1.0;
    return 1.0 - observed / expected;
}

/// Gradable (Good, Usable) vs Ungradable (Bad); the score is p(Bad).
struct BinaryPredictionSet {
    std::vector<std::string> ids;
    std::vector<double> scores;
    std::vector<int> labels;  // 1 = Ungradable
};

inline BinaryPredictionSet binarize_gradable(const PredictionSet& preds) {
    preds.validate();
    BinaryPredictionSet out;
    out.ids = preds.ids;
    const std::size_t col = preds.scalar() ? 0 : 2;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out.scores.push_back(preds.probabilities(i, col));
        out.labels.push_back(preds.true_labels[i] == 2 ? 1 : 0);
    }
    return out;
}

enum class Gradability { gradable, ungradable };

/// Ungradable iff p_bad >= cutoff.
inline Gradability threshold_classify(QualityScore score, double cutoff = 0.5) {
    return score.p_bad >= cutoff ? Gradability::ungradable : Gradability::gradable;
}

struct HistogramCell {
    int true_class = 0;
    int prob_column = 0;  // 0..2, or 2 for a scalar p_bad head
    std::vector<double> edges;      // bins + 1 edges over [0, 1]
    std::vector<long long> counts;  // last bin is closed on the right
};

/// Per (true class, probability column) counts of predicted probabilities.
inline std::vector<HistogramCell> probability_histograms(const PredictionSet& preds, int bins = 20) {
    require(bins >= 1, ErrorCode::invalid_argument, "histogram needs at least one bin");
    preds.validate();
    std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b) edges[static_cast<std::size_t>(b)] = static_cast<double>(b) / bins;

    std::vector<HistogramCell> cells;
    for (int t = 0; t < kNumClasses; ++t) {
        for (std::size_t c = 0; c < preds.probabilities.cols(); ++c) {
            HistogramCell cell{t, preds.scalar() ? 2 : static_cast<int>(c), edges,
                               std::vector<long long>(static_cast<std::size_t>(bins), 0)};
            for (std::size_t i = 0; i < preds.size(); ++i) {
                if (preds.true_labels[i] != t) continue;
                const double p = preds.probabilities(i, c);
                const auto b = std::min(static_cast<std::size_t>(std::floor(p * bins)), static_cast<std::size_t>(bins - 1));
                ++cell.counts[b];
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

struct MetricsReport {
    std::size_t n = 0;
    double accuracy = 0.0;
    double auc = 0.0;
    double f1 = 0.0;
    double logloss = 0.0;
    std::optional<double> kappa;      // three-class task only
    std::optional<double> quadkappa;  // three-class task only
    ConfusionMatrix confusion;
};

/// Three-class metrics: argmax labels, macro F1, macro OvR AUC.
inline MetricsReport evaluate_three_class(const PredictionSet& preds) {
    preds.validate();
    require(!preds.scalar(), ErrorCode::invalid_argument, "three-class evaluation needs 3 probability columns");
    require_nonempty(preds.size());
    const auto predicted = argmax_labels(preds.probabilities);
    MetricsReport r;
    r.n = preds.size();
    r.accuracy = accuracy(predicted, preds.true_labels);
    r.auc = roc_auc_ovr(preds.probabilities, preds.true_labels);
    r.f1 = macro_f1(predicted, preds.true_labels);
    r.logloss = log_loss(preds.probabilities, preds.true_labels);
    r.kappa = cohen_kappa(predicted, preds.true_labels, KappaWeights::none);
    r.quadkappa = cohen_kappa(predicted, preds.true_labels, KappaWeights::quadratic);
    r.confusion = confusion_matrix(predicted, preds.true_labels);
    return r;
}

/// Gradable vs Ungradable metrics using p(Bad).
inline MetricsReport evaluate_binary(const PredictionSet& preds, double cutoff = 0.5) {
    const auto bin = binarize_gradable(preds);
    require_nonempty(bin.labels.size());
    std::vector<int> predicted;
    for (double s : bin.scores)
        predicted.push_back(threshold_classify({s}, cutoff) == Gradability::ungradable ? 1 : 0);
    MetricsReport r;
    r.n = bin.labels.size();
    r.accuracy = accuracy(predicted, bin.labels);
    r.auc = roc_auc(bin.scores, bin.labels);
    r.f1 = binary_f1(predicted, bin.labels);
    r.logloss = log_loss_binary(bin.scores, bin.labels);
    r.confusion = confusion_matrix(predicted, bin.labels, 2);
    return r;
}

}  // namespace quickqual
