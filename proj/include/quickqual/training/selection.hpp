#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/matrix.hpp"
#include "quickqual/metrics.hpp"
#include "quickqual/random.hpp"
#include "quickqual/training/logistic.hpp"

namespace quickqual {

struct ShortlistResult {
    std::vector<std::size_t> indices;   // ascending, |coef| >= cutoff
    std::vector<double> coefficients;   // full L1 coefficient vector
    double bias = 0.0;
};

/// Fits an L1-penalised logistic model on every column and keeps the columns
/// whose coefficient magnitude reaches the cutoff.
inline ShortlistResult l1_shortlist(const Matrix<double>& x, std::span<const double> t, double cutoff = 0.2,
                                    LogisticConfig cfg = {Penalty::l1, 1.0, 1e-6, 200000}) {
    require(cutoff >= 0, ErrorCode::invalid_argument, "cutoff must be >= 0");
    cfg.penalty = Penalty::l1;
    const auto head = fit_logistic(x, t, cfg);
    ShortlistResult r;
    r.coefficients = head.weights;
    r.bias = head.bias;
    for (std::size_t j = 0; j < head.weights.size(); ++j)
        if (head.weights[j] != 0.0 && std::abs(head.weights[j]) >= cutoff) r.indices.push_back(j);
    return r;
}

/// Fold id per sample: within each stratum the samples are shuffled with the
/// seed and dealt round-robin, continuing the rotation across strata.
inline std::vector<int> stratified_folds(std::span<const int> strata, int folds, std::uint64_t seed) {
    require(folds >= 2, ErrorCode::invalid_argument, "need at least 2 folds");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(i);
    Rng rng(seed);
    std::vector<int> assignment(strata.size(), 0);
    std::size_t next = 0;
    for (auto& [key, members] : groups) {
        rng.shuffle(std::span<std::size_t>(members));
        for (auto i : members) assignment[i] = static_cast<int>(next++ % static_cast<std::size_t>(folds));
    }
    return assignment;
}

struct StepwiseConfig {
    std::size_t k = 9;
    int folds = 2;
    std::uint64_t seed = 0;
    LogisticConfig refit{Penalty::l2, 1.0, 1e-6, 200000};
};

struct SelectionResult {
    std::vector<std::size_t> shortlist;         // ascending
    std::vector<std::size_t> ordered_selected;  // in selection order
    std::vector<double> cv_auc_trace;           // mean CV AUC after each addition
};

/// Samples for stepwise selection: soft targets for fitting, strata for the
/// fold split, and binary labels scored by AUC.
struct SelectionData {
    const Matrix<double>& x;
    std::span<const double> targets;
    std::span<const int> strata;
    std::span<const int> positive;
};

namespace detail {

class FoldEvaluator {
public:
    FoldEvaluator(const SelectionData& data, const StepwiseConfig& cfg) : data_(data), cfg_(cfg) {
        const auto n = data.x.rows();
        require(data.targets.size() == n && data.strata.size() == n && data.positive.size() == n,
                ErrorCode::shape_mismatch, "selection inputs differ in length");
        const auto assignment = stratified_folds(data.strata, cfg.folds, cfg.seed);
        for (int f = 0; f < cfg.folds; ++f) {
            Split s;
            for (std::size_t i = 0; i < n; ++i) (assignment[i] == f ? s.test : s.train).push_back(i);
            bool pos = false, neg = false;
            for (auto i : s.test) (data.positive[i] == 1 ? pos : neg) = true;
            bool tpos = false, tneg = false;
            for (auto i : s.train) (data.positive[i] == 1 ? tpos : tneg) = true;
            require(pos && neg && tpos && tneg, ErrorCode::insufficient_data,
                    "every fold needs both positive and negative samples");
            for (auto i : s.train) s.train_t.push_back(data.targets[i]);
            for (auto i : s.test) s.test_y.push_back(data.positive[i]);
            splits_.push_back(std::move(s));
        }
    }

    /// Mean held-out AUC of a logistic refit on the given columns.
    double mean_auc(std::span<const std::size_t> columns) const {
        double sum = 0.0;
        for (const auto& s : splits_) {
            const Matrix<double> train = data_.x.select_rows(s.train).select_cols(columns);
            const auto head = fit_logistic(train, s.train_t, cfg_.refit);
            std::vector<double> scores;
            scores.reserve(s.test.size());
            for (auto i : s.test) {
                double z = head.bias;
                for (std::size_t c = 0; c < columns.size(); ++c) z += head.weights[c] * data_.x(i, columns[c]);
                scores.push_back(sigmoid(z));
            }
            sum += roc_auc(scores, s.test_y);
        }
        return sum / static_cast<double>(splits_.size());
    }

private:
    struct Split {
        std::vector<std::size_t> train, test;
        std::vector<double> train_t;
        std::vector<int> test_y;
    };
    const SelectionData& data_;
    const StepwiseConfig& cfg_;
    std::vector<Split> splits_;
};

}  // namespace detail

/// Greedy forward selection by mean cross-validated AUC. Each step adds the
/// candidate with the highest AUC; ties go to the lower feature index.
inline SelectionResult forward_stepwise_select(const SelectionData& data, std::span<const std::size_t> shortlist,
                                               const StepwiseConfig& cfg = {}) {
    SelectionResult r;
    r.shortlist.assign(shortlist.begin(), shortlist.end());
    std::sort(r.shortlist.begin(), r.shortlist.end());
    r.shortlist.erase(std::unique(r.shortlist.begin(), r.shortlist.end()), r.shortlist.end());
    for (auto j : r.shortlist)
        require(j < data.x.cols(), ErrorCode::index_out_of_range, "shortlist index outside feature matrix");
    require(cfg.k >= 1, ErrorCode::invalid_argument, "k must be >= 1");
    require(r.shortlist.size() >= cfg.k, ErrorCode::invalid_argument,
            "k = " + std::to_string(cfg.k) + " exceeds shortlist size " + std::to_string(r.shortlist.size()));

    const detail::FoldEvaluator eval(data, cfg);
    std::vector<std::size_t> remaining = r.shortlist;
    std::vector<std::size_t> columns;
    while (r.ordered_selected.size() < cfg.k) {
        double best_auc = -1.0;
        std::size_t best_pos = remaining.size();
        for (std::size_t p = 0; p < remaining.size(); ++p) {
            columns = r.ordered_selected;
            columns.push_back(remaining[p]);
            const double auc = eval.mean_auc(columns);
            if (auc > best_auc) {
                best_auc = auc;
                best_pos = p;
            }
        }
        r.ordered_selected.push_back(remaining[best_pos]);
        r.cv_auc_trace.push_back(best_auc);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_pos));
    }
    return r;
}

/// Logistic head on the selected columns, refit on all samples, with the
/// feature indices mapped back to the full vector.
inline LinearHead refit_selected(const Matrix<double>& x, std::span<const double> t,
                                 std::span<const std::size_t> selected, const LogisticConfig& cfg) {
    const auto sub = fit_logistic(x.select_cols(selected), t, cfg);
    LinearHead head;
    head.indices.assign(selected.begin(), selected.end());
    head.weights = sub.weights;
    head.bias = sub.bias;
    return head;
}

}  // namespace quickqual
