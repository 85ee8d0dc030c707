#pragma once

#include <string>
#include <variant>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/head_io.hpp"
#include "quickqual/training/dataset.hpp"
#include "quickqual/training/logistic.hpp"
#include "quickqual/training/svm.hpp"

namespace quickqual {

struct FixedPrior {
    double p = 0.5;
};
struct BinarizedGradable {};
using BinaryTargetMode = std::variant<FixedPrior, BinarizedGradable>;

enum class Learner { logistic, svm };

inline Learner parse_learner(const std::string& s) {
    if (s == "logistic") return Learner::logistic;
    if (s == "svm") return Learner::svm;
    fail(ErrorCode::invalid_argument, "unknown learner '" + s + "' (expected logistic|svm)");
}

inline std::vector<double> binary_targets(const FeatureDataset& data, const BinaryTargetMode& mode) {
    if (const auto* fp = std::get_if<FixedPrior>(&mode)) return make_fixed_prior_targets(data.labels, fp->p);
    return make_binarized_targets(data.labels);
}

/// Single-score head. The logistic learner fits the soft targets; the SVM
/// learner needs hard targets and trains Good+Usable (as class 0) against Bad.
inline Head fit_binary_head(const FeatureDataset& data, const BinaryTargetMode& mode, Learner learner,
                            const LogisticConfig& logistic = {}, const SvmConfig& svm = {}) {
    data.validate();
    if (learner == Learner::logistic) return fit_logistic(to_double(data.features), binary_targets(data, mode), logistic);

    require(std::holds_alternative<BinarizedGradable>(mode), ErrorCode::invalid_argument,
            "the SVM learner needs binarized targets");
    std::vector<int> labels;
    labels.reserve(data.labels.size());
    for (int l : data.labels) labels.push_back(l == 2 ? 2 : 0);
    return fit_svm_multiclass(to_double(data.features), labels, svm);
}

}  // namespace quickqual
