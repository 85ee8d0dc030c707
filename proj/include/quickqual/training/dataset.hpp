#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/matrix.hpp"

namespace quickqual {

/// Feature rows with their quality labels (0 Good, 1 Usable, 2 Bad).
struct FeatureDataset {
    Matrix<float> features;
    std::vector<int> labels;
    std::vector<std::string> ids;

    void validate() const {
        require(features.rows() == labels.size(), ErrorCode::shape_mismatch,
                "feature rows (" + std::to_string(features.rows()) + ") and labels (" +
                    std::to_string(labels.size()) + ") differ");
        require(ids.empty() || ids.size() == labels.size(), ErrorCode::shape_mismatch, "ids and labels differ");
        for (int l : labels)
            require(l >= 0 && l < kNumClasses, ErrorCode::invalid_argument, "label outside {0, 1, 2}");
        for (float v : features.data())
            require(std::isfinite(v), ErrorCode::invalid_argument, "non-finite feature value");
    }
};

/// Good -> 0, Usable -> prior, Bad -> 1.
inline std::vector<double> make_fixed_prior_targets(std::span<const int> labels, double prior) {
    require(prior >= 0.0 && prior <= 1.0, ErrorCode::invalid_argument, "fixed prior must lie in [0, 1]");
    std::vector<double> t;
    t.reserve(labels.size());
    for (int l : labels) {
        require(l >= 0 && l < kNumClasses, ErrorCode::invalid_argument, "label outside {0, 1, 2}");
        t.push_back(l == 0 ? 0.0 : l == 1 ? prior : 1.0);
    }
    return t;
}

/// Gradable (Good or Usable) -> 0, Ungradable (Bad) -> 1.
inline std::vector<double> make_binarized_targets(std::span<const int> labels) {
    std::vector<double> t;
    t.reserve(labels.size());
    for (int l : labels) {
        require(l >= 0 && l < kNumClasses, ErrorCode::invalid_argument, "label outside {0, 1, 2}");
        t.push_back(l == 2 ? 1.0 : 0.0);
    }
    return t;
}

}  // namespace quickqual
