#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "quickqual/backbone.hpp"
#include "quickqual/error.hpp"
#include "quickqual/matrix.hpp"

namespace quickqual {

enum class QualityClass : int { good = 0, usable = 1, bad = 2 };

inline constexpr int kNumClasses = 3;

inline const char* to_string(QualityClass c) {
    switch (c) {
        case QualityClass::good: return "Good";
        case QualityClass::usable: return "Usable";
        case QualityClass::bad: return "Bad";
    }
    return "?";
}

/// Continuous quality score: probability that the image is ungradable.
struct QualityScore {
    double p_bad = 0.5;
};

struct ClassProbabilities {
    std::array<double, kNumClasses> p{};

    [[nodiscard]] double good() const noexcept { return p[0]; }
    [[nodiscard]] double usable() const noexcept { return p[1]; }
    [[nodiscard]] double bad() const noexcept { return p[2]; }
    double operator[](std::size_t i) const noexcept { return p[i]; }
};

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------- linear heads

/// Logistic head over a subset of feature positions.
struct LinearHead {
    std::vector<std::size_t> indices;
    std::vector<double> weights;
    double bias = 0.0;

    void validate(std::size_t feature_dim = kFeatureDim) const {
        require(!indices.empty(), ErrorCode::invalid_argument, "linear head needs at least one weight");
        require(indices.size() == weights.size(), ErrorCode::invalid_argument,
                "linear head indices and weights differ in length");
        std::set<std::size_t> seen;
        for (auto i : indices) {
            require(i < feature_dim, ErrorCode::index_out_of_range,
                    "feature index " + std::to_string(i) + " outside [0, " + std::to_string(feature_dim) + ")");
            require(seen.insert(i).second, ErrorCode::invalid_argument,
                    "duplicate feature index " + std::to_string(i));
        }
    }

    /// Linear predictor before the sigmoid.
    [[nodiscard]] double logit(std::span<const float> features) const {
        double z = 0.0;
        for (std::size_t k = 0; k < indices.size(); ++k) {
            require(indices[k] < features.size(), ErrorCode::index_out_of_range,
                    "feature index " + std::to_string(indices[k]) + " outside vector of length " +
                        std::to_string(features.size()));
            z += weights[k] * static_cast<double>(features[indices[k]]);
        }
        return z + bias;
    }

    friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

/// The published 10-parameter QuickQual-MEME head (9 weights, 1 bias).
struct MemeHead {
    static constexpr std::array<std::size_t, 9> indices{71, 109, 121, 53, 55, 123, 29, 133, 84};
    static constexpr std::array<double, 9> weights{-1411.32, 517.09, 342.41, -707.9, 1442.09,
                                                   -23.25,   -541.64, -8.44,  5.44};
    static constexpr double bias = 5.18;

    static LinearHead as_linear() {
        return {{indices.begin(), indices.end()}, {weights.begin(), weights.end()}, bias};
    }
};

inline QualityScore linear_predict(const LinearHead& head, std::span<const float> features) {
    return {sigmoid(head.logit(features))};
}

inline QualityScore linear_predict(const LinearHead& head, const FeatureVector& features) {
    return linear_predict(head, features.view());
}

inline QualityScore meme_predict(std::span<const float> features) {
    require(features.size() == kFeatureDim, ErrorCode::shape_mismatch,
            "MEME head expects 1024 features, got " + std::to_string(features.size()));
    static const LinearHead head = MemeHead::as_linear();
    return linear_predict(head, features);
}

inline QualityScore meme_predict(const FeatureVector& features) { return meme_predict(features.view()); }

// ------------------------------------------------------------------- SVM head

/// One binary RBF machine of the one-vs-one ensemble. Positive decision
/// values vote for `positive_class`.
struct SvmPair {
    int positive_class = 0;
    int negative_class = 1;
    Matrix<double> support_vectors;  // m x d
    std::vector<double> dual_coef;   // alpha_i * y_i
    double intercept = 0.0;          // f(x) = sum dual_coef_i K(sv_i, x) + intercept
    double platt_a = 0.0;            // P(positive | f) = 1 / (1 + exp(platt_a * f + platt_b))
    double platt_b = 0.0;

    friend bool operator==(const SvmPair&, const SvmPair&) = default;
};

struct SvmHead {
    std::vector<int> classes;  // ascending subset of {0, 1, 2}
    double gamma = 1.0;
    double C = 1.0;
    std::vector<SvmPair> pairs;  // (classes[i], classes[j]) for i < j, row-major order

    void validate() const {
        require(classes.size() >= 2 && classes.size() <= kNumClasses, ErrorCode::invalid_argument,
                "svm head needs 2 or 3 classes");
        for (std::size_t i = 0; i < classes.size(); ++i) {
            require(classes[i] >= 0 && classes[i] < kNumClasses, ErrorCode::invalid_argument,
                    "svm class label out of range");
            require(i == 0 || classes[i] > classes[i - 1], ErrorCode::invalid_argument,
                    "svm classes must be strictly ascending");
        }
        require(gamma > 0 && std::isfinite(gamma), ErrorCode::invalid_argument, "svm gamma must be > 0");
        require(C > 0, ErrorCode::invalid_argument, "svm C must be > 0");
        const std::size_t k = classes.size();
        require(pairs.size() == k * (k - 1) / 2, ErrorCode::invalid_argument, "svm head has wrong pair count");
        for (const auto& pr : pairs) {
            require(pr.support_vectors.rows() == pr.dual_coef.size(), ErrorCode::invalid_argument,
                    "support vector and coefficient counts differ");
            for (double a : pr.dual_coef)
                require(std::abs(a) <= C * (1 + 1e-9), ErrorCode::invalid_argument,
                        "dual coefficient violates box constraint");
            auto has = [&](int c) { return std::find(classes.begin(), classes.end(), c) != classes.end(); };
            require(has(pr.positive_class) && has(pr.negative_class) && pr.positive_class != pr.negative_class,
                    ErrorCode::invalid_argument, "svm pair references unknown class");
        }
    }

    friend bool operator==(const SvmHead&, const SvmHead&) = default;
};

inline double rbf_kernel(std::span<const double> a, std::span<const float> b, double gamma) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - static_cast<double>(b[i]);
        d2 += diff * diff;
    }
    return std::exp(-gamma * d2);
}

inline double svm_decision(const SvmPair& pair, double gamma, std::span<const float> x) {
    require(pair.support_vectors.rows() == 0 || pair.support_vectors.cols() == x.size(), ErrorCode::shape_mismatch,
            "feature length does not match support vectors");
    double f = pair.intercept;
    for (std::size_t i = 0; i < pair.dual_coef.size(); ++i)
        f += pair.dual_coef[i] * rbf_kernel(pair.support_vectors.row(i), x, gamma);
    return f;
}

inline double platt_probability(double decision, double a, double b) {
    // 1 / (1 + exp(a*f + b)), evaluated without overflow
    return sigmoid(-(a * decision + b));
}

/// Pairwise coupling (Wu, Lin & Weng, second method): minimise
///   sum_i sum_{j != i} (r_ji p_i - r_ij p_j)^2   subject to sum p = 1,
/// solved directly from the KKT system. r(i, j) estimates P(i | i or j).
inline std::vector<double> pairwise_coupling(const Matrix<double>& r) {
    const std::size_t k = r.rows();
    require(k >= 2 && r.cols() == k, ErrorCode::invalid_argument, "coupling needs a square k x k matrix, k >= 2");
    const std::size_t n = k + 1;
    Matrix<double> a(n, n + 1, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t j = 0; j < k; ++j) {
            if (j == t) continue;
            a(t, t) += r(j, t) * r(j, t);
            a(t, j) = -r(j, t) * r(t, j);
        }
        a(t, k) = 1.0;
        a(k, t) = 1.0;
    }
    a(k, n) = 1.0;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t row = col + 1; row < n; ++row)
            if (std::abs(a(row, col)) > std::abs(a(piv, col))) piv = row;
        require(std::abs(a(piv, col)) > 1e-300, ErrorCode::runtime_failure, "singular coupling system");
        if (piv != col)
            for (std::size_t c = 0; c <= n; ++c) std::swap(a(col, c), a(piv, c));
        for (std::size_t row = 0; row < n; ++row) {
            if (row == col) continue;
            const double f = a(row, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c <= n; ++c) a(row, c) -= f * a(col, c);
        }
    }
    std::vector<double> p(k);
    double sum = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
        p[t] = std::max(0.0, a(t, n) / a(t, t));
        sum += p[t];
    }
    for (auto& v : p) v /= sum;
    return p;
}

/// Pairwise probabilities are clipped away from 0 and 1 before coupling.
inline constexpr double kMinPairProbability = 1e-7;

inline ClassProbabilities svm_predict_proba(const SvmHead& head, std::span<const float> features) {
    const std::size_t k = head.classes.size();
    auto position = [&](int label) {
        return static_cast<std::size_t>(std::find(head.classes.begin(), head.classes.end(), label) -
                                        head.classes.begin());
    };
    Matrix<double> r(k, k, 0.0);
    for (const auto& pair : head.pairs) {
        const double f = svm_decision(pair, head.gamma, features);
        const double p = std::clamp(platt_probability(f, pair.platt_a, pair.platt_b), kMinPairProbability,
                                    1.0 - kMinPairProbability);
        const auto i = position(pair.positive_class);
        const auto j = position(pair.negative_class);
        r(i, j) = p;
        r(j, i) = 1.0 - p;
    }
    const auto p = pairwise_coupling(r);
    ClassProbabilities out;
    for (std::size_t i = 0; i < k; ++i) out.p[static_cast<std::size_t>(head.classes[i])] = p[i];
    return out;
}

inline ClassProbabilities svm_predict_proba(const SvmHead& head, const FeatureVector& features) {
    return svm_predict_proba(head, features.view());
}

/// Argmax; exact ties go to the worse-quality class.
inline QualityClass classify(const ClassProbabilities& probs) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
        if (probs.p[static_cast<std::size_t>(c)] >= probs.p[static_cast<std::size_t>(best)]) best = c;
    return static_cast<QualityClass>(best);
}

}  // namespace quickqual
