#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/matrix.hpp"
#include "quickqual/training/dataset.hpp"
#include "quickqual/training/logistic.hpp"
#include "quickqual/training/smo.hpp"

namespace quickqual {

struct SvmConfig {
    double C = 1.0;
    std::optional<double> gamma;  // unset: "scale" = 1 / (d * Var(X))
    double tolerance = 1e-3;
    int platt_folds = 5;
    bool probability = true;
    std::uint64_t seed = 0;
    std::size_t cache_bytes = 256u << 20;
};

/// 1 / (d * Var(X)) over every matrix entry; 1 when the variance is zero.
inline double gamma_scale(const Matrix<double>& x) {
    const auto& v = x.data();
    if (v.empty()) return 1.0;
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double a : v) var += (a - mean) * (a - mean);
    var /= static_cast<double>(v.size());
    return var > 0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
}

struct PlattParams {
    double a = 0.0;
    double b = 0.0;
};

/// Maximum-likelihood sigmoid P(y=1|f) = 1/(1+exp(a f + b)) with Platt's
/// smoothed targets; Newton's method with backtracking (Lin, Lin & Weng 2007).
inline PlattParams fit_platt(std::span<const double> dec, std::span<const int> labels) {
    require(dec.size() == labels.size() && !dec.empty(), ErrorCode::invalid_argument,
            "Platt fit needs matching, non-empty inputs");
    const std::size_t l = dec.size();
    double prior1 = 0, prior0 = 0;
    for (int y : labels) (y > 0 ? prior1 : prior0) += 1;

    constexpr int max_iter = 100;
    constexpr double min_step = 1e-10, sigma = 1e-12, eps = 1e-5;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);
    std::vector<double> t(l);
    for (std::size_t i = 0; i < l; ++i) t[i] = labels[i] > 0 ? hi : lo;

    double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    auto objective = [&](double aa, double bb) {
        double f = 0.0;
        for (std::size_t i = 0; i < l; ++i) {
            const double z = dec[i] * aa + bb;
            f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return f;
    };
    double fval = objective(a, b);

    for (int it = 0; it < max_iter; ++it) {
        double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < l; ++i) {
            const double z = dec[i] * a + b;
            double p, q;
            if (z >= 0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += dec[i] * dec[i] * d2;
            h22 += d2;
            h21 += dec[i] * d2;
            const double d1 = t[i] - p;
            g1 += dec[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < eps && std::abs(g2) < eps) break;

        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;

        double step = 1.0;
        while (step >= min_step) {
            const double na = a + step * da, nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 0.0001 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < min_step) break;
    }
    return {a, b};
}

namespace detail {

struct BinaryMachine {
    std::vector<std::size_t> support;  // row indices into the pair subset
    std::vector<double> coef;          // alpha_i * y_i
    double intercept = 0.0;
};

inline BinaryMachine train_binary(const Matrix<double>& x, std::span<const int> y, double gamma,
                                  const SvmConfig& cfg) {
    SmoConfig smo{cfg.C, cfg.tolerance, 0, cfg.cache_bytes};
    const auto res = solve_smo(x, y, gamma, smo);
    BinaryMachine m;
    for (std::size_t i = 0; i < res.alpha.size(); ++i)
        if (res.alpha[i] > 0) {
            m.support.push_back(i);
            m.coef.push_back(res.alpha[i] * y[i]);
        }
    m.intercept = -res.rho;
    return m;
}

inline double decision(const BinaryMachine& m, const Matrix<double>& train, std::span<const double> q, double gamma) {
    double f = m.intercept;
    for (std::size_t k = 0; k < m.support.size(); ++k) {
        const auto sv = train.row(m.support[k]);
        double d2 = 0.0;
        for (std::size_t c = 0; c < q.size(); ++c) {
            const double diff = sv[c] - q[c];
            d2 += diff * diff;
        }
        f += m.coef[k] * std::exp(-gamma * d2);
    }
    return f;
}

/// Fold permutation used by LIBSVM: a forward Fisher-Yates pass over a freshly
/// seeded 32-bit Mersenne Twister with Lemire's bounded draw.
inline std::vector<std::size_t> cv_permutation(std::size_t l, std::uint64_t seed) {
    std::mt19937 mt(static_cast<std::uint32_t>(seed));
    auto bounded = [&mt](std::uint32_t range) {
        std::uint32_t x = mt();
        std::uint64_t m = std::uint64_t{x} * range;
        auto lo = static_cast<std::uint32_t>(m);
        if (lo < range) {
            const std::uint32_t t = (0u - range) % range;
            while (lo < t) {
                x = mt();
                m = std::uint64_t{x} * range;
                lo = static_cast<std::uint32_t>(m);
            }
        }
        return static_cast<std::uint32_t>(m >> 32);
    };
    std::vector<std::size_t> perm(l);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < l; ++i)
        std::swap(perm[i], perm[i + bounded(static_cast<std::uint32_t>(l - i))]);
    return perm;
}

/// Held-out decision values from k-fold cross-validation, as LIBSVM computes
/// them before fitting the Platt sigmoid.
inline std::vector<double> cv_decision_values(const Matrix<double>& x, std::span<const int> y, double gamma,
                                              const SvmConfig& cfg) {
    const std::size_t l = x.rows();
    const auto folds = static_cast<std::size_t>(std::max(2, cfg.platt_folds));
    const auto perm = cv_permutation(l, cfg.seed);

    std::vector<double> dec(l, 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t begin = f * l / folds, end = (f + 1) * l / folds;
        std::vector<std::size_t> train_idx;
        for (std::size_t k = 0; k < l; ++k)
            if (k < begin || k >= end) train_idx.push_back(perm[k]);
        std::vector<int> ty;
        for (auto i : train_idx) ty.push_back(y[i]);
        const bool has_pos = std::find(ty.begin(), ty.end(), 1) != ty.end();
        const bool has_neg = std::find(ty.begin(), ty.end(), -1) != ty.end();
        if (has_pos && has_neg) {
            const Matrix<double> tx = x.select_rows(train_idx);
            const auto m = train_binary(tx, ty, gamma, cfg);
            for (std::size_t k = begin; k < end; ++k) dec[perm[k]] = decision(m, tx, x.row(perm[k]), gamma);
        } else {
            const double v = has_pos ? 1.0 : has_neg ? -1.0 : 0.0;
            for (std::size_t k = begin; k < end; ++k) dec[perm[k]] = v;
        }
    }
    return dec;
}

}  // namespace detail

/// One-vs-one RBF SVM over the classes present in the data, with per-pair
/// Platt calibration on cross-validated decision values.
inline SvmHead fit_svm_multiclass(const Matrix<double>& x, std::span<const int> labels, const SvmConfig& cfg = {}) {
    require(x.rows() == labels.size(), ErrorCode::shape_mismatch, "feature rows and labels differ");
    require(cfg.C > 0, ErrorCode::invalid_argument, "C must be > 0");
    std::vector<int> classes;
    for (int l : labels) {
        require(l >= 0 && l < kNumClasses, ErrorCode::invalid_argument, "label outside {0, 1, 2}");
        if (std::find(classes.begin(), classes.end(), l) == classes.end()) classes.push_back(l);
    }
    std::sort(classes.begin(), classes.end());
    require(classes.size() >= 2, ErrorCode::single_class, "SVM training needs at least two classes");

    SvmHead head;
    head.classes = classes;
    head.C = cfg.C;
    head.gamma = cfg.gamma ? *cfg.gamma : gamma_scale(x);
    require(head.gamma > 0, ErrorCode::invalid_argument, "gamma must be > 0");

    for (std::size_t a = 0; a < classes.size(); ++a) {
        for (std::size_t b = a + 1; b < classes.size(); ++b) {
            std::vector<std::size_t> idx;
            std::vector<int> y;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] == classes[a]) {
                    idx.push_back(i);
                    y.push_back(1);
                } else if (labels[i] == classes[b]) {
                    idx.push_back(i);
                    y.push_back(-1);
                }
            }
            const Matrix<double> px = x.select_rows(idx);

            SvmPair pair;
            pair.positive_class = classes[a];
            pair.negative_class = classes[b];
            if (cfg.probability) {
                const auto dec = detail::cv_decision_values(px, y, head.gamma, cfg);
                const auto platt = fit_platt(dec, y);
                pair.platt_a = platt.a;
                pair.platt_b = platt.b;
            }
            const auto m = detail::train_binary(px, y, head.gamma, cfg);
            pair.support_vectors = px.select_rows(m.support);
            pair.dual_coef = m.coef;
            pair.intercept = m.intercept;
            head.pairs.push_back(std::move(pair));
        }
    }
    return head;
}

inline SvmHead fit_svm_multiclass(const FeatureDataset& data, const SvmConfig& cfg = {}) {
    data.validate();
    return fit_svm_multiclass(to_double(data.features), data.labels, cfg);
}

}  // namespace quickqual
