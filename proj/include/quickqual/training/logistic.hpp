#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/heads.hpp"
#include "quickqual/matrix.hpp"

namespace quickqual {

enum class Penalty { none, l1, l2 };

inline Penalty parse_penalty(const std::string& s) {
    if (s == "none") return Penalty::none;
    if (s == "l1") return Penalty::l1;
    if (s == "l2") return Penalty::l2;
    fail(ErrorCode::invalid_argument, "unknown penalty '" + s + "'");
}

struct LogisticConfig {
    Penalty penalty = Penalty::l2;
    double C = 1.0;            // inverse regularisation strength
    double tolerance = 1e-6;   // max-norm of the optimality residual
    int max_iterations = 200000;

    void validate() const {
        require(C > 0, ErrorCode::invalid_argument, "C must be > 0");
        require(tolerance > 0, ErrorCode::invalid_argument, "tolerance must be > 0");
        require(max_iterations > 0, ErrorCode::invalid_argument, "max_iterations must be > 0");
    }
};

struct LogisticFit {
    LinearHead head;     // indices 0..d-1, one weight per column
    int iterations = 0;
    double residual = 0.0;
    double objective = 0.0;
};

inline Matrix<double> to_double(const Matrix<float>& m) {
    return {m.rows(), m.cols(), std::vector<double>(m.data().begin(), m.data().end())};
}

/// Objective and gradient of
///   (1/n) sum_i [softplus(z_i) - t_i z_i] + penalty(w) / (C n),   z = Xw + b
/// over parameters theta = (w_0 .. w_{d-1}, b). The L1 term is excluded from
/// the smooth part and handled by its proximal operator.
class SoftTargetLoss {
public:
    SoftTargetLoss(const Matrix<double>& x, std::span<const double> t, const LogisticConfig& cfg)
        : x_(x), t_(t), cfg_(cfg), n_(static_cast<double>(x.rows())) {}

    [[nodiscard]] std::size_t dim() const noexcept { return x_.cols() + 1; }

    /// Smooth part only; writes the gradient into `grad` when non-empty.
    double smooth(std::span<const double> theta, std::span<double> grad) const {
        const std::size_t d = x_.cols();
        const double bias = theta[d];
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (std::size_t i = 0; i < x_.rows(); ++i) {
            const auto row = x_.row(i);
            double z = bias;
            for (std::size_t j = 0; j < d; ++j) z += row[j] * theta[j];
            loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - t_[i] * z;
            if (!grad.empty()) {
                const double r = sigmoid(z) - t_[i];
                for (std::size_t j = 0; j < d; ++j) grad[j] += r * row[j];
                grad[d] += r;
            }
        }
        loss /= n_;
        if (!grad.empty())
            for (auto& g : grad) g /= n_;
        if (cfg_.penalty == Penalty::l2) {
            const double lam = 1.0 / (cfg_.C * n_);
            for (std::size_t j = 0; j < d; ++j) {
                loss += 0.5 * lam * theta[j] * theta[j];
                if (!grad.empty()) grad[j] += lam * theta[j];
            }
        }
        return loss;
    }

    [[nodiscard]] double l1_weight() const noexcept {
        return cfg_.penalty == Penalty::l1 ? 1.0 / (cfg_.C * n_) : 0.0;
    }

    /// Full objective including the L1 term.
    double objective(std::span<const double> theta) const {
        double f = smooth(theta, {});
        const double lam = l1_weight();
        for (std::size_t j = 0; j + 1 < theta.size(); ++j) f += lam * std::abs(theta[j]);
        return f;
    }

    /// Max-norm of the minimum-norm subgradient; zero exactly at the optimum.
    double residual(std::span<const double> theta, std::span<const double> grad) const {
        const double lam = l1_weight();
        double r = 0.0;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            double v = grad[j];
            if (lam > 0 && j + 1 < theta.size()) {
                if (theta[j] > 0) v += lam;
                else if (theta[j] < 0) v -= lam;
                else v = std::max(0.0, std::abs(v) - lam);
            }
            r = std::max(r, std::abs(v));
        }
        return r;
    }

    /// Soft-threshold the weights (not the bias) by step * lambda.
    void prox(std::span<double> theta, double step) const {
        const double thr = step * l1_weight();
        if (thr == 0.0) return;
        for (std::size_t j = 0; j + 1 < theta.size(); ++j) {
            const double a = std::abs(theta[j]) - thr;
            theta[j] = a > 0 ? std::copysign(a, theta[j]) : 0.0;
        }
    }

    /// Power-iteration estimate of the smooth part's Lipschitz constant.
    [[nodiscard]] double lipschitz_estimate() const {
        const std::size_t d = x_.cols();
        std::vector<double> v(d + 1, 1.0), w(d + 1);
        double lambda = 1.0;
        for (int it = 0; it < 30; ++it) {
            std::fill(w.begin(), w.end(), 0.0);
            for (std::size_t i = 0; i < x_.rows(); ++i) {
                const auto row = x_.row(i);
                double z = v[d];
                for (std::size_t j = 0; j < d; ++j) z += row[j] * v[j];
                for (std::size_t j = 0; j < d; ++j) w[j] += z * row[j];
                w[d] += z;
            }
            double norm = 0.0;
            for (double a : w) norm += a * a;
            norm = std::sqrt(norm);
            if (norm == 0.0) break;
            lambda = norm;
            for (std::size_t j = 0; j <= d; ++j) v[j] = w[j] / norm;
        }
        double l = 0.25 * lambda / n_;
        if (cfg_.penalty == Penalty::l2) l += 1.0 / (cfg_.C * n_);
        return std::max(l, 1e-12);
    }

private:
    const Matrix<double>& x_;
    std::span<const double> t_;
    LogisticConfig cfg_;
    double n_;
};

/// Soft-target logistic regression by accelerated proximal gradient (FISTA
/// with backtracking and gradient-based restart). Deterministic.
inline LogisticFit fit_logistic_detailed(const Matrix<double>& x, std::span<const double> t,
                                         const LogisticConfig& cfg = {}) {
    cfg.validate();
    require(!x.empty(), ErrorCode::invalid_argument, "logistic fit needs at least one sample");
    require(x.rows() == t.size(), ErrorCode::shape_mismatch, "feature rows and target count differ");
    for (double v : t) require(v >= 0.0 && v <= 1.0, ErrorCode::invalid_argument, "targets must lie in [0, 1]");

    const std::size_t d = x.cols();
    LogisticFit fit;
    fit.head.indices.resize(d);
    std::iota(fit.head.indices.begin(), fit.head.indices.end(), std::size_t{0});
    fit.head.weights.assign(d, 0.0);

    // Constant targets: every weight is zero at the optimum and the bias is
    // the logit of the target (clipped so hard 0/1 stay finite).
    if (std::all_of(t.begin(), t.end(), [&](double v) { return v == t[0]; })) {
        const double p = std::clamp(t[0], 1e-15, 1.0 - 1e-15);
        fit.head.bias = t[0] == 0.5 ? 0.0 : std::log(p / (1.0 - p));
        return fit;
    }

    SoftTargetLoss loss(x, t, cfg);
    const std::size_t m = d + 1;
    std::vector<double> xk(m, 0.0), xn(m), y(m, 0.0), gy(m), gn(m), diff(m);
    double L = loss.lipschitz_estimate();
    double tk = 1.0;

    for (int it = 1; it <= cfg.max_iterations; ++it) {
        const double fy = loss.smooth(y, gy);
        double fn;
        for (;;) {
            for (std::size_t j = 0; j < m; ++j) xn[j] = y[j] - gy[j] / L;
            loss.prox(xn, 1.0 / L);
            double lin = 0.0, quad = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                diff[j] = xn[j] - y[j];
                lin += gy[j] * diff[j];
                quad += diff[j] * diff[j];
            }
            fn = loss.smooth(xn, gn);
            if (fn <= fy + lin + 0.5 * L * quad + 1e-15 * std::abs(fy)) break;
            L *= 2.0;
        }

        fit.residual = loss.residual(xn, gn);
        if (fit.residual < cfg.tolerance) {
            fit.iterations = it;
            std::copy_n(xn.begin(), d, fit.head.weights.begin());
            fit.head.bias = xn[d];
            fit.objective = loss.objective(xn);
            return fit;
        }

        double restart = 0.0;
        for (std::size_t j = 0; j < m; ++j) restart += (y[j] - xn[j]) * (xn[j] - xk[j]);
        if (restart > 0) {
            tk = 1.0;
            y = xn;
        } else {
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            const double beta = (tk - 1.0) / tn;
            for (std::size_t j = 0; j < m; ++j) y[j] = xn[j] + beta * (xn[j] - xk[j]);
            tk = tn;
        }
        xk = xn;
    }
    fail(ErrorCode::non_convergence, "logistic fit did not converge in " + std::to_string(cfg.max_iterations) +
                                         " iterations (residual " + std::to_string(fit.residual) + ")");
}

inline LinearHead fit_logistic(const Matrix<double>& x, std::span<const double> t, const LogisticConfig& cfg = {}) {
    return fit_logistic_detailed(x, t, cfg).head;
}

/// Round-half-to-even of every weight and the bias to `decimals` places.
inline LinearHead round_params(const LinearHead& head, int decimals = 2) {
    head.validate();
    const double scale = std::pow(10.0, decimals);
    auto round_even = [&](double v) {
        const double s = v * scale;
        double r = std::round(s);
        if (std::abs(s - std::trunc(s)) == 0.5) r = 2.0 * std::round(s / 2.0);
        return r / scale;
    };
    LinearHead out = head;
    for (auto& w : out.weights) w = round_even(w);
    out.bias = round_even(out.bias);
    return out;
}

}  // namespace quickqual
