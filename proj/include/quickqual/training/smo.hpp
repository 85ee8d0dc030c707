#pragma once

// Binary C-SVC with an RBF kernel, solved by SMO using second-order working
// set selection (Fan, Chen & Lin 2005), the scheme used by LIBSVM.
//
//   min_a  0.5 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K_ij

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <list>
#include <span>
#include <string>
#include <vector>

#include "quickqual/error.hpp"
#include "quickqual/matrix.hpp"

namespace quickqual {

/// RBF kernel rows over a fixed sample set with an LRU row cache.
class RbfKernelRows {
public:
    RbfKernelRows(const Matrix<double>& x, double gamma, std::size_t cache_bytes)
        : x_(x), gamma_(gamma), sq_(x.rows()), slot_(x.rows(), lru_.end()) {
        for (std::size_t i = 0; i < x.rows(); ++i) sq_[i] = dot(x.row(i), x.row(i));
        const std::size_t row_bytes = std::max<std::size_t>(1, x.rows()) * sizeof(double);
        capacity_ = std::max<std::size_t>(2, cache_bytes / row_bytes);
    }

    [[nodiscard]] std::size_t size() const noexcept { return x_.rows(); }

    double operator()(std::size_t i, std::size_t j) const {
        return std::exp(-gamma_ * std::max(0.0, sq_[i] + sq_[j] - 2.0 * dot(x_.row(i), x_.row(j))));
    }

    /// Full kernel row i; the reference stays valid until the next call.
    const std::vector<double>& row(std::size_t i) {
        if (slot_[i] != lru_.end()) {
            lru_.splice(lru_.begin(), lru_, slot_[i]);
            return slot_[i]->values;
        }
        if (lru_.size() >= capacity_) {
            slot_[lru_.back().index] = lru_.end();
            lru_.pop_back();
        }
        lru_.push_front({i, std::vector<double>(x_.rows())});
        slot_[i] = lru_.begin();
        auto& values = lru_.front().values;
        for (std::size_t j = 0; j < x_.rows(); ++j) values[j] = (*this)(i, j);
        return values;
    }

private:
    struct Entry {
        std::size_t index;
        std::vector<double> values;
    };

    static double dot(std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
        return s;
    }

    const Matrix<double>& x_;
    double gamma_;
    std::vector<double> sq_;
    std::size_t capacity_;
    std::list<Entry> lru_;
    std::vector<std::list<Entry>::iterator> slot_;
};

struct SmoConfig {
    double C = 1.0;
    double tolerance = 1e-3;  // stop when max KKT violation m(a) - M(a) < tolerance
    long long max_iterations = 0;  // 0: max(10^7, 100 n)
    std::size_t cache_bytes = 256u << 20;
};

struct SmoResult {
    std::vector<double> alpha;
    double rho = 0.0;  // decision f(x) = sum alpha_i y_i K(x_i, x) - rho
    long long iterations = 0;
    double gap = 0.0;  // final m(a) - M(a)
};

/// y must hold +1 / -1 and contain both signs.
inline SmoResult solve_smo(const Matrix<double>& x, std::span<const int> y, double gamma, const SmoConfig& cfg) {
    const std::size_t n = x.rows();
    require(n == y.size(), ErrorCode::shape_mismatch, "sample and label counts differ");
    require(cfg.C > 0 && cfg.tolerance > 0, ErrorCode::invalid_argument, "SMO needs C > 0 and tolerance > 0");
    for (int v : y) require(v == 1 || v == -1, ErrorCode::invalid_argument, "SMO labels must be +1/-1");
    require(std::find(y.begin(), y.end(), 1) != y.end() && std::find(y.begin(), y.end(), -1) != y.end(),
            ErrorCode::single_class, "SMO needs samples of both classes");

    constexpr double tau = 1e-12;
    const double C = cfg.C;
    const long long max_iter =
        cfg.max_iterations > 0 ? cfg.max_iterations : std::max<long long>(10000000, 100 * static_cast<long long>(n));

    RbfKernelRows kernel(x, gamma, cfg.cache_bytes);
    std::vector<double> alpha(n, 0.0), grad(n, -1.0), qd(n);
    for (std::size_t i = 0; i < n; ++i) qd[i] = kernel(i, i);

    auto up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0); };
    auto low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < C); };

    SmoResult res;
    for (;;) {
        // i: maximal violating index in I_up
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t)
            if (up(t) && -y[t] * grad[t] >= gmax) {
                gmax = -y[t] * grad[t];
                i = t;
            }
        double gmin = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t)
            if (low(t)) gmin = std::min(gmin, -y[t] * grad[t]);
        res.gap = gmax - gmin;
        if (i == n || res.gap < cfg.tolerance) break;
        if (res.iterations >= max_iter)
            fail(ErrorCode::non_convergence,
                 "SMO reached " + std::to_string(max_iter) + " iterations (gap " + std::to_string(res.gap) + ")");

        // j: second-order selection over I_low
        const auto& ki = kernel.row(i);
        std::size_t j = n;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < n; ++t) {
            if (!low(t)) continue;
            const double b = gmax + y[t] * grad[t];
            if (b <= 0) continue;
            double a = qd[i] + qd[t] - 2.0 * ki[t];
            if (a <= 0) a = tau;
            const double obj = -(b * b) / a;
            if (obj <= best) {
                best = obj;
                j = t;
            }
        }
        if (j == n) break;
        ++res.iterations;

        const std::vector<double> ki_copy = ki;
        const auto& kj = kernel.row(j);
        const double old_ai = alpha[i], old_aj = alpha[j];
        if (y[i] != y[j]) {
            double quad = qd[i] + qd[j] - 2.0 * ki_copy[j];
            if (quad <= 0) quad = tau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = qd[i] + qd[j] - 2.0 * ki_copy[j];
            if (quad <= 0) quad = tau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0) {
                alpha[j] = 0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = sum;
            }
        }

        const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
        for (std::size_t t = 0; t < n; ++t)
            grad[t] += y[t] * (y[i] * ki_copy[t] * dai + y[j] * kj[t] * daj);
    }

    // rho: mean over free vectors, else the midpoint of the feasible interval
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (alpha[t] >= C) {
            if (y[t] == -1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0) {
            if (y[t] == 1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    res.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
    res.alpha = std::move(alpha);
    return res;
}

}  // namespace quickqual
