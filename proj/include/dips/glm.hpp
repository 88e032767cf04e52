#pragma once

// Working-model fits: ridge initial estimates, adaptive-LASSO by coordinate
// descent inside an IRLS loop, lambda tuning by an information criterion, and
// the unpenalized refit on the selected support.
//
// Every fit minimizes
//     (1/n) sum_i w_i * nll_i(b) + lambda * sum_j |b_j| / weight_j + l2/2 * |b|^2
// over an unpenalized intercept (plus the treatment indicator for the
// main-effects outcome model) and penalized slopes. Observation weights w are
// rescaled to mean one so that multiplying them by a constant changes nothing.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dips/data.hpp"
#include "dips/errors.hpp"
#include "dips/stats.hpp"

namespace dips {

enum class Family { kGaussian, kBinomial };

/// Which column of the dataset is the response and which unpenalized columns
/// enter alongside the intercept.
enum class Response {
    kTreatment,         // T ~ X                      (propensity model)
    kOutcome,           // Y ~ T + X, T unpenalized   (main-effects outcome model)
    kOutcomeWithinArm,  // Y ~ X on an arm subset     (arm-specific slopes)
};

enum class Criterion { kEric, kBic };

inline const char* to_string(Family f) { return f == Family::kGaussian ? "gaussian" : "binomial"; }

struct TracePoint {
    double lambda;
    double criterion;
    int support_size;
};

struct GlmFit {
    Family family = Family::kGaussian;
    double intercept = 0;
    std::optional<double> treatment_coef;  // beta_1 of the main-effects model
    Eigen::VectorXd coef;                  // slopes, standardized scale
    std::vector<Eigen::Index> support;
    double lambda = 0;
    std::vector<TracePoint> trace;
    bool refit = false;
    bool converged = true;
    std::vector<double> objective_trace;
    std::vector<std::string> warnings;

    /// Linear predictor for every row of x; `arm` adds the treatment effect.
    Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x, int arm = 0) const {
        Eigen::VectorXd eta = x * coef;
        eta.array() += intercept + (treatment_coef ? *treatment_coef * arm : 0.0);
        return eta;
    }

    /// Inverse link applied to the linear predictor.
    Eigen::VectorXd mean(const Eigen::MatrixXd& x, int arm = 0) const {
        Eigen::VectorXd eta = linear_predictor(x, arm);
        if (family == Family::kBinomial) eta = eta.unaryExpr([](double e) { return stats::expit(e); });
        return eta;
    }
};

struct RidgeFit {
    double intercept = 0;
    std::optional<double> treatment_coef;
    Eigen::VectorXd coef;
    std::vector<double> objective_trace;
};

struct GlmOptions {
    double tolerance = 1e-9;        // max coefficient change between IRLS steps
    double inner_tolerance = 1e-11; // max coefficient change between CD sweeps
    int max_outer = 100;
    int max_sweeps = 1000;
    Criterion criterion = Criterion::kEric;
    double eric_nu = 0.5;
    double stabilizing_ridge = 1e-6;
};

namespace detail {

/// Design [free columns | penalized columns] with response and weights.
struct GlmProblem {
    Eigen::MatrixXd a;
    Eigen::Index n_free = 1;
    Eigen::VectorXd y;
    Eigen::VectorXd w;
    Family family = Family::kGaussian;

    Eigen::Index n() const { return a.rows(); }
    Eigen::Index m() const { return a.cols(); }
    Eigen::Index n_penalized() const { return a.cols() - n_free; }
};

struct Penalty {
    double l1 = 0;
    Eigen::VectorXd factor;  // per penalized column; +inf pins the coefficient at 0
    double l2 = 0;
};

struct SolveResult {
    Eigen::VectorXd beta;
    bool converged = false;
    int iterations = 0;
    double objective = 0;
    std::vector<double> objective_trace;
};

inline Eigen::VectorXd normalized_weights(const Eigen::VectorXd* w, Eigen::Index n) {
    if (!w) return Eigen::VectorXd::Ones(n);
    if (w->size() != n) throw EstimationError("observation weight vector has wrong length");
    const double total = w->sum();
    if (!(total > 0) || !std::isfinite(total))
        throw EstimationError("observation weights must have a positive finite sum");
    return *w / (total / static_cast<double>(n));
}

inline GlmProblem make_problem(const Dataset& d, Response role, Family family,
                               const Eigen::VectorXd* obs_weights) {
    GlmProblem pr;
    pr.family = family;
    const Eigen::Index n = d.n();
    pr.n_free = role == Response::kOutcome ? 2 : 1;
    pr.a.resize(n, pr.n_free + d.p());
    pr.a.col(0).setOnes();
    if (role == Response::kOutcome) pr.a.col(1) = d.t.cast<double>();
    pr.a.rightCols(d.p()) = d.x;
    pr.y = role == Response::kTreatment ? Eigen::VectorXd(d.t.cast<double>()) : d.y;
    pr.w = normalized_weights(obs_weights, n);
    if (family == Family::kBinomial)
        for (Eigen::Index i = 0; i < n; ++i)
            if (pr.y[i] != 0.0 && pr.y[i] != 1.0)
                throw EstimationError("binomial family requires a 0/1 response");
    return pr;
}

inline double nll(const GlmProblem& pr, const Eigen::VectorXd& eta) {
    double s = 0;
    if (pr.family == Family::kGaussian) {
        for (Eigen::Index i = 0; i < pr.n(); ++i) {
            const double r = pr.y[i] - eta[i];
            s += pr.w[i] * 0.5 * r * r;
        }
    } else {
        for (Eigen::Index i = 0; i < pr.n(); ++i) {
            const double e = eta[i];
            const double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
            s += pr.w[i] * (log1pexp - pr.y[i] * e);
        }
    }
    return s / static_cast<double>(pr.n());
}

inline double penalty_value(const GlmProblem& pr, const Penalty& pen, const Eigen::VectorXd& beta) {
    double s = 0;
    for (Eigen::Index j = 0; j < pr.n_penalized(); ++j) {
        const double b = beta[pr.n_free + j];
        if (b == 0.0) continue;
        s += pen.l1 * pen.factor[j] * std::abs(b) + 0.5 * pen.l2 * b * b;
    }
    return s;
}

inline Eigen::VectorXd fitted_mean(const GlmProblem& pr, const Eigen::VectorXd& eta) {
    if (pr.family == Family::kGaussian) return eta;
    return eta.unaryExpr([](double e) { return stats::expit(e); });
}

/// (1/n) A^T W (y - mu): the log-likelihood gradient.
inline Eigen::VectorXd score(const GlmProblem& pr, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd mu = fitted_mean(pr, pr.a * beta);
    return pr.a.transpose() * (pr.w.array() * (pr.y - mu).array()).matrix() /
           static_cast<double>(pr.n());
}

inline double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

/// Coordinate descent on the quadratic model L(b0) - g'(b - b0) + 1/2 (b - b0)' H (b - b0)
/// plus the penalty. Returns the number of sweeps used (max_sweeps + 1 if not converged).
inline int cd_quadratic(const GlmProblem& pr, const Penalty& pen, const Eigen::MatrixXd& h,
                        const Eigen::VectorXd& g, const Eigen::VectorXd& b0, Eigen::VectorXd& b,
                        const GlmOptions& opt, std::vector<double>* sweep_trace, double base) {
    const Eigen::Index m = pr.m();
    Eigen::VectorXd hd = h * (b - b0);
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        double max_change = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const bool free = j < pr.n_free;
            const double fac = free ? 0.0 : pen.factor[j - pr.n_free];
            if (!free && std::isinf(fac)) continue;
            const double denom = h(j, j) + (free ? 0.0 : pen.l2);
            if (!(denom > 0)) continue;
            const double z = g[j] - hd[j] + h(j, j) * b[j];
            const double updated = free ? z / denom : soft_threshold(z, pen.l1 * fac) / denom;
            const double delta = updated - b[j];
            if (delta != 0.0) {
                b[j] = updated;
                hd += h.col(j) * delta;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (sweep_trace) {
            const Eigen::VectorXd d = b - b0;
            sweep_trace->push_back(base - g.dot(d) + 0.5 * d.dot(hd) + penalty_value(pr, pen, b));
        }
        if (max_change < opt.inner_tolerance) return sweep;
    }
    return opt.max_sweeps + 1;
}

/// Penalized GLM fit by IRLS (outer) + covariance-update coordinate descent
/// (inner), with step halving so the objective never increases.
inline SolveResult solve(const GlmProblem& pr, const Penalty& pen, Eigen::VectorXd beta,
                         const GlmOptions& opt) {
    SolveResult res;
    const double inv_n = 1.0 / static_cast<double>(pr.n());
    for (Eigen::Index j = 0; j < pr.n_penalized(); ++j)
        if (std::isinf(pen.factor[j])) beta[pr.n_free + j] = 0.0;

    Eigen::VectorXd eta = pr.a * beta;
    double obj = nll(pr, eta) + penalty_value(pr, pen, beta);
    res.objective_trace.push_back(obj);

    if (pr.family == Family::kGaussian) {
        const Eigen::MatrixXd h = pr.a.transpose() * pr.w.asDiagonal() * pr.a * inv_n;
        const Eigen::VectorXd g =
            pr.a.transpose() * (pr.w.array() * (pr.y - eta).array()).matrix() * inv_n;
        const Eigen::VectorXd b0 = beta;
        const double base = nll(pr, eta);
        const int sweeps = cd_quadratic(pr, pen, h, g, b0, beta, opt, &res.objective_trace, base);
        res.iterations = sweeps;
        res.converged = sweeps <= opt.max_sweeps;
        res.beta = beta;
        res.objective = nll(pr, pr.a * beta) + penalty_value(pr, pen, beta);
        return res;
    }

    for (int outer = 1; outer <= opt.max_outer; ++outer) {
        const Eigen::VectorXd mu = fitted_mean(pr, eta);
        Eigen::VectorXd v(pr.n());
        for (Eigen::Index i = 0; i < pr.n(); ++i)
            v[i] = pr.w[i] * std::max(mu[i] * (1.0 - mu[i]), 1e-5);
        const Eigen::MatrixXd h = pr.a.transpose() * v.asDiagonal() * pr.a * inv_n;
        const Eigen::VectorXd g =
            pr.a.transpose() * (pr.w.array() * (pr.y - mu).array()).matrix() * inv_n;
        Eigen::VectorXd proposal = beta;
        cd_quadratic(pr, pen, h, g, beta, proposal, opt, nullptr, 0.0);

        Eigen::VectorXd step = proposal - beta;
        Eigen::VectorXd next = proposal;
        Eigen::VectorXd next_eta = pr.a * next;
        double next_obj = nll(pr, next_eta) + penalty_value(pr, pen, next);
        for (int halving = 0; halving < 40 && next_obj > obj + 1e-14 * std::abs(obj); ++halving) {
            step *= 0.5;
            next = beta + step;
            next_eta = pr.a * next;
            next_obj = nll(pr, next_eta) + penalty_value(pr, pen, next);
        }
        if (next_obj > obj) {  // no descent direction left at machine precision
            res.converged = step.cwiseAbs().maxCoeff() < 1e3 * opt.tolerance;
            res.iterations = outer;
            break;
        }
        const double change = step.cwiseAbs().maxCoeff();
        beta = next;
        eta = next_eta;
        obj = next_obj;
        res.objective_trace.push_back(obj);
        res.iterations = outer;
        if (change < opt.tolerance) {
            res.converged = true;
            break;
        }
    }
    res.beta = beta;
    res.objective = obj;
    return res;
}

/// Unpenalized (or tiny-ridge) MLE by Newton's method on the given columns.
inline SolveResult newton(const GlmProblem& pr, double l2, const GlmOptions& opt) {
    SolveResult res;
    const Eigen::Index m = pr.m();
    const double inv_n = 1.0 / static_cast<double>(pr.n());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd ridge = Eigen::VectorXd::Zero(m);
    ridge.tail(pr.n_penalized()).setConstant(l2);
    auto objective = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& eta) {
        return nll(pr, eta) + 0.5 * (ridge.array() * b.array().square()).sum();
    };
    Eigen::VectorXd eta = pr.a * beta;
    double obj = objective(beta, eta);
    const int max_iter = pr.family == Family::kGaussian ? 3 : opt.max_outer;
    for (int it = 1; it <= max_iter; ++it) {
        const Eigen::VectorXd mu = fitted_mean(pr, eta);
        Eigen::VectorXd v = pr.w;
        if (pr.family == Family::kBinomial)
            for (Eigen::Index i = 0; i < pr.n(); ++i) v[i] *= mu[i] * (1.0 - mu[i]);
        Eigen::MatrixXd h = pr.a.transpose() * v.asDiagonal() * pr.a * inv_n;
        h.diagonal() += ridge;
        const Eigen::VectorXd g =
            pr.a.transpose() * (pr.w.array() * (pr.y - mu).array()).matrix() * inv_n -
            (ridge.array() * beta.array()).matrix();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
        Eigen::VectorXd step = ldlt.solve(g);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) break;
        Eigen::VectorXd next = beta + step;
        Eigen::VectorXd next_eta = pr.a * next;
        double next_obj = objective(next, next_eta);
        for (int halving = 0; halving < 40 && !(next_obj <= obj + 1e-14 * std::abs(obj)); ++halving) {
            step *= 0.5;
            next = beta + step;
            next_eta = pr.a * next;
            next_obj = objective(next, next_eta);
        }
        const double change = step.cwiseAbs().maxCoeff();
        if (next_obj <= obj + 1e-14 * std::abs(obj)) {
            beta = next;
            eta = next_eta;
            obj = next_obj;
        }
        res.objective_trace.push_back(obj);
        res.iterations = it;
        if (change < 1e-10 || (pr.family == Family::kGaussian && it >= 2)) {
            res.converged = true;
            break;
        }
    }
    if (pr.family == Family::kBinomial && eta.cwiseAbs().maxCoeff() > 30.0) res.converged = false;
    res.beta = beta;
    res.objective = obj;
    return res;
}

inline GlmFit to_fit(const GlmProblem& pr, const Eigen::VectorXd& beta,
                     const std::vector<Eigen::Index>* columns, Eigen::Index p) {
    GlmFit fit;
    fit.family = pr.family;
    fit.intercept = beta[0];
    if (pr.n_free == 2) fit.treatment_coef = beta[1];
    fit.coef = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < pr.n_penalized(); ++j) {
        const Eigen::Index col = columns ? (*columns)[static_cast<std::size_t>(j)] : j;
        const double b = beta[pr.n_free + j];
        fit.coef[col] = b;
    }
    for (Eigen::Index j = 0; j < p; ++j)
        if (fit.coef[j] != 0.0) fit.support.push_back(j);
    return fit;
}

inline GlmProblem restrict_columns(const GlmProblem& full, const std::vector<Eigen::Index>& support) {
    GlmProblem pr;
    pr.family = full.family;
    pr.n_free = full.n_free;
    pr.y = full.y;
    pr.w = full.w;
    pr.a.resize(full.n(), full.n_free + static_cast<Eigen::Index>(support.size()));
    pr.a.leftCols(full.n_free) = full.a.leftCols(full.n_free);
    for (std::size_t j = 0; j < support.size(); ++j)
        pr.a.col(full.n_free + static_cast<Eigen::Index>(j)) = full.a.col(full.n_free + support[j]);
    return pr;
}

/// -2 log-likelihood of fitted values; gaussian dispersion profiled out.
inline double minus_two_loglik(const GlmProblem& pr, const Eigen::VectorXd& eta) {
    const double wsum = pr.w.sum();
    if (pr.family == Family::kGaussian) {
        double rss = 0;
        for (Eigen::Index i = 0; i < pr.n(); ++i) rss += pr.w[i] * (pr.y[i] - eta[i]) * (pr.y[i] - eta[i]);
        const double sigma2 = std::max(rss / wsum, std::numeric_limits<double>::min());
        return wsum * (std::log(2.0 * 3.14159265358979323846 * sigma2) + 1.0);
    }
    return 2.0 * nll(pr, eta) * static_cast<double>(pr.n());
}

}  // namespace detail

/// |ridge coefficient|^gamma, the per-coefficient divisor of the L1 penalty.
inline Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& ridge_coef, double gamma) {
    if (gamma < 0) throw ConfigError("gamma must be non-negative");
    return ridge_coef.unaryExpr([gamma](double c) { return std::pow(std::abs(c), gamma); });
}

/// Ridge fit with unpenalized intercept (and treatment column for kOutcome).
inline RidgeFit fit_ridge(const Dataset& d, Response role, Family family, double ridge_lambda,
                          const Eigen::VectorXd* obs_weights = nullptr,
                          const GlmOptions& opt = {}) {
    if (!(ridge_lambda > 0)) throw ConfigError("ridge_lambda must be positive");
    const auto pr = detail::make_problem(d, role, family, obs_weights);
    detail::Penalty pen{0.0, Eigen::VectorXd::Ones(d.p()), ridge_lambda};
    auto res = detail::solve(pr, pen, Eigen::VectorXd::Zero(pr.m()), opt);
    if (!res.converged)
        throw SolverError("ridge fit did not converge in " + std::to_string(res.iterations) +
                              " iterations",
                          res.objective);
    RidgeFit out;
    out.intercept = res.beta[0];
    if (pr.n_free == 2) out.treatment_coef = res.beta[1];
    out.coef = res.beta.tail(d.p());
    out.objective_trace = std::move(res.objective_trace);
    return out;
}

namespace detail {

inline Penalty adaptive_penalty(const Eigen::VectorXd& weights, double lambda) {
    if (lambda < 0) throw ConfigError("lambda must be non-negative");
    Eigen::VectorXd factor(weights.size());
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
        if (weights[j] < 0 || std::isnan(weights[j]))
            throw ConfigError("adaptive weights must be non-negative");
        factor[j] = weights[j] > 0 ? 1.0 / weights[j] : std::numeric_limits<double>::infinity();
    }
    return {lambda, std::move(factor), 0.0};
}

inline GlmFit fit_adaptive(const GlmProblem& pr, const Eigen::VectorXd& weights, double lambda,
                           const Eigen::VectorXd& start, const GlmOptions& opt) {
    auto pen = adaptive_penalty(weights, lambda);
    auto res = solve(pr, pen, start, opt);
    std::vector<std::string> warnings;
    if (!res.converged) {
        warnings.push_back("IRLS did not converge at lambda=" + std::to_string(lambda) +
                           "; refit with stabilizing ridge " + std::to_string(opt.stabilizing_ridge));
        pen.l2 = opt.stabilizing_ridge;
        res = solve(pr, pen, start, opt);
        if (!res.converged)
            throw SolverError("adaptive-LASSO fit did not converge even with ridge stabilization",
                              res.objective);
    }
    GlmFit fit = to_fit(pr, res.beta, nullptr, pr.n_penalized());
    fit.lambda = lambda;
    fit.converged = res.converged;
    fit.objective_trace = std::move(res.objective_trace);
    fit.warnings = std::move(warnings);
    return fit;
}

inline Eigen::VectorXd fit_to_beta(const GlmProblem& pr, const GlmFit& fit) {
    Eigen::VectorXd beta(pr.m());
    beta[0] = fit.intercept;
    if (pr.n_free == 2) beta[1] = fit.treatment_coef.value_or(0.0);
    beta.tail(pr.n_penalized()) = fit.coef;
    return beta;
}

inline GlmFit refit(const GlmProblem& full, const std::vector<Eigen::Index>& support,
                    const GlmOptions& opt) {
    const auto pr = restrict_columns(full, support);
    auto res = newton(pr, 0.0, opt);
    std::vector<std::string> warnings;
    if (!res.converged) {
        warnings.push_back("restricted fit did not converge (possible separation); refit with ridge " +
                           std::to_string(opt.stabilizing_ridge));
        res = newton(pr, opt.stabilizing_ridge, opt);
    }
    GlmFit fit = to_fit(pr, res.beta, &support, full.n_penalized());
    fit.support = support;
    fit.refit = true;
    fit.converged = res.converged;
    fit.objective_trace = std::move(res.objective_trace);
    fit.warnings = std::move(warnings);
    return fit;
}

}  // namespace detail

/// Coordinate-descent fit of the adaptive-LASSO objective at a single lambda.
/// `weights` are |w_j|^gamma; a zero weight forces that slope to zero.
inline GlmFit fit_adaptive_lasso(const Dataset& d, Response role, Family family,
                                 const Eigen::VectorXd& weights, double lambda,
                                 const Eigen::VectorXd* obs_weights = nullptr,
                                 const GlmOptions& opt = {}) {
    if (weights.size() != d.p()) throw ConfigError("adaptive weight vector has wrong length");
    const auto pr = detail::make_problem(d, role, family, obs_weights);
    return detail::fit_adaptive(pr, weights, lambda, Eigen::VectorXd::Zero(pr.m()), opt);
}

/// Smallest lambda at which every penalized slope is zero.
inline double lambda_max(const Dataset& d, Response role, Family family,
                         const Eigen::VectorXd& weights,
                         const Eigen::VectorXd* obs_weights = nullptr,
                         const GlmOptions& opt = {}) {
    const auto pr = detail::make_problem(d, role, family, obs_weights);
    const auto null_fit = detail::refit(pr, {}, opt);
    const Eigen::VectorXd g = detail::score(pr, detail::fit_to_beta(pr, null_fit));
    double lmax = 0;
    for (Eigen::Index j = 0; j < d.p(); ++j)
        lmax = std::max(lmax, std::abs(g[pr.n_free + j]) * weights[j]);
    // slack so rounding in the solver cannot admit a coefficient at the boundary
    return lmax * (1.0 + 1e-8);
}

/// `count` log-spaced values from lambda_max down to lambda_max * ratio.
inline std::vector<double> lambda_grid(double lmax, int count = 50, double ratio = 1e-4) {
    if (count < 1) throw ConfigError("lambda grid needs at least one point");
    if (!(lmax > 0)) return {0.0};
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
        grid[static_cast<std::size_t>(i)] = lmax * std::pow(ratio, frac);
    }
    return grid;
}

/// Information criterion of a support whose refit gives -2 loglik `m2ll`.
inline double information_criterion(double m2ll, std::size_t support_size, double n, double lambda,
                                    const GlmOptions& opt) {
    const double k = static_cast<double>(support_size);
    if (opt.criterion == Criterion::kBic) return m2ll + k * std::log(n);
    return m2ll + opt.eric_nu * k * std::log(n / lambda);
}

struct LambdaSelection {
    double lambda = 0;
    std::vector<TracePoint> trace;
};

/// Walks a decreasing lambda grid with warm starts, scores each support by its
/// refit likelihood, and returns the minimizer of the criterion.
inline LambdaSelection select_lambda(const Dataset& d, Response role, Family family,
                                     const Eigen::VectorXd& weights,
                                     const std::vector<double>& grid,
                                     const Eigen::VectorXd* obs_weights = nullptr,
                                     const GlmOptions& opt = {}) {
    if (grid.empty()) throw ConfigError("lambda grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] < grid[i - 1])) throw ConfigError("lambda grid must be strictly decreasing");
    const auto pr = detail::make_problem(d, role, family, obs_weights);
    const double n = static_cast<double>(d.n());

    LambdaSelection sel;
    std::map<std::vector<Eigen::Index>, double> m2ll_cache;
    Eigen::VectorXd start = Eigen::VectorXd::Zero(pr.m());
    double best = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
        const GlmFit fit = detail::fit_adaptive(pr, weights, lambda, start, opt);
        start = detail::fit_to_beta(pr, fit);
        auto it = m2ll_cache.find(fit.support);
        if (it == m2ll_cache.end()) {
            const auto rf = detail::refit(pr, fit.support, opt);
            const auto sub = detail::restrict_columns(pr, fit.support);
            Eigen::VectorXd beta(sub.m());
            beta[0] = rf.intercept;
            if (sub.n_free == 2) beta[1] = *rf.treatment_coef;
            for (std::size_t j = 0; j < fit.support.size(); ++j)
                beta[sub.n_free + static_cast<Eigen::Index>(j)] = rf.coef[fit.support[j]];
            it = m2ll_cache.emplace(fit.support, detail::minus_two_loglik(sub, sub.a * beta)).first;
        }
        const double crit = information_criterion(it->second, fit.support.size(), n,
                                                  std::max(lambda, 1e-300), opt);
        sel.trace.push_back({lambda, crit, static_cast<int>(fit.support.size())});
        if (crit < best) {
            best = crit;
            sel.lambda = lambda;
        }
    }
    return sel;
}

/// Unpenalized MLE on `fit.support` (intercept-only when empty). Falls back to
/// a 1e-6 ridge when the restricted logistic fit separates.
inline GlmFit refit_on_support(const Dataset& d, Response role, const GlmFit& fit,
                               const Eigen::VectorXd* obs_weights = nullptr,
                               const GlmOptions& opt = {}) {
    const auto pr = detail::make_problem(d, role, fit.family, obs_weights);
    GlmFit out = detail::refit(pr, fit.support, opt);
    out.lambda = fit.lambda;
    out.trace = fit.trace;
    out.warnings.insert(out.warnings.begin(), fit.warnings.begin(), fit.warnings.end());
    return out;
}

}  // namespace dips
