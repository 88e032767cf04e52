#pragma once

// Average-treatment-effect estimators built on the working-model fits:
// DiPS (normalized IPW with the smoothed double-index propensity), IPW-ALAS
// (normalized IPW with the parametric propensity) and DR-ALAS (AIPW).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dips/data.hpp"
#include "dips/errors.hpp"
#include "dips/glm.hpp"
#include "dips/smoother.hpp"
#include "dips/stats.hpp"

namespace dips {

enum class Method { kDips, kIpwAlas, kDrAlas };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::kDips: return "dips";
        case Method::kIpwAlas: return "ipw-alas";
        case Method::kDrAlas: return "dr-alas";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "dips") return Method::kDips;
    if (s == "ipw-alas") return Method::kIpwAlas;
    if (s == "dr-alas") return Method::kDrAlas;
    throw ConfigError("unknown method '" + s + "' (expected dips, ipw-alas or dr-alas)");
}

struct EstimatorConfig {
    Family outcome_family = Family::kGaussian;
    bool standardize = true;
    bool arm_specific_slopes = false;
    double gamma = 1.0;
    std::optional<double> ridge_lambda;  // default 1/n
    int lambda_count = 50;
    double lambda_ratio = 1e-4;
    GlmOptions glm;
    SmootherOptions smoother;
    std::optional<double> trim;  // clip every propensity into [trim, 1 - trim]
};

/// Penalty levels chosen on the original data; reused by perturbed refits.
struct TunedLambdas {
    double ps = 0;
    std::array<double, 2> outcome{0, 0};
};

struct WorkingModels {
    GlmFit ps;
    std::vector<GlmFit> outcome;  // one shared fit, or one per arm
    TunedLambdas lambdas;
    std::vector<std::string> warnings;

    const GlmFit& outcome_for_arm(int k) const {
        return outcome.size() == 1 ? outcome[0] : outcome[static_cast<std::size_t>(k)];
    }
};

struct WeightSummary {
    double max_share = 0;          // largest normalized weight within the arm
    double effective_size = 0;     // (sum w)^2 / sum w^2
};

struct EffectDiagnostics {
    int negative_ps_count = 0;
    std::optional<double> bandwidth;
    std::vector<std::string> ps_support;
    std::vector<std::string> om_support;
    int resample_failures = 0;
    std::array<WeightSummary, 2> weights{};
    std::vector<std::string> warnings;
};

struct EffectEstimate {
    Method method = Method::kDips;
    double delta = 0;
    double mu1 = 0;
    double mu0 = 0;
    std::optional<double> se;
    std::optional<std::pair<double, double>> ci;
    std::optional<double> p_value;
    EffectDiagnostics diagnostics;
};

/// Hajek estimate of E[Y(k)]: weighted arm-k mean of y with weights g_i / pi_k(X_i).
inline double normalized_ipw(const Eigen::VectorXd& y, const Eigen::VectorXi& t,
                             const Eigen::VectorXd& pi_k, int k,
                             const Eigen::VectorXd* g = nullptr, bool trimmed = false,
                             WeightSummary* summary = nullptr) {
    double wsum = 0, wysum = 0, w2sum = 0, wmax = -std::numeric_limits<double>::infinity();
    std::vector<Eigen::Index> zero;
    Eigen::Index members = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (t[i] != k) continue;
        ++members;
        if (pi_k[i] == 0.0 || !std::isfinite(pi_k[i])) {
            zero.push_back(i);
            continue;
        }
        const double w = (g ? (*g)[i] : 1.0) / pi_k[i];
        wsum += w;
        wysum += w * y[i];
        w2sum += w * w;
        wmax = std::max(wmax, w);
    }
    if (members == 0) throw EstimationError("arm " + std::to_string(k) + " is empty");
    if (!zero.empty()) {
        std::string idx;
        for (std::size_t i = 0; i < zero.size() && i < 10; ++i)
            idx += (i ? ", " : "") + std::to_string(zero[i] + 1);
        throw EstimationError("propensity is zero or non-finite for arm-" + std::to_string(k) +
                              " observation(s) " + idx);
    }
    if (!(wsum > 0) && !trimmed)
        throw EstimationError("inverse-propensity weights for arm " + std::to_string(k) +
                              " sum to a non-positive value; consider --trim-ps");
    if (summary) {
        summary->max_share = wmax / wsum;
        summary->effective_size = wsum * wsum / w2sum;
    }
    return wysum / wsum;
}

namespace detail {

inline Dataset arm_subset(const Dataset& d, int k) {
    const Eigen::Index m = d.arm_size(k);
    Dataset s;
    s.names = d.names;
    s.x.resize(m, d.p());
    s.y.resize(m);
    s.t.resize(m);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.t[i] != k) continue;
        s.x.row(r) = d.x.row(i);
        s.y[r] = d.y[i];
        s.t[r] = k;
        ++r;
    }
    return s;
}

inline Eigen::VectorXd arm_weights(const Dataset& d, const Eigen::VectorXd& g, int k) {
    Eigen::VectorXd out(d.arm_size(k));
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i)
        if (d.t[i] == k) out[r++] = g[i];
    return out;
}

/// ridge -> adaptive weights -> lambda (tuned or given) -> cold fit -> refit.
inline GlmFit fit_one_model(const Dataset& d, Response role, Family family,
                            const EstimatorConfig& cfg, const Eigen::VectorXd& g,
                            std::optional<double> fixed_lambda) {
    const double ridge = cfg.ridge_lambda.value_or(1.0 / static_cast<double>(d.n()));
    const RidgeFit rf = fit_ridge(d, role, family, ridge, &g, cfg.glm);
    const Eigen::VectorXd weights = adaptive_weights(rf.coef, cfg.gamma);
    std::vector<TracePoint> trace;
    double lambda = 0;
    if (fixed_lambda) {
        lambda = *fixed_lambda;
    } else {
        const double lmax = lambda_max(d, role, family, weights, &g, cfg.glm);
        const auto grid = lambda_grid(lmax, cfg.lambda_count, cfg.lambda_ratio);
        auto sel = select_lambda(d, role, family, weights, grid, &g, cfg.glm);
        lambda = sel.lambda;
        trace = std::move(sel.trace);
    }
    GlmFit fit = fit_adaptive_lasso(d, role, family, weights, lambda, &g, cfg.glm);
    fit.trace = std::move(trace);
    return refit_on_support(d, role, fit, &g, cfg.glm);
}

/// Rescales a gaussian fit made on y / scale back to the original y units.
inline void unscale_fit(GlmFit& fit, double scale) {
    fit.intercept *= scale;
    if (fit.treatment_coef) *fit.treatment_coef *= scale;
    fit.coef *= scale;
}

}  // namespace detail

/// Fits the propensity model and the outcome model(s). `g` are observation
/// weights (ones for the plain estimate). With `fixed` the penalty levels are
/// taken as given instead of tuned. A gaussian outcome is fitted on y / sd(y)
/// so the penalty path and criterion do not depend on the outcome's units.
inline WorkingModels fit_working_models(const Dataset& d, const EstimatorConfig& cfg,
                                        const Eigen::VectorXd& g,
                                        const std::optional<TunedLambdas>& fixed = std::nullopt) {
    WorkingModels wm;
    wm.ps = detail::fit_one_model(d, Response::kTreatment, Family::kBinomial, cfg, g,
                                  fixed ? std::optional<double>(fixed->ps) : std::nullopt);
    wm.lambdas.ps = wm.ps.lambda;

    double y_scale = 1.0;
    Dataset scaled;
    const Dataset* od = &d;
    if (cfg.outcome_family == Family::kGaussian) {
        const double m = d.y.mean();
        const double sd = std::sqrt((d.y.array() - m).square().sum() / static_cast<double>(d.n() - 1));
        if (sd > 0) {
            y_scale = sd;
            scaled = d;
            scaled.y = d.y / sd;
            od = &scaled;
        }
    }
    if (!cfg.arm_specific_slopes) {
        auto fit = detail::fit_one_model(*od, Response::kOutcome, cfg.outcome_family, cfg, g,
                                         fixed ? std::optional<double>(fixed->outcome[0]) : std::nullopt);
        wm.lambdas.outcome = {fit.lambda, fit.lambda};
        detail::unscale_fit(fit, y_scale);
        wm.outcome.push_back(std::move(fit));
    } else {
        for (int k = 0; k < 2; ++k) {
            const Dataset sub = detail::arm_subset(*od, k);
            const Eigen::VectorXd gk = detail::arm_weights(d, g, k);
            auto fit = detail::fit_one_model(
                sub, Response::kOutcomeWithinArm, cfg.outcome_family, cfg, gk,
                fixed ? std::optional<double>(fixed->outcome[static_cast<std::size_t>(k)]) : std::nullopt);
            wm.lambdas.outcome[static_cast<std::size_t>(k)] = fit.lambda;
            detail::unscale_fit(fit, y_scale);
            wm.outcome.push_back(std::move(fit));
        }
    }
    for (const auto* f : {&wm.ps}) wm.warnings.insert(wm.warnings.end(), f->warnings.begin(), f->warnings.end());
    for (const auto& f : wm.outcome) wm.warnings.insert(wm.warnings.end(), f.warnings.begin(), f.warnings.end());
    return wm;
}

namespace detail {

inline void apply_trim(Eigen::VectorXd& pi, const std::optional<double>& trim) {
    if (!trim) return;
    pi = pi.cwiseMax(*trim).cwiseMin(1.0 - *trim);
}

inline std::vector<std::string> support_names(const GlmFit& fit, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (auto j : fit.support) out.push_back(names[static_cast<std::size_t>(j)]);
    return out;
}

inline std::vector<std::string> outcome_support_names(const WorkingModels& wm,
                                                      const std::vector<std::string>& names) {
    std::vector<Eigen::Index> idx;
    for (const auto& f : wm.outcome) idx.insert(idx.end(), f.support.begin(), f.support.end());
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    std::vector<std::string> out;
    for (auto j : idx) out.push_back(names[static_cast<std::size_t>(j)]);
    return out;
}

}  // namespace detail

/// Effect estimate for one method from already-fitted working models. `d` must
/// be the same (standardized) data the models were fitted on.
inline EffectEstimate estimate_from_models(Method method, const Dataset& d, const WorkingModels& wm,
                                           const EstimatorConfig& cfg, const Eigen::VectorXd& g) {
    EffectEstimate est;
    est.method = method;
    auto& diag = est.diagnostics;
    diag.ps_support = detail::support_names(wm.ps, d.names);
    diag.om_support = detail::outcome_support_names(wm, d.names);
    diag.warnings = wm.warnings;
    const bool trimmed = cfg.trim.has_value();

    if (method == Method::kDips) {
        const DipsModel model =
            build_dips(d, wm.ps, {&wm.outcome_for_arm(0), &wm.outcome_for_arm(1)}, cfg.smoother, &g);
        Eigen::VectorXd pi1 = model.estimates.pi1, pi0 = model.estimates.pi0;
        detail::apply_trim(pi1, cfg.trim);
        detail::apply_trim(pi0, cfg.trim);
        diag.negative_ps_count = model.estimates.negative_count;
        diag.bandwidth = model.scores[1].bandwidth;
        diag.warnings.insert(diag.warnings.end(), model.notes.begin(), model.notes.end());
        est.mu1 = normalized_ipw(d.y, d.t, pi1, 1, &g, trimmed, &diag.weights[1]);
        est.mu0 = normalized_ipw(d.y, d.t, pi0, 0, &g, trimmed, &diag.weights[0]);
        est.delta = est.mu1 - est.mu0;
        return est;
    }

    Eigen::VectorXd pi1 = wm.ps.mean(d.x);
    int extreme = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i)
        if (pi1[i] < 1e-12 || pi1[i] > 1.0 - 1e-12) ++extreme;
    if (extreme > 0)
        diag.warnings.push_back(std::to_string(extreme) +
                                " fitted propensities within 1e-12 of 0 or 1 (extreme weights)");
    Eigen::VectorXd pi0 = (1.0 - pi1.array()).matrix();
    detail::apply_trim(pi1, cfg.trim);
    detail::apply_trim(pi0, cfg.trim);

    if (method == Method::kIpwAlas) {
        est.mu1 = normalized_ipw(d.y, d.t, pi1, 1, &g, trimmed, &diag.weights[1]);
        est.mu0 = normalized_ipw(d.y, d.t, pi0, 0, &g, trimmed, &diag.weights[0]);
        est.delta = est.mu1 - est.mu0;
        return est;
    }

    // AIPW, unnormalized sample-average form.
    const double gsum = g.sum();
    std::array<double, 2> mu{};
    for (int k = 0; k < 2; ++k) {
        const Eigen::VectorXd m = wm.outcome_for_arm(k).mean(d.x, k);
        const Eigen::VectorXd& pk = k == 1 ? pi1 : pi0;
        double s = 0;
        for (Eigen::Index i = 0; i < d.n(); ++i) {
            double term = m[i];
            if (d.t[i] == k) {
                if (pk[i] == 0.0)
                    throw EstimationError("propensity is zero for arm-" + std::to_string(k) +
                                          " observation " + std::to_string(i + 1));
                term += (d.y[i] - m[i]) / pk[i];
            }
            s += g[i] * term;
        }
        mu[static_cast<std::size_t>(k)] = s / gsum;
    }
    est.mu1 = mu[1];
    est.mu0 = mu[0];
    est.delta = est.mu1 - est.mu0;
    return est;
}

/// Standardizes covariates when configured; returns the data estimators see.
inline StandardizedData prepare(const Dataset& d, const EstimatorConfig& cfg) {
    d.validate();
    d.require_both_arms();
    if (cfg.standardize) return standardize(d);
    StandardizedData out{d, {}};
    for (Eigen::Index j = 0; j < d.p(); ++j) out.transform.kept.push_back(j);
    out.transform.means = Eigen::VectorXd::Zero(d.p());
    out.transform.sds = Eigen::VectorXd::Ones(d.p());
    return out;
}

/// Runs the full pipeline once and returns one estimate per requested method,
/// all sharing the same working-model fits.
inline std::vector<EffectEstimate> estimate_all(const Dataset& d, const EstimatorConfig& cfg,
                                                const std::vector<Method>& methods,
                                                WorkingModels* models_out = nullptr) {
    const StandardizedData sd = prepare(d, cfg);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(sd.data.n());
    WorkingModels wm = fit_working_models(sd.data, cfg, ones);
    std::vector<EffectEstimate> out;
    for (Method m : methods) {
        auto est = estimate_from_models(m, sd.data, wm, cfg, ones);
        est.diagnostics.warnings.insert(est.diagnostics.warnings.begin(), sd.transform.warnings.begin(),
                                        sd.transform.warnings.end());
        out.push_back(std::move(est));
    }
    if (models_out) *models_out = std::move(wm);
    return out;
}

inline EffectEstimate estimate_dips(const Dataset& d, const EstimatorConfig& cfg = {}) {
    return estimate_all(d, cfg, {Method::kDips}).front();
}

inline EffectEstimate estimate_ipw_alas(const Dataset& d, const EstimatorConfig& cfg = {}) {
    return estimate_all(d, cfg, {Method::kIpwAlas}).front();
}

inline EffectEstimate estimate_dr_alas(const Dataset& d, const EstimatorConfig& cfg = {}) {
    return estimate_all(d, cfg, {Method::kDrAlas}).front();
}

}  // namespace dips
