#pragma once

// JSON and CSV serialization of fits, effect estimates and simulation reports.
// Keys are emitted in a fixed order so identical runs produce identical bytes.

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dips/data.hpp"
#include "dips/estimators.hpp"
#include "dips/glm.hpp"
#include "dips/inference.hpp"
#include "dips/simulation.hpp"
#include "dips/version.hpp"

namespace dips {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json number_or_null(std::optional<double> v) {
    if (!v || !std::isfinite(*v)) return nullptr;
    return *v;
}

}  // namespace detail

/// Fit in original covariate units (when a standardization is supplied).
inline Json to_json(const GlmFit& fit, const std::vector<std::string>& names,
                    const Standardization* transform = nullptr, Eigen::Index original_p = 0) {
    Json j;
    j["family"] = to_string(fit.family);
    j["lambda"] = fit.lambda;
    double intercept = fit.intercept;
    Eigen::VectorXd coef = fit.coef;
    std::vector<std::string> coef_names = names;
    if (transform && original_p > 0) {
        auto [shift, orig] = transform->to_original_scale(fit.coef, original_p);
        intercept += shift;
        coef = orig;
    }
    j["intercept"] = intercept;
    j["treatment_coef"] = detail::number_or_null(fit.treatment_coef);
    Json c = Json::object();
    for (Eigen::Index k = 0; k < coef.size() && k < static_cast<Eigen::Index>(coef_names.size()); ++k)
        c[coef_names[static_cast<std::size_t>(k)]] = coef[k];
    j["coefficients"] = c;
    Json support = Json::array();
    for (auto s : fit.support) support.push_back(names[static_cast<std::size_t>(s)]);
    j["support"] = support;
    j["refit"] = fit.refit;
    Json trace = Json::array();
    for (const auto& t : fit.trace)
        trace.push_back(Json{{"lambda", t.lambda}, {"criterion", t.criterion}, {"support_size", t.support_size}});
    j["criterion_trace"] = trace;
    return j;
}

inline Json to_json(const EffectEstimate& est, Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
    Json j;
    j["method"] = to_string(est.method);
    j["n"] = n;
    j["p"] = p;
    j["estimate"] = est.delta;
    j["se"] = detail::number_or_null(est.se);
    if (est.ci)
        j["ci"] = Json::array({est.ci->first, est.ci->second});
    else
        j["ci"] = nullptr;
    j["p_value"] = detail::number_or_null(est.p_value);
    const auto& d = est.diagnostics;
    Json diag;
    diag["negative_ps_count"] = d.negative_ps_count;
    diag["bandwidth"] = detail::number_or_null(d.bandwidth);
    diag["ps_support"] = d.ps_support;
    diag["om_support"] = d.om_support;
    diag["resample_failures"] = d.resample_failures;
    diag["mu1"] = est.mu1;
    diag["mu0"] = est.mu0;
    Json weights = Json::array();
    for (int k = 0; k < 2; ++k)
        weights.push_back(Json{{"arm", k},
                               {"max_share", d.weights[static_cast<std::size_t>(k)].max_share},
                               {"effective_size", d.weights[static_cast<std::size_t>(k)].effective_size}});
    diag["weights"] = weights;
    diag["warnings"] = d.warnings;
    j["diagnostics"] = diag;
    j["seed"] = seed;
    j["version"] = kVersion;
    return j;
}

inline Json to_json(const SimReport& r, bool include_wall_clock = true) {
    const auto& c = r.config;
    Json j;
    j["scenario"] = to_string(c.scenario);
    j["n"] = c.n;
    j["p"] = c.p;
    j["reps"] = c.reps;
    j["seed"] = c.seed;
    j["noise_sd"] = c.noise_sd;
    if (c.perturb)
        j["perturbation"] = Json{{"resamples", c.perturb->resamples}, {"seed", c.perturb->seed},
                                 {"reuse_lambda", c.perturb->reuse_lambda}};
    else
        j["perturbation"] = nullptr;
    Json ests = Json::array();
    for (const auto& s : r.estimators) {
        Json e;
        e["method"] = to_string(s.method);
        e["successes"] = s.successes;
        e["failures"] = s.failures;
        e["mean_estimate"] = s.mean_estimate;
        e["bias"] = s.bias;
        e["rmse"] = s.rmse;
        e["emp_se"] = s.emp_se;
        e["re_vs_dr"] = detail::number_or_null(s.re_vs_dr);
        e["coverage"] = detail::number_or_null(s.coverage);
        e["ase"] = detail::number_or_null(s.ase);
        e["resample_failures"] = s.resample_failures;
        ests.push_back(e);
    }
    j["estimators"] = ests;
    j["version"] = kVersion;
    if (include_wall_clock) j["wall_clock_seconds"] = r.wall_clock_seconds;
    return j;
}

/// One row per estimator, for external plotting.
inline std::string to_csv(const SimReport& r) {
    auto num = [](std::optional<double> v) {
        return v && std::isfinite(*v) ? detail::format_number(*v) : std::string("NA");
    };
    std::string out = "scenario,n,p,reps,estimator,bias,rmse,emp_se,re_vs_dr,coverage,ase,failures\n";
    for (const auto& s : r.estimators) {
        out += std::string(to_string(r.config.scenario)) + ',' + std::to_string(r.config.n) + ',' +
               std::to_string(r.config.p) + ',' + std::to_string(r.config.reps) + ',' + to_string(s.method) +
               ',' + num(s.bias) + ',' + num(s.rmse) + ',' + num(s.emp_se) + ',' + num(s.re_vs_dr) + ',' +
               num(s.coverage) + ',' + num(s.ase) + ',' + std::to_string(s.failures) + '\n';
    }
    return out;
}

inline std::string resamples_csv(const ResampleSummary& s) {
    std::string out = "index,delta\n";
    for (std::size_t i = 0; i < s.resamples.size(); ++i)
        out += std::to_string(i) + ',' + detail::format_number(s.resamples[i]) + '\n';
    return out;
}

/// Writes text to `path`; "-" means standard output is handled by the caller.
inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EstimationError("I/O error: cannot write '" + path + "'");
    out << text;
    if (!out) throw EstimationError("I/O error: write to '" + path + "' failed");
}

}  // namespace dips
