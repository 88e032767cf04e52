#pragma once

// Perturbation resampling: every estimation layer (ridge weights, penalized
// fits, refits, kernel sums, IPW) is re-solved under iid multiplier weights
// with unit mean and variance; the spread of the resampled estimates gives
// the standard error and percentile interval.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dips/estimators.hpp"
#include "dips/parallel.hpp"
#include "dips/stats.hpp"

namespace dips {

/// Generator for stream `index` under `seed`; streams never depend on the
/// order or thread in which they are requested. `domain` separates unrelated
/// uses of the same (seed, index) pair.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t index, std::uint32_t domain = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      domain};
    return std::mt19937_64(seq);
}

/// Multiplier law; must be non-negative with unit mean and unit variance.
using WeightLaw = std::function<double(std::mt19937_64&)>;

inline double exponential_weight(std::mt19937_64& rng) {
    return std::exponential_distribution<double>(1.0)(rng);
}

struct PerturbationConfig {
    int resamples = 500;
    std::uint64_t seed = 1;
    bool reuse_lambda = true;
    unsigned threads = 1;
    double max_failure_fraction = 0.05;
    WeightLaw law = exponential_weight;

    void validate() const {
        if (resamples < 2) throw ConfigError("perturbation needs at least 2 resamples");
        if (!law) throw ConfigError("perturbation weight law is empty");
    }
};

struct ResampleSummary {
    double delta_hat = 0;
    std::vector<double> resamples;  // successful resamples, in index order
    double se_mad = 0;
    double se_sd = 0;
    std::pair<double, double> ci{0, 0};
    std::optional<double> p_wald;  // absent when the resamples have no spread
    int failures = 0;
    std::vector<std::string> warnings;
};

inline constexpr std::uint32_t kPerturbationDomain = 0x70657274;  // "pert"

inline Eigen::VectorXd draw_weights(Eigen::Index n, std::uint64_t seed, std::uint64_t index,
                                    const WeightLaw& law = exponential_weight) {
    auto rng = rng_stream(seed, index, kPerturbationDomain);
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < n; ++i) g[i] = law(rng);
    return g;
}

/// Delta* from the fully weighted pipeline on prepared (standardized) data.
/// `lambdas` fixes the penalty levels; nullptr re-tunes them on the weighted
/// criterion. Weights are rescaled to mean one first, so g = c * 1 gives the
/// unweighted estimate exactly.
inline double perturb_once(const Dataset& d, const Eigen::VectorXd& g, const EstimatorConfig& cfg,
                           Method method, const TunedLambdas* lambdas) {
    if (g.size() != d.n()) throw EstimationError("perturbation weight vector has wrong length");
    const double total = g.sum();
    if (!(total > 0) || !std::isfinite(total)) throw EstimationError("perturbation weights sum to zero");
    const Eigen::VectorXd w = g / (total / static_cast<double>(d.n()));
    for (int k = 0; k < 2; ++k) {
        double mass = 0;
        for (Eigen::Index i = 0; i < d.n(); ++i)
            if (d.t[i] == k) mass += w[i];
        if (mass < 1e-8 * static_cast<double>(d.n()))
            throw EstimationError("degenerate weighting: arm " + std::to_string(k) + " has no weighted mass");
    }
    const auto fixed = lambdas ? std::optional<TunedLambdas>(*lambdas) : std::nullopt;
    const WorkingModels wm = fit_working_models(d, cfg, w, fixed);
    return estimate_from_models(method, d, wm, cfg, w).delta;
}

/// MAD-based SE (normal-consistent constant 1.4826), sample SD, type-7
/// percentile interval and Wald p-value.
inline ResampleSummary summarize(double delta_hat, std::vector<double> resamples) {
    if (resamples.size() < 2) throw EstimationError("inference needs at least 2 successful resamples");
    ResampleSummary s;
    s.delta_hat = delta_hat;
    std::vector<double> sorted = resamples;
    std::sort(sorted.begin(), sorted.end());
    const double med = stats::quantile_type7_sorted(sorted, 0.5);
    std::vector<double> dev(sorted.size());
    std::transform(sorted.begin(), sorted.end(), dev.begin(), [med](double v) { return std::abs(v - med); });
    s.se_mad = 1.4826 * stats::median(std::move(dev));
    s.se_sd = stats::sample_sd(sorted);
    s.ci = {stats::quantile_type7_sorted(sorted, 0.025), stats::quantile_type7_sorted(sorted, 0.975)};
    if (s.se_mad > 0)
        s.p_wald = std::erfc(std::abs(delta_hat) / s.se_mad / std::numbers::sqrt2);
    else
        s.warnings.push_back("resamples have zero MAD; Wald p-value undefined");
    s.resamples = std::move(resamples);
    return s;
}

/// Runs `cfg.resamples` perturbations of one estimator around `delta_hat`.
/// `lambdas` are the penalty levels tuned on the original data.
inline ResampleSummary perturbation_inference(const Dataset& d, const EstimatorConfig& cfg,
                                              const PerturbationConfig& pcfg, Method method,
                                              double delta_hat, const TunedLambdas& lambdas) {
    pcfg.validate();
    const auto b = static_cast<std::size_t>(pcfg.resamples);
    std::vector<std::optional<double>> slots(b);
    EstimatorConfig inner = cfg;
    inner.smoother.threads = 1;
    parallel_for(b, pcfg.threads, [&](std::size_t r) {
        const Eigen::VectorXd g = draw_weights(d.n(), pcfg.seed, r, pcfg.law);
        try {
            slots[r] = perturb_once(d, g, inner, method, pcfg.reuse_lambda ? &lambdas : nullptr);
            if (!std::isfinite(*slots[r])) slots[r].reset();
        } catch (const EstimationError&) {
            slots[r].reset();
        }
    });
    std::vector<double> ok;
    int failures = 0;
    for (const auto& s : slots) {
        if (s)
            ok.push_back(*s);
        else
            ++failures;
    }
    if (failures > pcfg.max_failure_fraction * static_cast<double>(b))
        throw EstimationError(std::to_string(failures) + " of " + std::to_string(b) +
                              " perturbation resamples failed (limit " +
                              std::to_string(pcfg.max_failure_fraction * 100) + "%)");
    ResampleSummary s = summarize(delta_hat, std::move(ok));
    s.failures = failures;
    return s;
}

/// Point estimate plus perturbation inference for each requested method.
inline std::vector<EffectEstimate> estimate_with_inference(const Dataset& d, const EstimatorConfig& cfg,
                                                           const std::vector<Method>& methods,
                                                           const PerturbationConfig& pcfg,
                                                           std::vector<ResampleSummary>* summaries = nullptr) {
    WorkingModels wm;
    auto estimates = estimate_all(d, cfg, methods, &wm);
    const StandardizedData sd = prepare(d, cfg);
    for (auto& est : estimates) {
        ResampleSummary s = perturbation_inference(sd.data, cfg, pcfg, est.method, est.delta, wm.lambdas);
        est.se = s.se_mad;
        est.ci = s.ci;
        est.p_value = s.p_wald;
        est.diagnostics.resample_failures = s.failures;
        est.diagnostics.warnings.insert(est.diagnostics.warnings.end(), s.warnings.begin(), s.warnings.end());
        if (summaries) summaries->push_back(std::move(s));
    }
    return estimates;
}

}  // namespace dips
