#pragma once

// Monte Carlo engine for the four working-model specification scenarios:
// X ~ N(0, Sigma), T | X ~ Bernoulli(pi_1(X)), Y | X, T ~ N(mu_T(X), noise_sd^2),
// with the true average treatment effect equal to 1 in every scenario.

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dips/estimators.hpp"
#include "dips/inference.hpp"
#include "dips/parallel.hpp"
#include "dips/stats.hpp"

namespace dips {

enum class Scenario { kBothCorrect, kMisspecOutcome, kMisspecPs, kBothMisspec };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::kBothCorrect: return "both-correct";
        case Scenario::kMisspecOutcome: return "misspec-outcome";
        case Scenario::kMisspecPs: return "misspec-ps";
        case Scenario::kBothMisspec: return "both-misspec";
    }
    return "?";
}

inline Scenario parse_scenario(const std::string& s) {
    for (auto sc : {Scenario::kBothCorrect, Scenario::kMisspecOutcome, Scenario::kMisspecPs,
                    Scenario::kBothMisspec})
        if (s == to_string(sc)) return sc;
    throw ConfigError("unknown scenario '" + s +
                      "' (expected both-correct, misspec-outcome, misspec-ps or both-misspec)");
}

inline bool outcome_misspecified(Scenario s) {
    return s == Scenario::kMisspecOutcome || s == Scenario::kBothMisspec;
}
inline bool ps_misspecified(Scenario s) { return s == Scenario::kMisspecPs || s == Scenario::kBothMisspec; }

/// Coefficient templates; slots past the tenth are zero.
namespace coefficients {
inline constexpr std::array<double, 10> kAlpha{.4, -.3, .4, .3, .3, .4, .3, -.3, -.3, -.3};
inline constexpr std::array<double, 10> kBeta{-1, 1, -1, 1, 1, -1, 1, 1, -1, -1};
inline constexpr std::array<double, 10> kAlpha1{.9, 0, -.9, 0, .9, 0, .9, 0, -.9, 0};
inline constexpr std::array<double, 10> kAlpha2{0, -.6, 0, .6, 0, .6, 0, -.6, 0, -.6};

inline Eigen::VectorXd padded(const std::array<double, 10>& c, Eigen::Index p) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(p, 10); ++j) v[j] = c[static_cast<std::size_t>(j)];
    return v;
}
}  // namespace coefficients

struct ScenarioConfig {
    Scenario scenario = Scenario::kBothCorrect;
    Eigen::Index n = 1000;
    Eigen::Index p = 15;
    int reps = 500;
    std::uint64_t seed = 1;
    std::vector<Method> estimators{Method::kDips, Method::kIpwAlas, Method::kDrAlas};
    std::optional<PerturbationConfig> perturb;  // coverage study for DiPS
    double noise_sd = std::sqrt(10.0);
    unsigned threads = 1;
    EstimatorConfig estimator;
    double max_failure_fraction = 0.05;

    void validate() const {
        if (p < 10) throw ConfigError("scenario dimension p must be at least 10");
        if (n < 20) throw ConfigError("scenario sample size n must be at least 20");
        if (reps < 1) throw ConfigError("reps must be at least 1");
        if (estimators.empty() && !perturb) throw ConfigError("no estimators requested");
        if (!(noise_sd > 0)) throw ConfigError("noise_sd must be positive");
        if (perturb) perturb->validate();
    }
};

/// Sigma_ij = 1 on the diagonal, .4 (.5)^(|i-j|/3) for 0 < |i-j| <= 15, else 0.
inline Eigen::MatrixXd build_sigma(Eigen::Index p) {
    if (p < 1) throw ConfigError("build_sigma needs p >= 1");
    Eigen::MatrixXd s(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) {
            const auto gap = std::abs(i - j);
            s(i, j) = gap == 0 ? 1.0 : gap <= 15 ? 0.4 * std::pow(0.5, static_cast<double>(gap) / 3.0) : 0.0;
        }
    return s;
}

namespace detail {

inline double propensity_formula(Scenario s, double alpha_x, double alpha1_x, double alpha2_x) {
    if (!ps_misspecified(s)) return stats::expit(alpha_x);
    return stats::expit(-1.0 + alpha1_x * (0.5 * alpha2_x + 0.5));
}

/// The cube root is the real, sign-preserving one.
inline double mean_formula(Scenario s, double beta_x, int k) {
    if (!outcome_misspecified(s)) return k + beta_x;
    return k + 3.0 * std::cbrt(beta_x * (beta_x + 3.0));
}

}  // namespace detail

/// Treatment probability pi_1(x) under the scenario.
inline double scenario_propensity(Scenario s, const Eigen::VectorXd& x) {
    using namespace coefficients;
    const Eigen::Index p = x.size();
    return detail::propensity_formula(s, padded(kAlpha, p).dot(x), padded(kAlpha1, p).dot(x),
                                      padded(kAlpha2, p).dot(x));
}

/// Conditional outcome mean mu_k(x) under the scenario.
inline double scenario_mean(Scenario s, const Eigen::VectorXd& x, int k) {
    return detail::mean_formula(s, coefficients::padded(coefficients::kBeta, x.size()).dot(x), k);
}

struct ScenarioDraw {
    Dataset data;
    double truth = 1.0;
};

class ScenarioGenerator {
public:
    explicit ScenarioGenerator(const ScenarioConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        Eigen::LLT<Eigen::MatrixXd> llt(build_sigma(cfg.p));
        if (llt.info() != Eigen::Success) throw EstimationError("covariance matrix is not positive definite");
        chol_ = llt.matrixL();
        alpha_ = coefficients::padded(coefficients::kAlpha, cfg.p);
        beta_ = coefficients::padded(coefficients::kBeta, cfg.p);
        alpha1_ = coefficients::padded(coefficients::kAlpha1, cfg.p);
        alpha2_ = coefficients::padded(coefficients::kAlpha2, cfg.p);
    }

    /// Data set for repetition `rep`; depends only on (seed, rep).
    ScenarioDraw draw(std::uint64_t rep) const {
        auto rng = rng_stream(cfg_.seed, rep, kDomain);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const Eigen::Index n = cfg_.n, p = cfg_.p;
        ScenarioDraw out;
        Dataset& d = out.data;
        d.x.resize(n, p);
        d.y.resize(n);
        d.t.resize(n);
        Eigen::VectorXd z(p);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) z[j] = normal(rng);
            const Eigen::VectorXd x = chol_ * z;
            d.x.row(i) = x.transpose();
            const double pi1 = propensity(x);
            d.t[i] = unif(rng) < pi1 ? 1 : 0;
            d.y[i] = mean(x, d.t[i]) + cfg_.noise_sd * normal(rng);
        }
        for (Eigen::Index j = 0; j < p; ++j) d.names.push_back("X" + std::to_string(j + 1));
        out.truth = 1.0;
        return out;
    }

    double propensity(const Eigen::VectorXd& x) const {
        return detail::propensity_formula(cfg_.scenario, alpha_.dot(x), alpha1_.dot(x), alpha2_.dot(x));
    }

    double mean(const Eigen::VectorXd& x, int k) const {
        return detail::mean_formula(cfg_.scenario, beta_.dot(x), k);
    }

    const Eigen::MatrixXd& cholesky() const { return chol_; }

private:
    static constexpr std::uint32_t kDomain = 0x73696d75;  // "simu"
    ScenarioConfig cfg_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_, beta_, alpha1_, alpha2_;
};

inline ScenarioDraw gen_scenario(const ScenarioConfig& cfg, std::uint64_t rep) {
    return ScenarioGenerator(cfg).draw(rep);
}

struct EstimatorSummary {
    Method method = Method::kDips;
    int successes = 0;
    int failures = 0;
    double mean_estimate = 0;
    double bias = 0;
    double rmse = 0;
    double emp_se = 0;
    std::optional<double> re_vs_dr;
    std::optional<double> coverage;
    std::optional<double> ase;
    int resample_failures = 0;
};

struct SimReport {
    ScenarioConfig config;
    std::vector<EstimatorSummary> estimators;
    std::vector<std::vector<double>> estimates;  // per estimator, per successful rep
    double wall_clock_seconds = 0;
};

namespace detail {

struct RepResult {
    std::vector<std::optional<double>> deltas;
    std::optional<double> se;
    std::optional<bool> covered;
    int resample_failures = 0;
};

inline EstimatorSummary aggregate(Method m, const std::vector<double>& est, int failures, double truth) {
    EstimatorSummary s;
    s.method = m;
    s.successes = static_cast<int>(est.size());
    s.failures = failures;
    if (est.empty()) return s;
    const double r = static_cast<double>(est.size());
    double sum = 0, sq = 0;
    for (double v : est) {
        sum += v;
        sq += (v - truth) * (v - truth);
    }
    s.mean_estimate = sum / r;
    s.bias = s.mean_estimate - truth;
    s.rmse = std::sqrt(sq / r);
    if (est.size() > 1) s.emp_se = stats::sample_sd(est);
    return s;
}

}  // namespace detail

/// Runs every repetition, then reduces in repetition order, so the report is
/// identical for any thread count.
inline SimReport run_experiment(const ScenarioConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const ScenarioGenerator gen(cfg);
    const auto reps = static_cast<std::size_t>(cfg.reps);
    std::vector<detail::RepResult> results(reps);

    EstimatorConfig ecfg = cfg.estimator;
    ecfg.smoother.threads = 1;
    std::vector<Method> methods = cfg.estimators;
    if (cfg.perturb && std::find(methods.begin(), methods.end(), Method::kDips) == methods.end())
        methods.push_back(Method::kDips);

    parallel_for(reps, cfg.threads, [&](std::size_t r) {
        auto& res = results[r];
        res.deltas.assign(methods.size(), std::nullopt);
        const ScenarioDraw draw = gen.draw(r);
        try {
            WorkingModels wm;
            const auto ests = estimate_all(draw.data, ecfg, methods, &wm);
            for (std::size_t e = 0; e < methods.size(); ++e) res.deltas[e] = ests[e].delta;
            if (cfg.perturb) {
                const auto it = std::find_if(ests.begin(), ests.end(),
                                             [](const EffectEstimate& e) { return e.method == Method::kDips; });
                PerturbationConfig pc = *cfg.perturb;
                pc.threads = 1;
                pc.seed = rng_stream(cfg.perturb->seed, r, 0x636f7672)();  // per-rep resample seed
                const StandardizedData sd = prepare(draw.data, ecfg);
                const auto summary = perturbation_inference(sd.data, ecfg, pc, Method::kDips, it->delta, wm.lambdas);
                res.se = summary.se_mad;
                res.covered = summary.ci.first <= draw.truth && draw.truth <= summary.ci.second;
                res.resample_failures = summary.failures;
            }
        } catch (const EstimationError&) {
            // the rep counts as a failure for every estimator it did not finish
        }
    });

    SimReport report;
    report.config = cfg;
    const double truth = 1.0;
    for (std::size_t e = 0; e < methods.size(); ++e) {
        std::vector<double> est;
        int failures = 0;
        for (const auto& res : results) {
            if (res.deltas[e])
                est.push_back(*res.deltas[e]);
            else
                ++failures;
        }
        if (failures > cfg.max_failure_fraction * static_cast<double>(cfg.reps))
            throw EstimationError(std::string(to_string(methods[e])) + " failed in " +
                                  std::to_string(failures) + " of " + std::to_string(cfg.reps) + " repetitions");
        report.estimators.push_back(detail::aggregate(methods[e], est, failures, truth));
        report.estimates.push_back(std::move(est));
    }

    const auto dr = std::find_if(report.estimators.begin(), report.estimators.end(),
                                 [](const EstimatorSummary& s) { return s.method == Method::kDrAlas; });
    if (dr != report.estimators.end()) {
        const double dr_mse = dr->rmse * dr->rmse;
        for (auto& s : report.estimators)
            if (s.successes > 0) s.re_vs_dr = s.method == Method::kDrAlas ? 1.0 : dr_mse / (s.rmse * s.rmse);
    }

    if (cfg.perturb) {
        int covered = 0, used = 0, rfail = 0;
        double se_sum = 0;
        for (const auto& res : results) {
            if (!res.covered) continue;
            ++used;
            covered += *res.covered ? 1 : 0;
            se_sum += *res.se;
            rfail += res.resample_failures;
        }
        const auto it = std::find_if(report.estimators.begin(), report.estimators.end(),
                                     [](const EstimatorSummary& s) { return s.method == Method::kDips; });
        if (used > 0) {
            it->coverage = static_cast<double>(covered) / used;
            it->ase = se_sum / used;
        }
        it->resample_failures = rfail;
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace dips
