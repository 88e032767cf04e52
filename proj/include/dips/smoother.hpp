#pragma once

// Double-index propensity smoother: per-arm scores (alpha'X, beta_k'X), a
// monotone transform onto a common scale, and a leave-self-in Nadaraya-Watson
// ratio of the treatment indicator under a fourth-order Gaussian product kernel.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dips/errors.hpp"
#include "dips/glm.hpp"
#include "dips/parallel.hpp"
#include "dips/stats.hpp"

namespace dips {

enum class ScoreTransform {
    kNormalCdf,    // standardize, then Phi: values in (0, 1)
    kStandardize,  // standardize only: unit sample SD
};

/// Univariate fourth-order kernel k4(u) = (3 - u^2) phi(u) / 2.
inline double kernel_q4_1d(double u) { return 0.5 * (3.0 - u * u) * stats::normal_pdf(u); }

/// Bivariate product kernel K(u1, u2) = k4(u1) k4(u2).
inline double kernel_q4(double u1, double u2) { return kernel_q4_1d(u1) * kernel_q4_1d(u2); }

/// Standardizes a raw score and maps it through the transform. Throws when the
/// score is constant, which happens for a null working model.
inline Eigen::VectorXd transform_scores(const Eigen::VectorXd& raw,
                                        ScoreTransform transform = ScoreTransform::kNormalCdf) {
    const auto n = raw.size();
    if (n < 2) throw EstimationError("degenerate score: need at least two values");
    const double m = raw.mean();
    const double sd = std::sqrt((raw.array() - m).square().sum() / static_cast<double>(n - 1));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(m))))
        throw EstimationError("degenerate score: zero sample standard deviation");
    Eigen::VectorXd z = (raw.array() - m) / sd;
    if (transform == ScoreTransform::kNormalCdf) z = z.unaryExpr([](double u) { return stats::normal_cdf(u); });
    return z;
}

/// Plug-in bandwidth sigma * n^(-1/(q+2)).
inline double plugin_bandwidth(Eigen::Index n, double sigma, int order = 4) {
    if (n < 2) throw ConfigError("plugin bandwidth needs n >= 2");
    if (!(sigma > 0)) throw ConfigError("plugin bandwidth needs sigma > 0");
    return sigma * std::pow(static_cast<double>(n), -1.0 / (order + 2));
}

/// Kernel-weighted sums at each evaluation point: sum_j K_h(S_j - s) g_j and
/// sum_j K_h(S_j - s) g_j I(T_j = 1), each divided by n. Score matrices have
/// 0, 1 or 2 columns on a common scale.
struct KernelSums {
    Eigen::VectorXd total;
    Eigen::VectorXd treated;
};

inline KernelSums kernel_sums(const Eigen::MatrixXd& eval, const Eigen::MatrixXd& data,
                              const Eigen::VectorXi& t, double h, const Eigen::VectorXd* g = nullptr,
                              unsigned threads = 1) {
    if (!(h > 0)) throw ConfigError("bandwidth must be positive");
    if (eval.cols() != data.cols()) throw EstimationError("score matrices differ in dimension");
    if (data.cols() > 2) throw EstimationError("at most two smoothing indices are supported");
    const Eigen::Index n = data.rows();
    const Eigen::Index m = eval.rows();
    const Eigen::Index dim = data.cols();

    std::vector<double> wt(static_cast<std::size_t>(n)), wtt(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        const double gj = g ? (*g)[j] : 1.0;
        wt[static_cast<std::size_t>(j)] = gj;
        wtt[static_cast<std::size_t>(j)] = t[j] == 1 ? gj : 0.0;
    }
    const double inv_h = 1.0 / h;
    // k4(u1) k4(u2) = (3 - u1^2)(3 - u2^2) exp(-(u1^2 + u2^2)/2) / (8 pi)
    const double c1 = 0.5 / std::sqrt(2.0 * std::numbers::pi);
    const double scale = (dim == 2 ? c1 * c1 * inv_h * inv_h : dim == 1 ? c1 * inv_h : 1.0) /
                         static_cast<double>(n);

    KernelSums out{Eigen::VectorXd(m), Eigen::VectorXd(m)};
    std::vector<double> d0(static_cast<std::size_t>(n)), d1(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        if (dim >= 1) d0[static_cast<std::size_t>(j)] = data(j, 0) * inv_h;
        if (dim == 2) d1[static_cast<std::size_t>(j)] = data(j, 1) * inv_h;
    }
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t ii) {
        const auto i = static_cast<Eigen::Index>(ii);
        double tot = 0, trt = 0;
        if (dim == 2) {
            const double s0 = eval(i, 0) * inv_h, s1 = eval(i, 1) * inv_h;
            for (std::size_t j = 0; j < d0.size(); ++j) {
                const double u0 = d0[j] - s0, u1 = d1[j] - s1;
                const double a = u0 * u0, b = u1 * u1;
                const double k = (3.0 - a) * (3.0 - b) * std::exp(-0.5 * (a + b));
                tot += wt[j] * k;
                trt += wtt[j] * k;
            }
        } else if (dim == 1) {
            const double s0 = eval(i, 0) * inv_h;
            for (std::size_t j = 0; j < d0.size(); ++j) {
                const double u0 = d0[j] - s0;
                const double a = u0 * u0;
                const double k = (3.0 - a) * std::exp(-0.5 * a);
                tot += wt[j] * k;
                trt += wtt[j] * k;
            }
        } else {
            for (std::size_t j = 0; j < wt.size(); ++j) {
                tot += wt[j];
                trt += wtt[j];
            }
        }
        out.total[i] = tot * scale;
        out.treated[i] = trt * scale;
    });
    return out;
}

/// pi_k at each evaluation point: sum_j K_h(S_j - s) I(T_j = k) g_j / sum_j K_h(S_j - s) g_j.
inline Eigen::VectorXd dips_pi(const Eigen::MatrixXd& eval, const Eigen::MatrixXd& data,
                               const Eigen::VectorXi& t, int arm, double h,
                               const Eigen::VectorXd* g = nullptr, unsigned threads = 1) {
    if (arm != 0 && arm != 1) throw ConfigError("arm must be 0 or 1");
    const KernelSums s = kernel_sums(eval, data, t, h, g, threads);
    Eigen::VectorXd pi(eval.rows());
    for (Eigen::Index i = 0; i < eval.rows(); ++i) {
        if (std::abs(s.total[i]) < 1e-300)
            throw EstimationError("smoothing degeneracy: kernel denominator vanishes at evaluation point " +
                                  std::to_string(i));
        const double num = arm == 1 ? s.treated[i] : s.total[i] - s.treated[i];
        pi[i] = num / s.total[i];
    }
    return pi;
}

struct DoubleIndexScores {
    int arm = 1;
    Eigen::VectorXd s_alpha;
    Eigen::VectorXd s_beta;
    Eigen::MatrixXd transformed;  // n x 2
    std::array<bool, 2> usable{true, true};
    double bandwidth = 1.0;

    /// The columns that enter the kernel (degenerate ones dropped).
    Eigen::MatrixXd smoothing_inputs() const {
        const int d = static_cast<int>(usable[0]) + static_cast<int>(usable[1]);
        Eigen::MatrixXd out(transformed.rows(), d);
        int c = 0;
        for (int k = 0; k < 2; ++k)
            if (usable[static_cast<std::size_t>(k)]) out.col(c++) = transformed.col(k);
        return out;
    }
};

struct PropensityEstimates {
    Eigen::VectorXd pi1;
    Eigen::VectorXd pi0;
    int negative_count = 0;
    double min_abs_value = 0;
};

struct SmootherOptions {
    ScoreTransform transform = ScoreTransform::kNormalCdf;
    std::optional<double> bandwidth;  // overrides the plug-in rule
    unsigned threads = 1;
};

struct DipsModel {
    std::array<DoubleIndexScores, 2> scores;  // indexed by arm
    PropensityEstimates estimates;
    std::vector<std::string> notes;
};

namespace detail {

inline DoubleIndexScores make_scores(int arm, const Eigen::VectorXd& s_alpha,
                                     const Eigen::VectorXd& s_beta, const SmootherOptions& opt,
                                     std::vector<std::string>& notes) {
    DoubleIndexScores sc;
    sc.arm = arm;
    sc.s_alpha = s_alpha;
    sc.s_beta = s_beta;
    const Eigen::Index n = s_alpha.size();
    sc.transformed = Eigen::MatrixXd::Zero(n, 2);
    const std::array<const Eigen::VectorXd*, 2> raw{&s_alpha, &s_beta};
    double var_sum = 0;
    int used = 0;
    for (int c = 0; c < 2; ++c) {
        try {
            sc.transformed.col(c) = transform_scores(*raw[static_cast<std::size_t>(c)], opt.transform);
            const double m = sc.transformed.col(c).mean();
            var_sum += (sc.transformed.col(c).array() - m).square().sum() / static_cast<double>(n - 1);
            ++used;
        } catch (const EstimationError&) {
            sc.usable[static_cast<std::size_t>(c)] = false;
            notes.push_back(std::string(c == 0 ? "propensity" : "prognostic") + " score for arm " +
                            std::to_string(arm) + " is constant; smoothing on the remaining index");
        }
    }
    if (opt.bandwidth) {
        if (!(*opt.bandwidth > 0)) throw ConfigError("bandwidth override must be positive");
        sc.bandwidth = *opt.bandwidth;
    } else if (used > 0) {
        sc.bandwidth = plugin_bandwidth(n, std::sqrt(var_sum / used));
    }
    return sc;
}

}  // namespace detail

/// Builds both arms' scores from the propensity fit and the outcome fit(s) and
/// evaluates the smoothed propensity at every observation. `outcome[k]` holds
/// arm k's slopes; pass the same fit twice for the main-effects model.
inline DipsModel build_dips(const Dataset& d, const GlmFit& ps_fit,
                            const std::array<const GlmFit*, 2>& outcome,
                            const SmootherOptions& opt = {}, const Eigen::VectorXd* g = nullptr) {
    DipsModel model;
    const Eigen::VectorXd s_alpha = d.x * ps_fit.coef;
    const bool shared = outcome[0] == outcome[1] || outcome[0]->coef == outcome[1]->coef;
    for (int k = 0; k < 2; ++k)
        model.scores[static_cast<std::size_t>(k)] =
            detail::make_scores(k, s_alpha, d.x * outcome[static_cast<std::size_t>(k)]->coef, opt,
                                model.notes);

    auto& est = model.estimates;
    auto ratio = [&](const KernelSums& s, int arm, Eigen::VectorXd& out) {
        out.resize(d.n());
        for (Eigen::Index i = 0; i < d.n(); ++i) {
            if (std::abs(s.total[i]) < 1e-300)
                throw EstimationError("smoothing degeneracy: kernel denominator vanishes at observation " +
                                      std::to_string(i + 1));
            out[i] = (arm == 1 ? s.treated[i] : s.total[i] - s.treated[i]) / s.total[i];
        }
    };
    if (shared) {
        const auto& sc = model.scores[1];
        const Eigen::MatrixXd inputs = sc.smoothing_inputs();
        const KernelSums s = kernel_sums(inputs, inputs, d.t, sc.bandwidth, g, opt.threads);
        ratio(s, 1, est.pi1);
        ratio(s, 0, est.pi0);
    } else {
        for (int k = 0; k < 2; ++k) {
            const auto& sc = model.scores[static_cast<std::size_t>(k)];
            const Eigen::MatrixXd inputs = sc.smoothing_inputs();
            const KernelSums s = kernel_sums(inputs, inputs, d.t, sc.bandwidth, g, opt.threads);
            ratio(s, k, k == 1 ? est.pi1 : est.pi0);
        }
    }
    est.negative_count = static_cast<int>((est.pi1.array() < 0).count() + (est.pi0.array() < 0).count());
    est.min_abs_value = std::min(est.pi1.cwiseAbs().minCoeff(), est.pi0.cwiseAbs().minCoeff());
    return model;
}

}  // namespace dips
