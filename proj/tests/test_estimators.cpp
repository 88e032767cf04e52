#include <catch2/catch_amalgamated.hpp>

#include "dips/estimators.hpp"
#include "dips/simulation.hpp"
#include "test_util.hpp"

using dips::Method;

namespace {

const std::vector<Method> kAll{Method::kDips, Method::kIpwAlas, Method::kDrAlas};

dips::Dataset scenario_draw(dips::Scenario s, std::uint64_t rep, Eigen::Index n = 1000) {
    dips::ScenarioConfig cfg;
    cfg.scenario = s;
    cfg.n = n;
    cfg.p = 15;
    return dips::gen_scenario(cfg, rep).data;
}

double arm_mean(const dips::Dataset& d, int k) {
    double s = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i)
        if (d.t[i] == k) s += d.y[i];
    return s / static_cast<double>(d.arm_size(k));
}

double diff_in_means_se(const dips::Dataset& d) {
    double se2 = 0;
    for (int k = 0; k < 2; ++k) {
        const double m = arm_mean(d, k);
        double ss = 0;
        for (Eigen::Index i = 0; i < d.n(); ++i)
            if (d.t[i] == k) ss += (d.y[i] - m) * (d.y[i] - m);
        const double nk = static_cast<double>(d.arm_size(k));
        se2 += ss / (nk - 1) / nk;
    }
    return std::sqrt(se2);
}

}  // namespace

TEST_CASE("normalized IPW hand examples") {
    const Eigen::Vector4d y(1, 2, 3, 4);
    const Eigen::Vector4i t(1, 1, 0, 0);
    const Eigen::Vector4d half = Eigen::Vector4d::Constant(0.5);
    CHECK(dips::normalized_ipw(y, t, half, 1) == 1.5);
    CHECK(dips::normalized_ipw(y, t, half, 0) == 3.5);

    const Eigen::Vector3d y3(1, 3, 2);
    const Eigen::Vector3i t3(1, 1, 0);
    const Eigen::Vector3d pi(0.25, 0.75, 0.5);
    CHECK(dips::normalized_ipw(y3, t3, pi, 1) == Catch::Approx((4.0 * 1 + (4.0 / 3) * 3) / (4.0 + 4.0 / 3)).epsilon(1e-15));
    CHECK(dips::normalized_ipw(y3, t3, pi, 1) == Catch::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("normalized IPW is invariant to rescaling the propensities") {
    const auto d = testutil::linear_data(300, 2, 4);
    Eigen::VectorXd pi(300);
    for (Eigen::Index i = 0; i < 300; ++i) pi[i] = 0.1 + 0.8 * dips::stats::normal_cdf(d.x(i, 0));
    for (int k = 0; k < 2; ++k) {
        const double a = dips::normalized_ipw(d.y, d.t, pi, k);
        // powers of two keep the ratio exact in binary floating point
        CHECK(dips::normalized_ipw(d.y, d.t, (pi * 8.0).eval(), k) == a);
        CHECK(dips::normalized_ipw(d.y, d.t, (pi * 7.0).eval(), k) == Catch::Approx(a).epsilon(1e-14));
    }
}

TEST_CASE("normalized IPW errors") {
    const Eigen::Vector3d y(1, 2, 3);
    CHECK_THROWS_WITH(dips::normalized_ipw(y, Eigen::Vector3i(1, 1, 1), Eigen::Vector3d::Constant(0.5), 0),
                      Catch::Matchers::ContainsSubstring("empty"));
    CHECK_THROWS_WITH(dips::normalized_ipw(y, Eigen::Vector3i(1, 0, 1), Eigen::Vector3d(0.5, 0.5, 0.0), 1),
                      Catch::Matchers::ContainsSubstring("observation(s) 3"));
    CHECK_THROWS_WITH(dips::normalized_ipw(y, Eigen::Vector3i(1, 0, 1), Eigen::Vector3d(-0.5, 0.5, -0.2), 1),
                      Catch::Matchers::ContainsSubstring("non-positive"));
    CHECK_NOTHROW(dips::normalized_ipw(y, Eigen::Vector3i(1, 0, 1), Eigen::Vector3d(-0.5, 0.5, -0.2), 1, nullptr, true));
}

TEST_CASE("empty arm is an estimation error") {
    auto d = testutil::linear_data(100, 3, 5);
    d.t.setOnes();
    for (auto m : kAll) CHECK_THROWS_AS(dips::estimate_all(d, {}, {m}), dips::EstimationError);
}

TEST_CASE("randomized data: estimates agree with the difference in arm means") {
    const auto d = testutil::linear_data(2000, 6, 17, 1.0, 2.0);
    const double dm = arm_mean(d, 1) - arm_mean(d, 0);
    const double se = diff_in_means_se(d);
    const auto ests = dips::estimate_all(d, {}, kAll);
    for (const auto& e : ests) {
        INFO(dips::to_string(e.method) << " estimate " << e.delta << " vs " << dm);
        CHECK(std::abs(e.delta - dm) < 3 * se);
        CHECK(e.delta == e.mu1 - e.mu0);
    }
}

TEST_CASE("AIPW recovers the contrast on a linear model with constant propensity") {
    const auto d = testutil::linear_data(2000, 6, 23, 1.0, 1.0);
    const auto e = dips::estimate_dr_alas(d);
    CHECK(std::abs(e.delta - 1.0) < 3 * 2.0 / std::sqrt(2000.0));
}

TEST_CASE("AIPW with a zero outcome model collapses to unnormalized IPW") {
    const auto d = dips::standardize(scenario_draw(dips::Scenario::kBothCorrect, 2, 400)).data;
    dips::EstimatorConfig cfg;
    auto wm = dips::fit_working_models(d, cfg, Eigen::VectorXd::Ones(d.n()));
    for (auto& f : wm.outcome) {
        f.intercept = 0;
        f.treatment_coef = 0.0;
        f.coef.setZero();
    }
    const auto e = dips::estimate_from_models(Method::kDrAlas, d, wm, cfg, Eigen::VectorXd::Ones(d.n()));
    const Eigen::VectorXd pi1 = wm.ps.mean(d.x);
    double s1 = 0, s0 = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        if (d.t[i] == 1) s1 += d.y[i] / pi1[i];
        else s0 += d.y[i] / (1 - pi1[i]);
    }
    CHECK(e.mu1 == Catch::Approx(s1 / d.n()).epsilon(1e-12));
    CHECK(e.mu0 == Catch::Approx(s0 / d.n()).epsilon(1e-12));
}

TEST_CASE("IPW-ALAS uses the refit parametric propensity in Hajek form") {
    const auto d = dips::standardize(scenario_draw(dips::Scenario::kBothCorrect, 3, 500)).data;
    dips::EstimatorConfig cfg;
    const auto wm = dips::fit_working_models(d, cfg, Eigen::VectorXd::Ones(d.n()));
    CHECK(wm.ps.refit);
    const auto e = dips::estimate_from_models(Method::kIpwAlas, d, wm, cfg, Eigen::VectorXd::Ones(d.n()));
    const Eigen::VectorXd pi1 = wm.ps.mean(d.x);
    const Eigen::VectorXd pi0 = (1.0 - pi1.array()).matrix();
    CHECK(e.mu1 == Catch::Approx(dips::normalized_ipw(d.y, d.t, pi1, 1)).epsilon(1e-14));
    CHECK(e.mu0 == Catch::Approx(dips::normalized_ipw(d.y, d.t, pi0, 0)).epsilon(1e-14));
}

TEST_CASE("location and scale equivariance of every estimator") {
    const auto d = scenario_draw(dips::Scenario::kMisspecOutcome, 7, 600);
    const auto base = dips::estimate_all(d, {}, kAll);
    auto shifted = d;
    shifted.y.array() += 12.5;
    auto scaled = d;
    scaled.y *= -3.0;
    const auto sh = dips::estimate_all(shifted, {}, kAll);
    const auto sc = dips::estimate_all(scaled, {}, kAll);
    for (std::size_t m = 0; m < kAll.size(); ++m) {
        INFO(dips::to_string(kAll[m]));
        CHECK(std::abs(sh[m].delta - base[m].delta) < 1e-10);
        CHECK(std::abs(sh[m].mu1 - (base[m].mu1 + 12.5)) < 1e-10);
        CHECK(std::abs(sh[m].mu0 - (base[m].mu0 + 12.5)) < 1e-10);
        CHECK(std::abs(sc[m].delta - (-3.0) * base[m].delta) < 1e-10);
    }
}

TEST_CASE("swapping the arm labels negates the DiPS estimate") {
    const auto d = scenario_draw(dips::Scenario::kBothCorrect, 9, 600);
    auto flipped = d;
    flipped.t = (1 - d.t.array()).matrix();
    const auto a = dips::estimate_dips(d);
    const auto b = dips::estimate_dips(flipped);
    CHECK(std::abs(a.delta + b.delta) < 1e-10);
}

TEST_CASE("DiPS and IPW-ALAS agree closely when both models are correct") {
    const auto d = scenario_draw(dips::Scenario::kBothCorrect, 11);
    const auto ests = dips::estimate_all(d, {}, {Method::kDips, Method::kIpwAlas});
    CHECK(std::abs(ests[0].delta - ests[1].delta) < 0.1);
}

TEST_CASE("diagnostics are populated") {
    const auto d = scenario_draw(dips::Scenario::kBothCorrect, 12);
    const auto e = dips::estimate_dips(d);
    CHECK(e.diagnostics.bandwidth);
    CHECK(*e.diagnostics.bandwidth > 0);
    CHECK(!e.diagnostics.ps_support.empty());
    CHECK(!e.diagnostics.om_support.empty());
    for (const auto& w : e.diagnostics.weights) {
        CHECK(w.max_share > 0);
        CHECK(w.max_share <= 1);
        CHECK(w.effective_size > 1);
    }
    CHECK(!e.se);
    CHECK(!e.ci);
}

TEST_CASE("trimming clips propensities for every method") {
    const auto d = scenario_draw(dips::Scenario::kMisspecPs, 13, 500);
    dips::EstimatorConfig cfg;
    cfg.trim = 0.2;
    const auto trimmed = dips::estimate_all(d, cfg, kAll);
    const auto plain = dips::estimate_all(d, {}, kAll);
    for (std::size_t m = 0; m < kAll.size(); ++m) CHECK(trimmed[m].delta != plain[m].delta);
}

TEST_CASE("arm-specific slopes fit one outcome model per arm") {
    const auto d = scenario_draw(dips::Scenario::kBothCorrect, 14, 600);
    dips::EstimatorConfig cfg;
    cfg.arm_specific_slopes = true;
    dips::WorkingModels wm;
    const auto ests = dips::estimate_all(d, cfg, kAll, &wm);
    CHECK(wm.outcome.size() == 2);
    for (const auto& e : ests) CHECK(std::abs(e.delta - 1.0) < 1.5);
}

TEST_CASE("binary outcome with a logistic outcome model") {
    auto d = scenario_draw(dips::Scenario::kBothCorrect, 15, 800);
    for (Eigen::Index i = 0; i < d.n(); ++i) d.y[i] = d.y[i] > 1.0 ? 1.0 : 0.0;
    dips::EstimatorConfig cfg;
    cfg.outcome_family = dips::Family::kBinomial;
    for (const auto& e : dips::estimate_all(d, cfg, kAll)) {
        CHECK(e.mu1 >= -0.5);
        CHECK(e.mu1 <= 1.5);
        CHECK(std::abs(e.delta) < 1);
    }
}
