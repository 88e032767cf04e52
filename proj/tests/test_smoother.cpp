#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "dips/estimators.hpp"
#include "dips/simulation.hpp"
#include "dips/smoother.hpp"
#include "test_util.hpp"

namespace {

double phi(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

// Direct evaluation of the kernel ratio at one point, straight from the formula.
double ratio_oracle(const Eigen::MatrixXd& s, const Eigen::VectorXi& t, int k, double x0, double x1, double h) {
    auto k4 = [](double u) { return 0.5 * (3 - u * u) * phi(u); };
    double num = 0, den = 0;
    for (Eigen::Index j = 0; j < s.rows(); ++j) {
        const double kk = k4((s(j, 0) - x0) / h) * k4((s(j, 1) - x1) / h) / (h * h);
        den += kk;
        if (t[j] == k) num += kk;
    }
    return num / den;
}

}  // namespace

TEST_CASE("kernel values") {
    // (1.5 phi(0))^2 = 9 / (8 pi)
    CHECK(dips::kernel_q4(0, 0) == Catch::Approx(9.0 / (8.0 * std::numbers::pi)).epsilon(1e-15));
    CHECK(dips::kernel_q4(0, 0) == Catch::Approx(0.3580986).epsilon(1e-7));
    CHECK(dips::kernel_q4(0, 0) == Catch::Approx(std::pow(1.5 * phi(0), 2)).epsilon(1e-15));
    for (double u2 : {-2.0, 0.0, 0.7, 5.0}) CHECK(dips::kernel_q4(std::sqrt(3.0), u2) == Catch::Approx(0.0).margin(1e-16));
    for (auto [a, b] : {std::pair{0.3, -1.2}, std::pair{2.5, 0.1}, std::pair{-0.8, -0.4}}) {
        CHECK(dips::kernel_q4(a, b) == dips::kernel_q4(-a, -b));
        CHECK(dips::kernel_q4(a, b) == dips::kernel_q4(b, a));
    }
}

TEST_CASE("kernel moments by 2-D quadrature") {
    const double step = 0.01;
    const int m = 1600;
    double m0 = 0, m1 = 0, m11 = 0, m3 = 0, m12 = 0, m2 = 0, m4 = 0;
    for (int i = 0; i <= m; ++i) {
        const double a = -8 + i * step;
        const double wa = (i == 0 || i == m) ? 0.5 : 1.0;
        for (int j = 0; j <= m; ++j) {
            const double b = -8 + j * step;
            const double wb = (j == 0 || j == m) ? 0.5 : 1.0;
            const double k = dips::kernel_q4(a, b) * wa * wb * step * step;
            m0 += k;
            m1 += a * k;
            m11 += a * b * k;
            m2 += a * a * k;
            m3 += a * a * a * k;
            m12 += a * b * b * k;
            m4 += a * a * a * a * k;
        }
    }
    CHECK(std::abs(m0 - 1) < 1e-6);
    CHECK(std::abs(m1) < 1e-6);
    CHECK(std::abs(m11) < 1e-6);
    CHECK(std::abs(m2) < 1e-6);
    CHECK(std::abs(m3) < 1e-6);
    CHECK(std::abs(m12) < 1e-6);
    CHECK(std::abs(m4 + 3) < 1e-4);
}

TEST_CASE("score transform") {
    const auto z = dips::transform_scores(Eigen::Vector3d(-1, 0, 1));
    CHECK(z[0] == Catch::Approx(0.5 * std::erfc(1 / std::sqrt(2.0))).epsilon(1e-14));
    CHECK(z[0] == Catch::Approx(0.1587).margin(5e-5));
    CHECK(z[1] == 0.5);
    CHECK(z[2] == Catch::Approx(0.8413).margin(5e-5));

    const auto sym = dips::transform_scores(Eigen::Vector4d(-4, -1, 1, 4));
    CHECK(sym[1] + sym[2] == Catch::Approx(1.0).epsilon(1e-15));

    const Eigen::VectorXd raw = testutil::linear_data(100, 1, 3).x.col(0);
    const auto out = dips::transform_scores(raw);
    for (Eigen::Index i = 0; i < 100; ++i) {
        CHECK(out[i] > 0);
        CHECK(out[i] < 1);
        for (Eigen::Index j = 0; j < 100; ++j)
            if (raw[i] < raw[j]) CHECK(out[i] < out[j]);
    }
    const auto plain = dips::transform_scores(raw, dips::ScoreTransform::kStandardize);
    const double m = plain.mean();
    CHECK(std::abs(std::sqrt((plain.array() - m).square().sum() / 99) - 1) < 1e-8);

    CHECK_THROWS_WITH(dips::transform_scores(Eigen::Vector3d(2, 2, 2)), Catch::Matchers::ContainsSubstring("degenerate score"));
}

TEST_CASE("plug-in bandwidth") {
    CHECK(dips::plugin_bandwidth(1000000, 1.0) == Catch::Approx(0.1).epsilon(1e-12));
    CHECK(dips::plugin_bandwidth(1000, 1.0) == Catch::Approx(0.3162).margin(5e-5));
    CHECK(dips::plugin_bandwidth(1000, 2.0) == Catch::Approx(2 * dips::plugin_bandwidth(1000, 1.0)).epsilon(1e-15));
}

TEST_CASE("dips_pi hand instances") {
    SECTION("identical scores give the arm proportion") {
        const Eigen::MatrixXd s = Eigen::MatrixXd::Constant(5, 2, 0.4);
        Eigen::VectorXi t(5);
        t << 1, 0, 1, 1, 0;
        const auto pi = dips::dips_pi(s, s, t, 1, 0.2);
        for (Eigen::Index i = 0; i < 5; ++i) CHECK(pi[i] == Catch::Approx(0.6).epsilon(1e-14));
    }
    SECTION("two tied points with opposite arms") {
        const Eigen::MatrixXd s = Eigen::MatrixXd::Constant(2, 2, 0.3);
        const Eigen::Vector2i t(1, 0);
        CHECK(dips::dips_pi(s, s, t, 1, 0.5)[0] == Catch::Approx(0.5).epsilon(1e-15));
    }
    SECTION("three points against direct evaluation") {
        const double h = 0.3;
        Eigen::MatrixXd s(3, 2);
        s << 0, 0, h, 0, 0, h;
        const Eigen::Vector3i t(1, 0, 1);
        Eigen::MatrixXd at(1, 2);
        at << 0, 0;
        // K(0,0) at the two arm-1 points' offsets vs one arm-0 point.
        const double k00 = std::pow(1.5 * phi(0), 2), k10 = 0.5 * (3 - 1) * phi(1) * 1.5 * phi(0);
        CHECK(dips::dips_pi(at, s, t, 1, h)[0] == Catch::Approx((k00 + k10) / (k00 + 2 * k10)).epsilon(1e-13));
        CHECK(dips::dips_pi(at, s, t, 1, h)[0] == Catch::Approx(ratio_oracle(s, t, 1, 0, 0, h)).epsilon(1e-13));
    }
    SECTION("vanishing denominator is an error") {
        Eigen::MatrixXd s(2, 2);
        s << 0, 0, 1, 1;
        Eigen::MatrixXd far(1, 2);
        far << 100, 100;
        CHECK_THROWS_WITH(dips::dips_pi(far, s, Eigen::Vector2i(1, 0), 1, 0.1),
                          Catch::Matchers::ContainsSubstring("evaluation point 0"));
    }
}

TEST_CASE("dips_pi matches the formula on random data and is thread-independent") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u;
    Eigen::MatrixXd s(200, 2);
    Eigen::VectorXi t(200);
    for (Eigen::Index i = 0; i < 200; ++i) {
        s(i, 0) = u(rng);
        s(i, 1) = u(rng);
        t[i] = u(rng) < s(i, 0) ? 1 : 0;
    }
    const auto one = dips::dips_pi(s, s, t, 1, 0.25, nullptr, 1);
    const auto many = dips::dips_pi(s, s, t, 1, 0.25, nullptr, 4);
    CHECK(one == many);
    for (Eigen::Index i = 0; i < 200; i += 17) CHECK(one[i] == Catch::Approx(ratio_oracle(s, t, 1, s(i, 0), s(i, 1), 0.25)).epsilon(1e-12));
}

TEST_CASE("tiny bandwidth recovers each point's own label") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u;
    Eigen::MatrixXd s(30, 2);
    Eigen::VectorXi t(30);
    for (Eigen::Index i = 0; i < 30; ++i) {
        s(i, 0) = i / 30.0 + 1e-3 * u(rng);
        s(i, 1) = u(rng);
        t[i] = static_cast<int>(i % 3 == 0);
    }
    const auto pi = dips::dips_pi(s, s, t, 1, 1e-4);
    for (Eigen::Index i = 0; i < 30; ++i) CHECK(pi[i] == Catch::Approx(t[i]).margin(1e-12));
}

namespace {

struct Fitted {
    dips::Dataset d;
    dips::WorkingModels wm;
};

Fitted scenario_fit(std::uint64_t rep, bool arm_specific = false) {
    dips::ScenarioConfig cfg;
    cfg.n = 1000;
    cfg.p = 15;
    dips::EstimatorConfig ec;
    ec.arm_specific_slopes = arm_specific;
    const auto d = dips::standardize(dips::gen_scenario(cfg, static_cast<int>(rep)).data).data;
    return {d, dips::fit_working_models(d, ec, Eigen::VectorXd::Ones(d.n()))};
}

}  // namespace

TEST_CASE("main-effects model: pi1 + pi0 = 1; arm-specific slopes: generally not") {
    const auto f = scenario_fit(3);
    const auto model = dips::build_dips(f.d, f.wm.ps, {&f.wm.outcome_for_arm(0), &f.wm.outcome_for_arm(1)});
    CHECK(((model.estimates.pi1 + model.estimates.pi0).array() - 1).abs().maxCoeff() < 1e-10);
    CHECK(model.scores[0].bandwidth == model.scores[1].bandwidth);

    const auto g = scenario_fit(3, true);
    const auto split = dips::build_dips(g.d, g.wm.ps, {&g.wm.outcome_for_arm(0), &g.wm.outcome_for_arm(1)});
    CHECK(((split.estimates.pi1 + split.estimates.pi0).array() - 1).abs().maxCoeff() > 1e-6);
}

TEST_CASE("increasing affine maps of a score leave the estimates unchanged") {
    const auto f = scenario_fit(4);
    const Eigen::VectorXd sa = f.d.x * f.wm.ps.coef, sb = f.d.x * f.wm.outcome[0].coef;
    auto pis = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        Eigen::MatrixXd s(a.size(), 2);
        s.col(0) = dips::transform_scores(a);
        s.col(1) = dips::transform_scores(b);
        return dips::dips_pi(s, s, f.d.t, 1, 0.3);
    };
    const auto base = pis(sa, sb);
    const auto moved = pis((3.7 * sa).array() - 2.5, (0.2 * sb).array() + 11.0);
    CHECK((base - moved).cwiseAbs().maxCoeff() < 1e-12);

    // Scaling the fitted slopes themselves, through the whole builder.
    dips::GlmFit ps = f.wm.ps;
    ps.coef *= 4.0;
    ps.intercept += 3.0;
    const auto a = dips::build_dips(f.d, f.wm.ps, {&f.wm.outcome[0], &f.wm.outcome[0]});
    const auto b = dips::build_dips(f.d, ps, {&f.wm.outcome[0], &f.wm.outcome[0]});
    CHECK((a.estimates.pi1 - b.estimates.pi1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("null working models give the arm-1 proportion everywhere") {
    const auto d = testutil::linear_data(50, 3, 12);
    dips::GlmFit null_fit;
    null_fit.coef = Eigen::VectorXd::Zero(3);
    const auto model = dips::build_dips(d, null_fit, {&null_fit, &null_fit});
    const double share = d.t.cast<double>().mean();
    CHECK((model.estimates.pi1.array() - share).abs().maxCoeff() < 1e-14);
    CHECK(model.notes.size() == 4);
}

TEST_CASE("one constant score falls back to one-dimensional smoothing") {
    const auto d = testutil::linear_data(80, 3, 13);
    dips::GlmFit ps, om;
    ps.coef = Eigen::Vector3d(1, 0, 0);
    om.coef = Eigen::VectorXd::Zero(3);
    const auto model = dips::build_dips(d, ps, {&om, &om});
    REQUIRE(model.scores[1].smoothing_inputs().cols() == 1);
    const Eigen::MatrixXd s1 = model.scores[1].transformed.leftCols(1);
    const auto k1 = dips::kernel_sums(s1, s1, d.t, model.scores[1].bandwidth);
    for (Eigen::Index i = 0; i < 80; i += 9) {
        double num = 0, den = 0;
        for (Eigen::Index j = 0; j < 80; ++j) {
            const double k = dips::kernel_q4_1d((s1(j, 0) - s1(i, 0)) / model.scores[1].bandwidth);
            den += k;
            if (d.t[j] == 1) num += k;
        }
        CHECK(model.estimates.pi1[i] == Catch::Approx(num / den).epsilon(1e-12));
        CHECK(k1.treated[i] / k1.total[i] == Catch::Approx(num / den).epsilon(1e-12));
    }
}

TEST_CASE("plug-in bandwidth uses the transformed score scale") {
    const auto f = scenario_fit(5);
    const auto model = dips::build_dips(f.d, f.wm.ps, {&f.wm.outcome[0], &f.wm.outcome[0]});
    const auto& sc = model.scores[1];
    double var = 0;
    for (int c = 0; c < 2; ++c) {
        const auto col = sc.transformed.col(c);
        var += (col.array() - col.mean()).square().sum() / (col.size() - 1);
    }
    CHECK(sc.bandwidth == Catch::Approx(std::sqrt(var / 2) * std::pow(1000.0, -1.0 / 6)).epsilon(1e-12));
    CHECK(sc.transformed.minCoeff() > 0);
    CHECK(sc.transformed.maxCoeff() < 1);
}

TEST_CASE("estimates are continuous in the bandwidth") {
    const auto f = scenario_fit(6);
    const auto base = dips::build_dips(f.d, f.wm.ps, {&f.wm.outcome[0], &f.wm.outcome[0]});
    const double h = base.scores[1].bandwidth;
    dips::SmootherOptions a, b;
    a.bandwidth = h;
    b.bandwidth = 1.0001 * h;
    const auto pa = dips::build_dips(f.d, f.wm.ps, {&f.wm.outcome[0], &f.wm.outcome[0]}, a);
    const auto pb = dips::build_dips(f.d, f.wm.ps, {&f.wm.outcome[0], &f.wm.outcome[0]}, b);
    CHECK(pa.estimates.pi1 == base.estimates.pi1);
    CHECK((pa.estimates.pi1 - pb.estimates.pi1).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("negative smoothed propensities are rare") {
    int worst = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
        const auto f = scenario_fit(rep);
        const auto model = dips::build_dips(f.d, f.wm.ps, {&f.wm.outcome[0], &f.wm.outcome[0]});
        worst = std::max(worst, model.estimates.negative_count);
        CHECK(model.estimates.negative_count / 2000.0 < 0.05);
    }
    INFO("largest negative count " << worst);
    SUCCEED();
}
