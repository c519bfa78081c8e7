#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ebxmse/estimators.hpp"

using namespace ebxmse;

namespace {

ExperimentData make_data(Rng &r, Eigen::Index n, Eigen::Index N, double sigma2) {
    SystemSpec s;
    s.theta0 = r.normal_vec(n);
    s.sigma2 = sigma2;
    return simulate(s, r.normal_vec(N), r);
}

ExperimentData scalar_data(double y) {
    ExperimentData d;
    d.u = Vec::Ones(1);
    d.phi = Mat::Ones(1, 1);
    d.y = Vec::Constant(1, y);
    return d;
}

Mat random_spd(Rng &r, Eigen::Index n) {
    const Mat X = r.normal_vec(n * n).reshaped(n, n);
    return X * X.transpose() + 0.3 * Mat::Identity(n, n);
}

}  // namespace

TEST_CASE("ml estimate: identity design, noiseless, normal equations") {
    ExperimentData d;
    d.phi = Mat::Identity(3, 3);
    d.y = Vec::LinSpaced(3, 1, 3);
    CHECK((ml_estimate(d) - d.y).norm() < 1e-14);

    Rng r(1);
    SystemSpec s;
    s.theta0 = r.normal_vec(5);
    const ExperimentData clean = simulate_with_noise(s, r.normal_vec(30), Vec::Zero(30));
    CHECK((ml_estimate(clean) - s.theta0).norm() / s.theta0.norm() < 1e-10);

    const ExperimentData noisy = make_data(r, 6, 40, 0.5);
    const Vec ne = (noisy.phi.transpose() * noisy.phi).ldlt().solve(noisy.phi.transpose() * noisy.y);
    CHECK((ml_estimate(noisy) - ne).norm() / ne.norm() < 1e-8);
    CHECK((ml_estimate(sufficient_stats(noisy)) - ne).norm() / ne.norm() < 1e-8);

    ExperimentData bad;
    bad.phi = Mat::Zero(4, 2);
    bad.y = Vec::Ones(4);
    CHECK_THROWS_AS(ml_estimate(bad), NumericError);
}

TEST_CASE("regularized estimate: limits and the two computation routes") {
    Rng r(2);
    const ExperimentData d = make_data(r, 5, 30, 1.0);
    const SsKernel k(5);
    Vec eta(2);
    eta << 1.0, 0.8;
    const Vec ml = ml_estimate(d);
    CHECK((regularized_estimate(d, k, eta, 1e-14) - ml).norm() / ml.norm() < 1e-8);

    const ScaledKernel sk(random_spd(r, 5), "k");
    CHECK((regularized_estimate(d, sk, Vec::Constant(1, 1e8), 1.0) - ml).norm() / ml.norm() < 1e-5);

    for (int i = 0; i < 10; ++i) {
        const ExperimentData di = make_data(r, 5, 25, r.uniform(0.1, 2.0));
        Vec e(2);
        e << std::exp(r.uniform(-2, 2)), r.uniform(0.3, 0.95);
        const SufficientStats st = sufficient_stats(di);
        const Vec direct = regularized_estimate(st, k, e, 0.7);
        const Vec mss = regularized_estimate_mss(st.gram, ml_estimate(di), k, e, 0.7);
        CHECK((direct - mss).norm() / direct.norm() < 1e-8);
        // the explicit normal-equation form
        const Vec ref = (st.gram + 0.7 * k.P(e).inverse()).ldlt().solve(st.phity);
        CHECK((direct - ref).norm() / ref.norm() < 1e-8);
    }
}

TEST_CASE("scalar EB cost and its closed-form minimizer") {
    const ScaledKernel k(Mat::Identity(1, 1), "one", 1e-8, 1e8);
    const SufficientStats st = sufficient_stats(scalar_data(3.0));
    for (double eta : {0.1, 1.0, 7.0}) {
        for (double alpha : {0.5, 1.0, 2.0}) {
            const double expect = 9.0 / (eta + 1.0) + alpha * std::log(eta + 1.0);
            CHECK(cost_eb(st, k, Vec::Constant(1, eta), alpha, 1.0) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    HyperEstimatorSpec spec;
    spec.kernel = std::make_shared<ScaledKernel>(Mat::Identity(1, 1), "one");
    spec.alpha = 1.5;
    const OptimResult o = tune_hyperparams(st, spec, 1.0);
    CHECK(o.x[0] == doctest::Approx(9.0 / 1.5 - 1.0).epsilon(1e-6));
}

TEST_CASE("scalar SUREy and GCV hand values") {
    const ScaledKernel k(Mat::Identity(1, 1), "one");
    const SufficientStats st = sufficient_stats(scalar_data(2.0));
    const double eta = 3.0, h = eta / (eta + 1.0), r = 2.0 * (1.0 - h);
    CHECK(cost_surey(st, k, Vec::Constant(1, eta), 1.2, 1.0) == doctest::Approx(r * r + 2 * 1.2 * h).epsilon(1e-12));
    const double rss = r * r;
    CHECK(cost_gcv(st, k, Vec::Constant(1, eta), 0.0, 1.0) == doctest::Approx(rss).epsilon(1e-12));
    const double d = 1.0 - h;
    CHECK(cost_gcv(st, k, Vec::Constant(1, eta), 1.0, 1.0) ==
          doctest::Approx(rss + rss * (1.0 / (d * d) - 1.0)).epsilon(1e-12));
}

TEST_CASE("GCV: degenerate smoothing and vanishing penalty") {
    // N = n: Tr H -> N as P^-1 -> 0
    ExperimentData d;
    d.phi = Mat::Identity(2, 2);
    d.y = Vec::Ones(2);
    const ScaledKernel k(Mat::Identity(2, 2), "I", 1e-8, 1e30);
    CHECK_THROWS_AS(cost_gcv(sufficient_stats(d), k, Vec::Constant(1, 1e20), 1.0, 1.0), NumericError);

    // P^-1 -> 0: SUREy cost -> RSS_ml + 2 alpha sigma2 n
    Rng r(3);
    const ExperimentData e = make_data(r, 4, 30, 1.0);
    const SufficientStats st = sufficient_stats(e);
    const Vec ml = ml_estimate(e);
    const double rss = (e.y - e.phi * ml).squaredNorm();
    const ScaledKernel k4(Mat::Identity(4, 4), "I", 1e-8, 1e30);
    CHECK(cost_surey(st, k4, Vec::Constant(1, 1e12), 0.8, 1.0) == doctest::Approx(rss + 2 * 0.8 * 4).epsilon(1e-6));
    // Tr H = 0 as P -> 0: braces term vanishes
    CHECK(cost_gcv(st, k4, Vec::Constant(1, 1e-8), 1.0, 1.0) ==
          doctest::Approx(cost_gcv(st, k4, Vec::Constant(1, 1e-8), 0.0, 1.0)).epsilon(1e-6));
}

TEST_CASE("output-form costs agree with direct N x N evaluation") {
    Rng r(4);
    const ExperimentData d = make_data(r, 4, 12, 0.6);
    const SufficientStats st = sufficient_stats(d);
    const SsKernel k(4);
    Vec eta(2);
    eta << 2.0, 0.7;
    const Mat P = k.P(eta);
    const Mat Q = d.phi * P * d.phi.transpose() + 0.6 * Mat::Identity(12, 12);
    const Mat H = d.phi * P * d.phi.transpose() * Q.inverse();
    const double alpha = 1.3;
    const double eb = d.y.dot(Q.ldlt().solve(d.y)) + alpha * std::log(Q.determinant());
    const Vec res = d.y - H * d.y;
    const double sy = res.squaredNorm() + 2 * alpha * 0.6 * H.trace();
    const double dd = 1.0 - H.trace() / 12.0;
    const double gcv = res.squaredNorm() + alpha * res.squaredNorm() * (1.0 / (dd * dd) - 1.0);
    CHECK(cost_eb(st, k, eta, alpha, 0.6) == doctest::Approx(eb).epsilon(1e-9));
    CHECK(cost_surey(st, k, eta, alpha, 0.6) == doctest::Approx(sy).epsilon(1e-9));
    CHECK(cost_gcv(st, k, eta, alpha, 0.6) == doctest::Approx(gcv).epsilon(1e-9));
}

TEST_CASE("EB: output form and MSS form differ by a constant") {
    Rng r(5);
    const ExperimentData d = make_data(r, 5, 40, 1.0);
    const SufficientStats st = sufficient_stats(d);
    const Vec ml = ml_estimate(d);
    const SsKernel k(5);
    const double alpha = 1.0;
    double first = std::numeric_limits<double>::quiet_NaN();
    for (double c : {0.01, 0.3, 2.0, 40.0}) {
        for (double g : {0.3, 0.7, 0.95}) {
            Vec eta(2);
            eta << c, g;
            const double diff = cost_eb(st, k, eta, alpha, 1.0) - mss_cost_eb(st.gram, ml, k, eta, alpha, 1.0);
            if (std::isnan(first)) { first = diff; }
            CHECK(diff == doctest::Approx(first).epsilon(1e-6));
        }
    }
    HyperEstimatorSpec spec;
    spec.kernel = std::make_shared<SsKernel>(5);
    const Vec a = tune_hyperparams(st, spec, 1.0).x;
    const Vec b = tune_hyperparams_mss(st.gram, ml, spec, 1.0).x;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-4 * a.cwiseAbs().maxCoeff());
}

TEST_CASE("SUREy: MC mean matches the prediction risk plus constant") {
    // E[cost_surey] at alpha=1 equals E||Phi theta_TR - Phi theta0||^2 + N sigma2
    Rng r(6);
    SystemSpec s;
    s.theta0 = r.normal_vec(3);
    s.sigma2 = 1.0;
    const Vec u = r.normal_vec(15);
    const ScaledKernel k(Mat::Identity(3, 3), "I");
    const Vec eta = Vec::Constant(1, 0.5);
    double c_sum = 0.0, risk_sum = 0.0;
    const int M = 10000;
    std::vector<double> diffs;
    for (int i = 0; i < M; ++i) {
        Rng ri(100, static_cast<std::uint64_t>(i));
        const ExperimentData d = simulate(s, u, ri);
        const SufficientStats st = sufficient_stats(d);
        const double c = cost_surey(st, k, eta, 1.0, s.sigma2);
        const double risk = (d.phi * (regularized_estimate(st, k, eta, s.sigma2) - s.theta0)).squaredNorm() +
                            15.0 * s.sigma2;
        c_sum += c;
        risk_sum += risk;
        diffs.push_back(c - risk);
    }
    double m = 0.0;
    for (double x : diffs) { m += x; }
    m /= M;
    double v = 0.0;
    for (double x : diffs) { v += (x - m) * (x - m); }
    const double se = std::sqrt(v / (M - 1) / M);
    CHECK(std::abs(m) < 4.0 * se);
    CHECK(std::abs(c_sum - risk_sum) / risk_sum < 0.02);
}

TEST_CASE("GCV and SUREy: eta-dependent parts agree to o(||(Phi'Phi)^-1||)") {
    // difference of [cost(eta1) - cost(eta2)] between the two criteria, times N, averaged over noise draws
    const ScaledKernel k(ss_matrix(4, 1.0, 0.8), "k");
    SystemSpec s;
    s.theta0 = Vec::LinSpaced(4, 1.0, 0.2);
    const Vec e1 = Vec::Constant(1, 50.0), e2 = Vec::Constant(1, 500.0);
    std::vector<double> scaled;
    for (int N : {100, 400, 1600, 6400, 25600}) {
        double acc = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            Rng r(7, static_cast<std::uint64_t>(rep));
            const ExperimentData d = simulate(s, r.normal_vec(N), r);
            const SufficientStats st = sufficient_stats(d);
            const double g = cost_gcv(st, k, e1, 1.0, 1.0) - cost_gcv(st, k, e2, 1.0, 1.0);
            const double y = cost_surey(st, k, e1, 1.0, 1.0) - cost_surey(st, k, e2, 1.0, 1.0);
            acc += std::abs(g - y) * N;
        }
        scaled.push_back(acc / 20);
    }
    for (std::size_t i = 1; i < scaled.size(); ++i) { CHECK(scaled[i] < scaled[i - 1]); }
    MESSAGE("N * |gap|: " << scaled.front() << " -> " << scaled.back());
    CHECK(scaled.back() < scaled.front() / 4.0);
}

TEST_CASE("estimate: boundary flag, determinism, validation") {
    Rng r(8);
    const ExperimentData d = make_data(r, 4, 30, 1.0);
    const SufficientStats st = sufficient_stats(d);
    HyperEstimatorSpec spec;
    spec.kernel = make_ss_fixed_gamma(4, 0.9);
    spec.method = Method::SUREy;
    const EstimateResult a = estimate(st, spec, 1.0);
    const EstimateResult b = estimate(st, spec, 1.0);
    CHECK(a.theta_hat == b.theta_hat);
    CHECK(*a.eta_hat == *b.eta_hat);
    CHECK(spec.kernel->box().contains(*a.eta_hat));
    CHECK_FALSE(estimate_ml(st).eta_hat.has_value());

    spec.alpha = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    CHECK(parse_method("GCV") == Method::GCV);
    CHECK(parse_method("sy") == Method::SUREy);
    CHECK_THROWS_AS(parse_method("press"), ConfigError);
}
