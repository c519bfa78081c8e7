#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ebxmse/mc.hpp"

using namespace ebxmse;

namespace {

McConfig small_config(std::uint64_t seed, int runs) {
    McConfig c;
    Rng r(seed, 999);
    c.spec.theta0 = r.normal_vec(5);
    c.spec.sigma2 = 1.0;
    c.u = r.normal_vec(40);
    c.runs = runs;
    c.base_seed = seed;
    for (Method m : {Method::EB, Method::SUREy, Method::GCV}) {
        HyperEstimatorSpec h;
        h.method = m;
        h.kernel = make_ss_fixed_gamma(5, 0.9);
        c.estimators.push_back(h);
    }
    return c;
}

}  // namespace

TEST_CASE("acc metric") {
    CHECK(acc_metric(0.3, 0.3) == doctest::Approx(100.0));
    CHECK(acc_metric(0.0, 0.3) == doctest::Approx(0.0));
    CHECK(acc_metric(0.6, 0.3) == doctest::Approx(0.0));
    CHECK(acc_metric(-0.3, 0.3) == doctest::Approx(-100.0));
    CHECK_THROWS_AS(acc_metric(1.0, 0.0), NumericError);
}

TEST_CASE("determinism and exact closure") {
    const McConfig c = small_config(3, 30);
    const McReport a = run_mc(c);
    const McReport b = run_mc(c);
    REQUIRE(a.estimators.size() == 4);
    CHECK(a.estimators[0].name == "ml");
    for (std::size_t j = 0; j < a.estimators.size(); ++j) {
        CHECK(a.estimators[j].se == b.estimators[j].se);
        CHECK(a.estimators[j].sample_mse == b.estimators[j].sample_mse);
    }
    for (std::size_t j = 1; j < a.estimators.size(); ++j) {
        const auto &e = a.estimators[j];
        REQUIRE(e.upsilon.has_value());
        const Upsilon &u = *e.upsilon;
        const double sum = u.bias_sq + u.var_trace + u.varhpe_trace + u.hot_trace;
        CHECK(sum == doctest::Approx(*e.sample_delta_mse).epsilon(1e-12));
        CHECK(*e.sample_delta_mse == doctest::Approx(e.sample_mse - a.estimators[0].sample_mse).epsilon(1e-12));
        CHECK(u.closure_residual == doctest::Approx(u.hot_definitional - u.hot_trace));
    }
}

TEST_CASE("one run: sample MSE is the single SE") {
    const McReport r = run_mc(small_config(4, 1));
    for (const auto &e : r.estimators) {
        REQUIRE(e.se.size() == 1);
        CHECK(e.sample_mse == e.se[0]);
    }
}

TEST_CASE("noise hook off: ML is exact") {
    McConfig c = small_config(5, 5);
    c.noise_scale = 0.0;
    const McReport r = run_mc(c);
    CHECK(r.estimators[0].sample_mse < 1e-20);
    for (const auto &e : r.estimators) { CHECK(std::isfinite(e.sample_mse)); }
}

TEST_CASE("repeated stream: zero sample covariances") {
    McConfig c = small_config(6, 2);
    c.repeat_first_stream = true;
    const McReport r = run_mc(c);
    for (std::size_t j = 1; j < r.estimators.size(); ++j) {
        CHECK(r.estimators[j].upsilon->var_trace == 0.0);
        CHECK(r.estimators[j].upsilon->varhpe_trace == 0.0);
    }
}

TEST_CASE("fixed hyper-parameter: no VarHPE term") {
    Rng r(7);
    std::vector<Vec> ml, tr;
    for (int i = 0; i < 50; ++i) {
        ml.push_back(r.normal_vec(3));
        tr.push_back(0.7 * ml.back());
    }
    const Upsilon u = decompose_upsilon(ml, tr, tr, Vec::Zero(3));
    CHECK(u.varhpe_trace == 0.0);
    CHECK_THROWS_AS(decompose_upsilon({ml[0]}, {tr[0]}, {tr[0]}, Vec::Zero(3)), ConfigError);
}

TEST_CASE("ML sample MSE matches sigma2 Tr[(Phi'Phi)^-1]") {
    McConfig c;
    Rng r(8);
    c.spec.theta0 = r.normal_vec(4);
    c.spec.sigma2 = 0.5;
    c.u = r.normal_vec(30);
    c.runs = 10000;
    c.base_seed = 8;
    const McReport rep = run_mc(c);
    const Mat phi = build_regressor(c.u, 4);
    const double expect = c.spec.sigma2 * (phi.transpose() * phi).inverse().trace();
    CHECK(std::abs(rep.estimators[0].sample_mse / expect - 1.0) < 0.03);
}

TEST_CASE("fixed-eta MSE difference times N^2 approaches the limit") {
    const Eigen::Index n = 3, N = 4000;
    Rng r(9);
    SystemSpec s;
    s.theta0 = Vec::LinSpaced(n, 1.0, 0.3);
    s.sigma2 = 1.0;
    const Vec u = r.normal_vec(N);
    const Mat phi = build_regressor(u, n);
    const KernelPtr k = std::make_shared<ScaledKernel>(ss_matrix(n, 1.0, 0.8), "k");
    const Vec eta = Vec::Constant(1, 200.0);
    const auto ctx = exact_context(phi.transpose() * phi / static_cast<double>(N), s);
    const double limit = fixed_eta_xmse(k, eta, ctx);

    const int M = 4000;
    std::vector<double> d;
    for (int i = 0; i < M; ++i) {
        Rng ri(10, static_cast<std::uint64_t>(i));
        const ExperimentData data = simulate(s, u, ri);
        const SufficientStats st = sufficient_stats(data);
        const Vec ml = ml_estimate(st);
        const Vec tr = regularized_estimate(st, *k, eta, s.sigma2);
        d.push_back((squared_error(tr, s.theta0) - squared_error(ml, s.theta0)) * double(N) * double(N));
    }
    double m = 0.0;
    for (double x : d) { m += x; }
    m /= M;
    double v = 0.0;
    for (double x : d) { v += (x - m) * (x - m); }
    const double se = std::sqrt(v / (M - 1) / M);
    CHECK(std::abs(m - limit) < 3.0 * se);
}
