#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ebxmse/kernels.hpp"
#include "ebxmse/rng.hpp"

using namespace ebxmse;

namespace {

double max_abs(const Mat &m) { return m.cwiseAbs().maxCoeff(); }

Vec eta2(double a, double b) {
    Vec e(2);
    e << a, b;
    return e;
}

}  // namespace

TEST_CASE("ss entry: hand values and symmetry") {
    CHECK(ss_entry(3, 2, 0.0, 0.7) == 0.0);
    CHECK(ss_entry(1, 1, 1.0, 0.5) == doctest::Approx(1.0 / 24.0).epsilon(1e-12));
    Rng r(2);
    for (int i = 0; i < 20; ++i) {
        const double c = r.uniform(0.1, 5.0), g = r.uniform(0.01, 0.99);
        CHECK(ss_entry(2, 3, c, g) == ss_entry(3, 2, c, g));
    }
    const Mat K = ss_matrix(6, 1.0, 0.8);
    CHECK(max_abs(K - K.transpose()) == 0.0);
    CHECK(K.llt().info() == Eigen::Success);
}

TEST_CASE("ss kernel: derivatives against central differences") {
    const SsKernel k(5);
    const Vec eta = eta2(1.0, 0.5);
    const KernelEval ev = k.evaluate(eta);
    const double h = 1e-5;
    for (int j = 0; j < 2; ++j) {
        const Vec e = Vec::Unit(2, j) * h;
        const Mat fd = (k.P(eta + e) - k.P(eta - e)) / (2 * h);
        CHECK(max_abs(ev.dP[j] - fd) < 1e-6);
        for (int l = 0; l < 2; ++l) {
            const Mat fd2 = (k.evaluate(eta + e).dP[l] - k.evaluate(eta - e).dP[l]) / (2 * h);
            CHECK(max_abs(ev.d2(j, l) - fd2) < 1e-6);
            CHECK(max_abs(ev.d2(j, l) - ev.d2(l, j)) == 0.0);
        }
        CHECK(max_abs(ev.dP[j] - ev.dP[j].transpose()) == 0.0);
    }
}

TEST_CASE("ss kernel: inverse derivatives against explicit inverses") {
    const SsKernel k(4);
    const Vec eta = eta2(2.0, 0.6);
    const InverseEval iv = inverse_derivatives(k.evaluate(eta));
    const double h = 1e-5;
    auto inv = [&](const Vec &e) { return Mat(k.P(e).inverse()); };
    const double scale = max_abs(iv.inv);
    for (int j = 0; j < 2; ++j) {
        const Vec e = Vec::Unit(2, j) * h;
        CHECK(max_abs(iv.d_inv[j] - (inv(eta + e) - inv(eta - e)) / (2 * h)) < 1e-5 * scale);
        for (int l = 0; l < 2; ++l) {
            const Vec f = Vec::Unit(2, l) * h;
            const Mat fd2 = (inv(eta + e + f) - inv(eta + e - f) - inv(eta - e + f) + inv(eta - e - f)) / (4 * h * h);
            CHECK(max_abs(iv.d2(j, l) - fd2) < 1e-5 * max_abs(iv.d2(j, l)) + 1e-5 * scale);
        }
    }
}

TEST_CASE("scaled and diagonal kernels: exact derivatives") {
    Rng r(8);
    const Mat X = r.normal_vec(16).reshaped(4, 4);
    const Mat K = X * X.transpose() + Mat::Identity(4, 4);
    const ScaledKernel s(K, "k");
    const KernelEval ev = s.evaluate(Vec::Constant(1, 2.5));
    CHECK(ev.dP[0] == K);
    CHECK(max_abs(ev.d2P[0]) == 0.0);
    const InverseEval iv = inverse_derivatives(ev);
    CHECK(max_abs(iv.d_inv[0] + K.inverse() / (2.5 * 2.5)) < 1e-10 * max_abs(K.inverse()));

    const DiagonalKernel d(3);
    Vec eta(3);
    eta << 0.5, 2.0, 4.0;
    const KernelEval dv = d.evaluate(eta);
    const InverseEval di = inverse_derivatives(dv);
    for (int k = 0; k < 3; ++k) {
        CHECK(dv.dP[k] == Mat(Vec::Unit(3, k) * Vec::Unit(3, k).transpose()));
        Mat expect = Mat::Zero(3, 3);
        expect(k, k) = -1.0 / (eta[k] * eta[k]);
        CHECK(max_abs(di.d_inv[k] - expect) < 1e-14);
        for (int l = 0; l < 3; ++l) { CHECK(max_abs(dv.d2(k, l)) == 0.0); }
    }
}

TEST_CASE("inverse identities at interior points") {
    const SsKernel k(8);
    Rng r(3);
    for (int i = 0; i < 10; ++i) {
        const Vec eta = eta2(std::exp(r.uniform(-3, 3)), r.uniform(0.2, 0.95));
        const KernelEval ev = k.evaluate(eta);
        const InverseEval iv = inverse_derivatives(ev);
        const Mat I = Mat::Identity(8, 8);
        CHECK((ev.P * iv.inv - I).norm() / I.norm() < 1e-8);
        for (int j = 0; j < 2; ++j) {
            const Mat z = ev.P * iv.d_inv[j] + ev.dP[j] * iv.inv;
            CHECK(z.norm() < 1e-8 * (ev.dP[j] * iv.inv).norm());
            CHECK(max_abs(iv.d_inv[j] - iv.d_inv[j].transpose()) == 0.0);
        }
    }
}

TEST_CASE("box checks and kernel parsing") {
    const SsKernel k(3);
    CHECK_THROWS_AS(k.P(eta2(-1.0, 0.5)), ConfigError);
    CHECK_THROWS_AS(k.P(eta2(1.0, 1.0)), ConfigError);
    CHECK(k.box().on_boundary(eta2(1e6, 0.5)));
    CHECK_FALSE(k.box().on_boundary(eta2(1.0, 0.5)));

    CHECK(make_kernel("ss", 4)->dim_eta() == 2);
    CHECK(make_kernel("diag", 4)->dim_eta() == 4);
    const KernelPtr f = make_kernel("ss-fixed-gamma:0.9", 4);
    CHECK(f->dim_eta() == 1);
    CHECK(max_abs(f->P(Vec::Constant(1, 3.0)) - ss_matrix(4, 3.0, 0.9)) < 1e-14);
    const KernelPtr sc = make_kernel("scaled:m", 2, [](const std::string &) { return Mat(Mat::Identity(2, 2)); });
    CHECK(sc->P(Vec::Constant(1, 2.0)) == Mat(2.0 * Mat::Identity(2, 2)));
    CHECK_THROWS_AS(make_kernel("tc", 4), ConfigError);
    CHECK_THROWS_AS(make_kernel("ss-fixed-gamma:1.5", 4), ConfigError);
    CHECK_THROWS_AS(spd_factor(-Mat::Identity(2, 2), "m"), NumericError);
}
