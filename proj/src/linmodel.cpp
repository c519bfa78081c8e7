#include "ebxmse/linmodel.hpp"

#include <cmath>
#include <limits>

namespace ebxmse {

void SystemSpec::validate() const {
    require(theta0.size() >= 1, "SystemSpec: n must be >= 1");
    require(sigma2 > 0.0 && std::isfinite(sigma2), "SystemSpec: sigma2 must be positive and finite");
    require(theta0.allFinite(), "SystemSpec: theta0 must be finite");
}

Mat build_regressor(const Vec &u, Eigen::Index n) {
    require(n >= 1, "build_regressor: n must be >= 1");
    require(u.size() >= 1, "build_regressor: empty input");
    require(u.allFinite(), "build_regressor: non-finite input");
    const Eigen::Index N = u.size();
    Mat phi = Mat::Zero(N, n);
    for (Eigen::Index k = 0; k < n && k < N; ++k) {
        phi.col(k).tail(N - k) = u.head(N - k);
    }
    return phi;
}

bool has_full_column_rank(const Mat &phi) {
    if (phi.rows() < phi.cols()) { return false; }
    Eigen::JacobiSVD<Mat> svd(phi);
    const Vec &s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) { return false; }
    const double tol = static_cast<double>(phi.rows()) * std::numeric_limits<double>::epsilon() * s[0];
    return s[s.size() - 1] > tol;
}

ExperimentData simulate_with_noise(const SystemSpec &spec, const Vec &u, const Vec &e) {
    spec.validate();
    require(u.size() >= spec.n(), "simulate: N must be >= n");
    require(e.size() == u.size(), "simulate: noise length must equal N");
    ExperimentData data;
    data.u = u;
    data.phi = build_regressor(u, spec.n());
    data.y = data.phi * spec.theta0 + e;
    return data;
}

ExperimentData simulate(const SystemSpec &spec, const Vec &u, Rng &rng) {
    spec.validate();
    require(u.size() >= spec.n(), "simulate: N must be >= n");
    const Vec e = std::sqrt(spec.sigma2) * rng.normal_vec(u.size());
    return simulate_with_noise(spec, u, e);
}

SufficientStats sufficient_stats(const ExperimentData &data) {
    SufficientStats s;
    s.gram = data.phi.transpose() * data.phi;
    s.phity = data.phi.transpose() * data.y;
    s.yty = data.y.squaredNorm();
    s.N = data.N();
    return s;
}

double estimate_noise_variance(const ExperimentData &data, const Vec &theta_ml) {
    const Eigen::Index N = data.N();
    const Eigen::Index n = data.phi.cols();
    require(N > n, "estimate_noise_variance: requires N > n");
    require(theta_ml.size() == n, "estimate_noise_variance: theta length mismatch");
    return (data.y - data.phi * theta_ml).squaredNorm() / static_cast<double>(N - n);
}

double squared_error(const Vec &theta_hat, const Vec &theta0) {
    require(theta_hat.size() == theta0.size(), "squared_error: length mismatch");
    return (theta_hat - theta0).squaredNorm();
}

double fit_metric(const Vec &theta_hat, const Vec &theta0) {
    require(theta_hat.size() == theta0.size(), "fit_metric: length mismatch");
    const double denom = (theta0.array() - theta0.mean()).matrix().norm();
    if (!(denom > 0.0)) { throw NumericError("fit_metric: theta0 is constant, FIT denominator is zero"); }
    return 100.0 * (1.0 - (theta_hat - theta0).norm() / denom);
}

double sample_snr(const Mat &phi, const Vec &theta, double sigma2) {
    require(sigma2 > 0.0, "sample_snr: sigma2 must be positive");
    const Vec y0 = phi * theta;
    require(y0.size() >= 2, "sample_snr: need at least two samples");
    const double var = (y0.array() - y0.mean()).square().sum() / static_cast<double>(y0.size() - 1);
    return var / sigma2;
}

}  // namespace ebxmse
