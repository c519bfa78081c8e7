#pragma once

#include "ebxmse/rng.hpp"
#include "ebxmse/types.hpp"

namespace ebxmse {

/// Ground truth of an experiment: FIR coefficients, noise variance and order.
struct SystemSpec {
    Vec theta0;
    double sigma2 = 1.0;

    Eigen::Index n() const { return theta0.size(); }
    /// Throws ConfigError unless n >= 1, sigma2 > 0 and theta0 is finite.
    void validate() const;
};

/// One realization: input u(0..N-1), regression matrix and noisy output.
struct ExperimentData {
    Vec u;
    Mat phi;
    Vec y;

    Eigen::Index N() const { return y.size(); }
};

/// Gram quantities; every estimator and cost in this library only needs these.
struct SufficientStats {
    Mat gram;   // Phi' Phi
    Vec phity;  // Phi' Y
    double yty = 0.0;
    Eigen::Index N = 0;
};

/// Lower-triangular Toeplitz regressor. Storage is 0-based: phi(t, k) = u(t - k),
/// which is Phi[t+1, k+1] = u(t - k) in the 1-based indexing of the model
/// y(t) = sum_k g_k u(t - k). Entries with t < k are zero (u(s) = 0 for s < 0).
Mat build_regressor(const Vec &u, Eigen::Index n);

/// Smallest singular value above N * eps * largest singular value.
bool has_full_column_rank(const Mat &phi);

/// y = Phi theta0 + e, e ~ N(0, sigma2 I) drawn from rng.
ExperimentData simulate(const SystemSpec &spec, const Vec &u, Rng &rng);

/// y = Phi theta0 + e with a caller-provided noise vector (test hook, MC replay).
ExperimentData simulate_with_noise(const SystemSpec &spec, const Vec &u, const Vec &e);

SufficientStats sufficient_stats(const ExperimentData &data);

/// ||Y - Phi theta_ml||^2 / (N - n).
double estimate_noise_variance(const ExperimentData &data, const Vec &theta_ml);

double squared_error(const Vec &theta_hat, const Vec &theta0);

/// 100 (1 - ||theta_hat - theta0|| / ||theta0 - mean(theta0)||).
double fit_metric(const Vec &theta_hat, const Vec &theta0);

/// Mean-removed sample variance (1/(N-1)) of the noiseless output, divided by sigma2.
double sample_snr(const Mat &phi, const Vec &theta, double sigma2);

}  // namespace ebxmse
