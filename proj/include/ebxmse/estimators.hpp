#pragma once

#include <optional>
#include <string>

#include "ebxmse/kernels.hpp"
#include "ebxmse/linmodel.hpp"
#include "ebxmse/optim.hpp"

namespace ebxmse {

enum class Method { EB, SUREy, GCV };

Method parse_method(const std::string &s);
std::string method_name(Method m);

struct HyperEstimatorSpec {
    Method method = Method::EB;
    double alpha = 1.0;
    KernelPtr kernel;
    OptimizerSettings optimizer;

    void validate() const;
};

struct EstimateResult {
    Vec theta_hat;
    std::optional<Vec> eta_hat;  // absent for ML
    double cost_value = 0.0;
    int iterations = 0;
    bool on_boundary = false;
};

/// Least squares through a column-pivoted QR of Phi.
Vec ml_estimate(const ExperimentData &data);
/// Least squares from the Gram matrix (Cholesky). Used inside Monte Carlo loops.
Vec ml_estimate(const SufficientStats &stats);

/// [G + sigma2 P^-1]^-1 Phi'Y, computed as L (sigma2 I + L'GL)^-1 L'Phi'Y with P = LL'.
Vec regularized_estimate(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double sigma2);
Vec regularized_estimate(const ExperimentData &data, const KernelModel &kernel, const Vec &eta, double sigma2);
/// Same estimate from (G, theta_ml): theta_ml - sigma2 G^-1 S^-1 theta_ml, S = P + sigma2 G^-1.
Vec regularized_estimate_mss(const Mat &gram, const Vec &theta_ml, const KernelModel &kernel, const Vec &eta,
                             double sigma2);

/// Output-form costs, evaluated with n x n factorizations only.
double cost_eb(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha, double sigma2);
double cost_surey(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha,
                  double sigma2);
/// Throws NumericError when Tr H >= N.
double cost_gcv(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha,
                double sigma2);
double cost(Method m, const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha,
            double sigma2);

/// theta' S^-1 theta + alpha log det S.
double mss_cost_eb(const Mat &gram, const Vec &theta, const KernelModel &kernel, const Vec &eta, double alpha,
                   double sigma2);
/// sigma^4 theta' S^-1 G^-1 S^-1 theta - 2 alpha sigma^4 Tr[G^-1 S^-1].
double mss_cost_y(const Mat &gram, const Vec &theta, const KernelModel &kernel, const Vec &eta, double alpha,
                  double sigma2);
/// EB -> mss_cost_eb; SUREy and GCV -> mss_cost_y.
double mss_cost(Method m, const Mat &gram, const Vec &theta, const KernelModel &kernel, const Vec &eta,
                double alpha, double sigma2);

/// argmin over the kernel box of the output-form cost.
OptimResult tune_hyperparams(const SufficientStats &stats, const HyperEstimatorSpec &spec, double sigma2);
/// argmin of the MSS-form cost with theta_ml replaced by `theta`.
OptimResult tune_hyperparams_mss(const Mat &gram, const Vec &theta, const HyperEstimatorSpec &spec, double sigma2);

EstimateResult estimate(const SufficientStats &stats, const HyperEstimatorSpec &spec, double sigma2);
EstimateResult estimate_ml(const SufficientStats &stats);

}  // namespace ebxmse
