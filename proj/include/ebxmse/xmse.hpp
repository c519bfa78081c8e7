#pragma once

#include <optional>
#include <string>

#include "ebxmse/estimators.hpp"

namespace ebxmse {

enum class Mode { Exact, Apx };
enum class ApxLevel { SigmaOnly, Full };

Mode parse_mode(const std::string &s);
std::string mode_name(Mode m);
ApxLevel parse_apx_level(const std::string &s);
std::string apx_level_name(ApxLevel l);

/// Limit quantities the XMSE formulas are evaluated against.
/// Exact: Sigma^-1 from the given Sigma. Apx: Sigma^-1 -> N (Phi'Phi)^-1, and at the
/// full level P(eta) -> S(eta) = P(eta) + sigma2 (Phi'Phi)^-1 as well.
struct AsymptoticContext {
    Mat sigma_inv;
    double sigma2 = 1.0;
    Vec theta0;
    Mode mode = Mode::Exact;
    ApxLevel level = ApxLevel::Full;
    Eigen::Index N = 0;   // apx only
    Mat gram;             // apx only

    Eigen::Index n() const { return theta0.size(); }
    /// Kernel the formulas see: the input kernel, or its S(eta) shift in apx/full.
    KernelPtr effective_kernel(const KernelPtr &kernel) const;
};

AsymptoticContext exact_context(const Mat &Sigma, const SystemSpec &spec);
AsymptoticContext apx_context(const Mat &gram, Eigen::Index N, const SystemSpec &spec,
                              ApxLevel level = ApxLevel::Full);
AsymptoticContext apx_context(const ExperimentData &data, const SystemSpec &spec, ApxLevel level = ApxLevel::Full);

/// P(eta) + C for a fixed SPD (or PSD) C; derivatives are those of the base kernel.
class ShiftedKernel final : public KernelModel {
public:
    ShiftedKernel(KernelPtr base, Mat shift);

    Eigen::Index n() const override { return base_->n(); }
    Eigen::Index dim_eta() const override { return base_->dim_eta(); }
    const Box &box() const override { return base_->box(); }
    std::string name() const override { return base_->name() + "+shift"; }
    Mat P(const Vec &eta) const override;
    KernelEval evaluate(const Vec &eta) const override;

private:
    KernelPtr base_;
    Mat shift_;
};

/// Derivatives of log pi(theta | eta) at one (theta, eta).
class PriorModel {
public:
    virtual ~PriorModel() = default;
    virtual Eigen::Index dim_eta() const = 0;
    virtual Vec grad_theta(const Vec &theta, const Vec &eta) const = 0;
    virtual Mat hess_theta(const Vec &theta, const Vec &eta) const = 0;
    /// n x p
    virtual Mat cross_theta_eta(const Vec &theta, const Vec &eta) const = 0;
};

/// theta | eta ~ N(0, P(eta)).
class GaussianPrior final : public PriorModel {
public:
    explicit GaussianPrior(KernelPtr kernel) : kernel_(std::move(kernel)) {}
    Eigen::Index dim_eta() const override { return kernel_->dim_eta(); }
    Vec grad_theta(const Vec &theta, const Vec &eta) const override;
    Mat hess_theta(const Vec &theta, const Vec &eta) const override;
    Mat cross_theta_eta(const Vec &theta, const Vec &eta) const override;

private:
    KernelPtr kernel_;
};

struct BQuantities {
    Vec b_star;         // n
    Mat b_prime_theta;  // n x n
    Mat b_prime_eta;    // n x p
};

struct XmseBreakdown {
    Vec xbias;
    double xvar_trace = 0.0;
    std::optional<double> xvarhpe_trace;
    std::optional<double> xmse_total;
    Vec eta_star;
    std::optional<Mat> A;
    std::optional<Mat> B;
    std::optional<Mat> D_prime;
    BQuantities b;
    Mode mode = Mode::Exact;
    ApxLevel level = ApxLevel::Full;
    std::string method;
    bool certified = false;
    bool on_boundary = false;
};

/// b-quantities from a generic prior.
BQuantities generic_b_quantities(const PriorModel &prior, const AsymptoticContext &ctx, const Vec &eta);
/// Closed-form Gaussian b-quantities: -sigma2 Sigma^-1 P^-1 theta0, -sigma2 Sigma^-1 P^-1,
/// and columns -sigma2 Sigma^-1 (dP^-1/deta_k) theta0. Uses `kernel` as given.
BQuantities gaussian_b_quantities(const KernelModel &kernel, const AsymptoticContext &ctx, const Vec &eta);

/// Assembly from b-quantities. Without D' the estimator is treated as uncertified.
XmseBreakdown assemble_xmse(const BQuantities &b, const AsymptoticContext &ctx, const Vec &eta_star,
                            const std::optional<Mat> &D_prime);
XmseBreakdown generic_xmse(const PriorModel &prior, const AsymptoticContext &ctx, const Vec &eta_star,
                           const std::optional<Mat> &D_prime);

struct LimitCriterion {
    Vec eta_star;
    double value = 0.0;
    Mat A;
    Mat B;
    bool on_boundary = false;
    int iterations = 0;
};

/// W_b = theta' P^-1 theta + alpha log det P.
double w_eb(const KernelModel &kernel, const Vec &theta0, double alpha, const Vec &eta);
/// W_y = sigma^4 theta' P^-1 Sigma^-1 P^-1 theta - 2 alpha sigma^4 Tr(Sigma^-1 P^-1).
double w_y(const KernelModel &kernel, const Vec &theta0, double alpha, double sigma2, const Mat &sigma_inv,
           const Vec &eta);

/// Hessian A (p x p) and cross derivative B (p x n) of W at eta.
std::pair<Mat, Mat> eb_hessians(const KernelModel &kernel, const Vec &theta0, double alpha, const Vec &eta);
std::pair<Mat, Mat> y_hessians(const KernelModel &kernel, const Vec &theta0, double alpha, double sigma2,
                               const Mat &sigma_inv, const Vec &eta);

LimitCriterion limit_criterion_eb(const KernelModel &kernel, const Vec &theta0, double alpha,
                                  const OptimizerSettings &opt = {});
LimitCriterion limit_criterion_y(const KernelModel &kernel, const Vec &theta0, double alpha, double sigma2,
                                 const Mat &sigma_inv, const OptimizerSettings &opt = {});

/// -A^-1 B; nullopt when A is not SPD.
std::optional<Mat> d_prime(const Mat &A, const Mat &B);

XmseBreakdown xmse_regularized(const KernelPtr &kernel, const AsymptoticContext &ctx, Method method, double alpha,
                               const OptimizerSettings &opt = {});

/// sigma^4 ||Sigma^-1 P^-1 theta0||^2 - 2 sigma^4 Tr[Sigma^-2 P^-1].
double fixed_eta_xmse(const KernelPtr &kernel, const Vec &eta, const AsymptoticContext &ctx);

double xvarhpe_closed_scaled(const Mat &K, const Mat &Sigma, const Vec &theta0, double alpha, double sigma2);
double xvarhpe_closed_diag(const Vec &s, const Vec &g, double alpha, double sigma2);

}  // namespace ebxmse
