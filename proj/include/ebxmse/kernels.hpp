#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ebxmse/types.hpp"

namespace ebxmse {

/// Feasible box D_eta. Coordinates flagged log_scale are searched in log space.
struct Box {
    Vec lower;
    Vec upper;
    std::vector<bool> log_scale;

    Eigen::Index dim() const { return lower.size(); }
    bool contains(const Vec &eta) const;
    /// True when some coordinate sits within rel_tol (in search coordinates) of a bound.
    bool on_boundary(const Vec &eta, double rel_tol = 1e-6) const;
};

/// P(eta) with all first and second partial derivatives at one point.
/// d2P is stored row-major: d2P[k * p + l] = d^2 P / d eta_k d eta_l.
struct KernelEval {
    Mat P;
    std::vector<Mat> dP;
    std::vector<Mat> d2P;
    bool on_boundary = false;

    Eigen::Index p() const { return static_cast<Eigen::Index>(dP.size()); }
    const Mat &d2(Eigen::Index k, Eigen::Index l) const { return d2P[static_cast<std::size_t>(k * p() + l)]; }
};

/// Derivatives of M^{-1} for an SPD M(eta), same storage layout as KernelEval.
struct InverseEval {
    Mat inv;
    std::vector<Mat> d_inv;
    std::vector<Mat> d2_inv;

    Eigen::Index p() const { return static_cast<Eigen::Index>(d_inv.size()); }
    const Mat &d2(Eigen::Index k, Eigen::Index l) const { return d2_inv[static_cast<std::size_t>(k * p() + l)]; }
};

/// Parameterized SPD kernel matrix with analytic derivatives. Immutable.
class KernelModel {
public:
    virtual ~KernelModel() = default;

    virtual Eigen::Index n() const = 0;
    virtual Eigen::Index dim_eta() const = 0;
    virtual const Box &box() const = 0;
    virtual std::string name() const = 0;

    virtual Mat P(const Vec &eta) const = 0;
    /// P and its analytic first/second derivatives.
    virtual KernelEval evaluate(const Vec &eta) const = 0;

protected:
    void check_eta(const Vec &eta) const;
};

using KernelPtr = std::shared_ptr<const KernelModel>;

/// Stable spline entry for 1-based (k, l):
/// c (gamma^(k+l+max(k,l)) / 2 - gamma^(3 max(k,l)) / 6).
double ss_entry(int k, int l, double c, double gamma);

/// n x n stable spline matrix.
Mat ss_matrix(Eigen::Index n, double c, double gamma);

/// eta = [c, gamma]. c in [1e-6, 1e6] (log search), gamma in [1e-3, 0.999].
class SsKernel final : public KernelModel {
public:
    explicit SsKernel(Eigen::Index n);
    SsKernel(Eigen::Index n, Box box);

    Eigen::Index n() const override { return n_; }
    Eigen::Index dim_eta() const override { return 2; }
    const Box &box() const override { return box_; }
    std::string name() const override { return "ss"; }
    Mat P(const Vec &eta) const override;
    KernelEval evaluate(const Vec &eta) const override;

private:
    Eigen::Index n_;
    Box box_;
};

/// P(eta) = eta K with fixed SPD K; scalar eta.
class ScaledKernel final : public KernelModel {
public:
    ScaledKernel(Mat K, std::string name, double lower = 1e-8, double upper = 1e8);

    Eigen::Index n() const override { return K_.rows(); }
    Eigen::Index dim_eta() const override { return 1; }
    const Box &box() const override { return box_; }
    std::string name() const override { return name_; }
    const Mat &K() const { return K_; }
    Mat P(const Vec &eta) const override;
    KernelEval evaluate(const Vec &eta) const override;

private:
    Mat K_;
    std::string name_;
    Box box_;
};

/// P(eta) = diag(eta), eta in R^n_+.
class DiagonalKernel final : public KernelModel {
public:
    explicit DiagonalKernel(Eigen::Index n, double lower = 1e-8, double upper = 1e8);

    Eigen::Index n() const override { return n_; }
    Eigen::Index dim_eta() const override { return n_; }
    const Box &box() const override { return box_; }
    std::string name() const override { return "diag"; }
    Mat P(const Vec &eta) const override;
    KernelEval evaluate(const Vec &eta) const override;

private:
    Eigen::Index n_;
    Box box_;
};

/// SS kernel with gamma held fixed, scalar eta = c: a ScaledKernel with K = SS(1, gamma).
KernelPtr make_ss_fixed_gamma(Eigen::Index n, double gamma);

/// Parses "ss", "ss-fixed-gamma:<gamma>", "scaled:<matrix-file>", "diag".
/// `load_matrix` resolves the file for the scaled variant.
KernelPtr make_kernel(const std::string &spec, Eigen::Index n,
                      const std::function<Mat(const std::string &)> &load_matrix = {});

/// Throws NumericError when M is not SPD; `what` names the matrix in the message.
Eigen::LLT<Mat> spd_factor(const Mat &M, const std::string &what);

/// Derivatives of M^{-1} given M and its derivatives:
///   dM^{-1}/dk = -M^{-1} dM_k M^{-1}
///   d2M^{-1}/dkdl = M^{-1} (dM_l M^{-1} dM_k + dM_k M^{-1} dM_l - d2M_kl) M^{-1}
InverseEval inverse_derivatives(const KernelEval &eval);

/// log det of an SPD matrix via its Cholesky factor.
double spd_logdet(const Eigen::LLT<Mat> &llt);

}  // namespace ebxmse
