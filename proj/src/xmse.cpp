#include "ebxmse/xmse.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace ebxmse {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

Mat spd_inverse(const Mat &M, const std::string &what) {
    const Mat inv = spd_factor(M, what).solve(Mat::Identity(M.rows(), M.cols()));
    return 0.5 * (inv + inv.transpose());
}

void check_finite(const Mat &M, const std::string &what) {
    if (!M.allFinite()) { throw NumericError(what + " is not finite"); }
}

}  // namespace

Mode parse_mode(const std::string &s) {
    const std::string l = lower(s);
    if (l == "exact") { return Mode::Exact; }
    if (l == "apx") { return Mode::Apx; }
    throw ConfigError("unknown mode '" + s + "' (expected exact or apx)");
}

std::string mode_name(Mode m) { return m == Mode::Exact ? "exact" : "apx"; }

ApxLevel parse_apx_level(const std::string &s) {
    const std::string l = lower(s);
    if (l == "sigma-only") { return ApxLevel::SigmaOnly; }
    if (l == "full") { return ApxLevel::Full; }
    throw ConfigError("unknown apx level '" + s + "' (expected sigma-only or full)");
}

std::string apx_level_name(ApxLevel l) { return l == ApxLevel::SigmaOnly ? "sigma-only" : "full"; }

// ---------------------------------------------------------------- contexts

KernelPtr AsymptoticContext::effective_kernel(const KernelPtr &kernel) const {
    require(static_cast<bool>(kernel), "no kernel");
    require(kernel->n() == n(), "kernel order does not match theta0");
    if (mode == Mode::Apx && level == ApxLevel::Full) {
        return std::make_shared<ShiftedKernel>(kernel, sigma2 * spd_inverse(gram, "Phi'Phi"));
    }
    return kernel;
}

AsymptoticContext exact_context(const Mat &Sigma, const SystemSpec &spec) {
    spec.validate();
    require(Sigma.rows() == spec.n() && Sigma.cols() == spec.n(), "Sigma must be n x n");
    AsymptoticContext ctx;
    ctx.sigma_inv = spd_inverse(Sigma, "Sigma");
    ctx.sigma2 = spec.sigma2;
    ctx.theta0 = spec.theta0;
    ctx.mode = Mode::Exact;
    return ctx;
}

AsymptoticContext apx_context(const Mat &gram, Eigen::Index N, const SystemSpec &spec, ApxLevel level) {
    spec.validate();
    require(gram.rows() == spec.n() && gram.cols() == spec.n(), "Phi'Phi must be n x n");
    require(N >= spec.n(), "apx context needs N >= n");
    AsymptoticContext ctx;
    ctx.sigma_inv = static_cast<double>(N) * spd_inverse(gram, "Phi'Phi");
    ctx.sigma2 = spec.sigma2;
    ctx.theta0 = spec.theta0;
    ctx.mode = Mode::Apx;
    ctx.level = level;
    ctx.N = N;
    ctx.gram = gram;
    return ctx;
}

AsymptoticContext apx_context(const ExperimentData &data, const SystemSpec &spec, ApxLevel level) {
    return apx_context(data.phi.transpose() * data.phi, data.N(), spec, level);
}

// ----------------------------------------------------------- ShiftedKernel

ShiftedKernel::ShiftedKernel(KernelPtr base, Mat shift) : base_(std::move(base)), shift_(std::move(shift)) {
    require(static_cast<bool>(base_), "ShiftedKernel: no base kernel");
    require(shift_.rows() == base_->n() && shift_.cols() == base_->n(), "ShiftedKernel: shift must be n x n");
}

Mat ShiftedKernel::P(const Vec &eta) const { return base_->P(eta) + shift_; }

KernelEval ShiftedKernel::evaluate(const Vec &eta) const {
    KernelEval ev = base_->evaluate(eta);
    ev.P += shift_;
    return ev;
}

// ------------------------------------------------------------------ priors

Vec GaussianPrior::grad_theta(const Vec &theta, const Vec &eta) const {
    return -spd_factor(kernel_->P(eta), "P(eta)").solve(theta);
}

Mat GaussianPrior::hess_theta(const Vec & /*theta*/, const Vec &eta) const {
    return -spd_inverse(kernel_->P(eta), "P(eta)");
}

Mat GaussianPrior::cross_theta_eta(const Vec &theta, const Vec &eta) const {
    const InverseEval inv = inverse_derivatives(kernel_->evaluate(eta));
    Mat out(theta.size(), inv.p());
    for (Eigen::Index k = 0; k < inv.p(); ++k) { out.col(k) = -inv.d_inv[static_cast<std::size_t>(k)] * theta; }
    return out;
}

BQuantities generic_b_quantities(const PriorModel &prior, const AsymptoticContext &ctx, const Vec &eta) {
    const double s2 = ctx.sigma2;
    BQuantities b;
    b.b_star = s2 * ctx.sigma_inv * prior.grad_theta(ctx.theta0, eta);
    b.b_prime_theta = s2 * ctx.sigma_inv * prior.hess_theta(ctx.theta0, eta);
    b.b_prime_eta = s2 * ctx.sigma_inv * prior.cross_theta_eta(ctx.theta0, eta);
    check_finite(b.b_star, "b_star");
    check_finite(b.b_prime_theta, "b'_theta");
    check_finite(b.b_prime_eta, "b'_eta");
    return b;
}

BQuantities gaussian_b_quantities(const KernelModel &kernel, const AsymptoticContext &ctx, const Vec &eta) {
    require(kernel.n() == ctx.n(), "kernel order does not match theta0");
    const double s2 = ctx.sigma2;
    const InverseEval inv = inverse_derivatives(kernel.evaluate(eta));
    const Mat SiPi = ctx.sigma_inv * inv.inv;
    BQuantities b;
    b.b_star = -s2 * SiPi * ctx.theta0;
    b.b_prime_theta = -s2 * SiPi;
    b.b_prime_eta.resize(ctx.n(), inv.p());
    for (Eigen::Index k = 0; k < inv.p(); ++k) {
        b.b_prime_eta.col(k) = -s2 * ctx.sigma_inv * (inv.d_inv[static_cast<std::size_t>(k)] * ctx.theta0);
    }
    check_finite(b.b_star, "b_star");
    check_finite(b.b_prime_eta, "b'_eta");
    return b;
}

XmseBreakdown assemble_xmse(const BQuantities &b, const AsymptoticContext &ctx, const Vec &eta_star,
                            const std::optional<Mat> &D_prime) {
    const double s2 = ctx.sigma2;
    XmseBreakdown out;
    out.b = b;
    out.eta_star = eta_star;
    out.mode = ctx.mode;
    out.level = ctx.level;
    out.xbias = b.b_star;
    out.xvar_trace = 2.0 * s2 * (b.b_prime_theta * ctx.sigma_inv).trace();
    if (D_prime) {
        require(D_prime->rows() == b.b_prime_eta.cols() && D_prime->cols() == ctx.n(), "D' has wrong shape");
        out.D_prime = *D_prime;
        out.xvarhpe_trace = 2.0 * s2 * (b.b_prime_eta * (*D_prime) * ctx.sigma_inv).trace();
        out.xmse_total = out.xbias.squaredNorm() + out.xvar_trace + *out.xvarhpe_trace;
        out.certified = true;
    }
    return out;
}

XmseBreakdown generic_xmse(const PriorModel &prior, const AsymptoticContext &ctx, const Vec &eta_star,
                           const std::optional<Mat> &D_prime) {
    return assemble_xmse(generic_b_quantities(prior, ctx, eta_star), ctx, eta_star, D_prime);
}

// --------------------------------------------------------- limit criteria

double w_eb(const KernelModel &kernel, const Vec &theta0, double alpha, const Vec &eta) {
    const auto llt = spd_factor(kernel.P(eta), "P(eta)");
    return theta0.dot(llt.solve(theta0)) + alpha * spd_logdet(llt);
}

double w_y(const KernelModel &kernel, const Vec &theta0, double alpha, double sigma2, const Mat &sigma_inv,
           const Vec &eta) {
    const auto llt = spd_factor(kernel.P(eta), "P(eta)");
    const Vec v = llt.solve(theta0);
    const double s4 = sigma2 * sigma2;
    return s4 * v.dot(sigma_inv * v) - 2.0 * alpha * s4 * llt.solve(sigma_inv).trace();
}

std::pair<Mat, Mat> eb_hessians(const KernelModel &kernel, const Vec &theta0, double alpha, const Vec &eta) {
    const KernelEval ev = kernel.evaluate(eta);
    const InverseEval inv = inverse_derivatives(ev);
    const Eigen::Index p = ev.p();
    Mat A(p, p);
    Mat B(p, theta0.size());
    for (Eigen::Index k = 0; k < p; ++k) {
        const Mat &dki = inv.d_inv[static_cast<std::size_t>(k)];
        B.row(k) = 2.0 * (dki * theta0).transpose();
        for (Eigen::Index l = 0; l < p; ++l) {
            const Mat &dli = inv.d_inv[static_cast<std::size_t>(l)];
            A(k, l) = theta0.dot(inv.d2(k, l) * theta0) + alpha * (inv.inv * ev.d2(k, l)).trace() +
                      alpha * (dli * ev.dP[static_cast<std::size_t>(k)]).trace();
        }
    }
    A = 0.5 * (A + A.transpose());
    check_finite(A, "A_b");
    check_finite(B, "B_b");
    return {A, B};
}

std::pair<Mat, Mat> y_hessians(const KernelModel &kernel, const Vec &theta0, double alpha, double sigma2,
                               const Mat &sigma_inv, const Vec &eta) {
    const InverseEval inv = inverse_derivatives(kernel.evaluate(eta));
    const Eigen::Index p = inv.p();
    const double s4 = sigma2 * sigma2;
    const Vec u = sigma_inv * (inv.inv * theta0);  // Sigma^-1 P^-1 theta
    Mat A(p, p);
    Mat B(p, theta0.size());
    for (Eigen::Index k = 0; k < p; ++k) {
        const Mat &dki = inv.d_inv[static_cast<std::size_t>(k)];
        const Vec wk = dki * theta0;
        B.row(k) = 2.0 * s4 * ((dki * u).transpose() + (inv.inv * sigma_inv * wk).transpose());
        for (Eigen::Index l = 0; l < p; ++l) {
            const Vec wl = inv.d_inv[static_cast<std::size_t>(l)] * theta0;
            const Mat &d2 = inv.d2(k, l);
            A(k, l) = 2.0 * s4 * (wl.dot(sigma_inv * wk) + u.dot(d2 * theta0) - alpha * (sigma_inv * d2).trace());
        }
    }
    A = 0.5 * (A + A.transpose());
    check_finite(A, "A_y");
    check_finite(B, "B_y");
    return {A, B};
}

namespace {

Vec grad_w_eb(const KernelModel &kernel, const Vec &theta0, double alpha, const Vec &eta) {
    const KernelEval ev = kernel.evaluate(eta);
    const InverseEval inv = inverse_derivatives(ev);
    Vec g(ev.p());
    for (Eigen::Index k = 0; k < ev.p(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        g[k] = theta0.dot(inv.d_inv[ku] * theta0) + alpha * (inv.inv * ev.dP[ku]).trace();
    }
    return g;
}

Vec grad_w_y(const KernelModel &kernel, const Vec &theta0, double alpha, double sigma2, const Mat &sigma_inv,
             const Vec &eta) {
    const InverseEval inv = inverse_derivatives(kernel.evaluate(eta));
    const Vec u = sigma_inv * (inv.inv * theta0);
    Vec g(inv.p());
    for (Eigen::Index k = 0; k < inv.p(); ++k) {
        const Mat &dki = inv.d_inv[static_cast<std::size_t>(k)];
        g[k] = 2.0 * sigma2 * sigma2 * ((dki * theta0).dot(u) - alpha * (sigma_inv * dki).trace());
    }
    return g;
}

// Newton steps on the stationarity condition from a simplex endpoint. A step is kept only
// when it stays inside the box, the Hessian is SPD and the gradient norm shrinks.
template <class Grad, class Hess>
Vec newton_polish(Vec eta, const Box &box, Grad grad, Hess hess) {
    try {
        Vec g = grad(eta);
        for (int it = 0; it < 8 && g.allFinite(); ++it) {
            const Eigen::LLT<Mat> llt(hess(eta));
            if (llt.info() != Eigen::Success) { break; }
            const Vec next = eta - llt.solve(g);
            if (!next.allFinite() || !box.contains(next) || box.on_boundary(next)) { break; }
            const Vec gn = grad(next);
            if (!(gn.norm() < g.norm())) { break; }
            eta = next;
            g = gn;
        }
    } catch (const std::exception &) {
        // keep the simplex point
    }
    return eta;
}

}  // namespace

LimitCriterion limit_criterion_eb(const KernelModel &kernel, const Vec &theta0, double alpha,
                                  const OptimizerSettings &opt) {
    require(alpha > 0.0, "alpha must be positive");
    require(theta0.size() == kernel.n(), "theta0 length does not match the kernel");
    const auto f = [&](const Vec &eta) { return w_eb(kernel, theta0, alpha, eta); };
    const OptimResult r = minimize_box(f, kernel.box(), opt);
    LimitCriterion lc;
    lc.eta_star = r.x;
    lc.on_boundary = r.on_boundary;
    lc.iterations = r.iterations;
    if (!r.on_boundary) {
        lc.eta_star = newton_polish(
            r.x, kernel.box(), [&](const Vec &e) { return grad_w_eb(kernel, theta0, alpha, e); },
            [&](const Vec &e) { return eb_hessians(kernel, theta0, alpha, e).first; });
    }
    lc.value = f(lc.eta_star);
    std::tie(lc.A, lc.B) = eb_hessians(kernel, theta0, alpha, lc.eta_star);
    return lc;
}

LimitCriterion limit_criterion_y(const KernelModel &kernel, const Vec &theta0, double alpha, double sigma2,
                                 const Mat &sigma_inv, const OptimizerSettings &opt) {
    require(alpha > 0.0, "alpha must be positive");
    require(theta0.size() == kernel.n(), "theta0 length does not match the kernel");
    const auto f = [&](const Vec &eta) { return w_y(kernel, theta0, alpha, sigma2, sigma_inv, eta); };
    const OptimResult r = minimize_box(f, kernel.box(), opt);
    LimitCriterion lc;
    lc.eta_star = r.x;
    lc.on_boundary = r.on_boundary;
    lc.iterations = r.iterations;
    if (!r.on_boundary) {
        lc.eta_star = newton_polish(
            r.x, kernel.box(), [&](const Vec &e) { return grad_w_y(kernel, theta0, alpha, sigma2, sigma_inv, e); },
            [&](const Vec &e) { return y_hessians(kernel, theta0, alpha, sigma2, sigma_inv, e).first; });
    }
    lc.value = f(lc.eta_star);
    std::tie(lc.A, lc.B) = y_hessians(kernel, theta0, alpha, sigma2, sigma_inv, lc.eta_star);
    return lc;
}

std::optional<Mat> d_prime(const Mat &A, const Mat &B) {
    require(A.rows() == A.cols() && A.rows() == B.rows(), "d_prime: shape mismatch");
    if (!A.allFinite() || !B.allFinite()) { return std::nullopt; }
    Eigen::LLT<Mat> llt(0.5 * (A + A.transpose()));
    if (llt.info() != Eigen::Success) { return std::nullopt; }
    return Mat(-llt.solve(B));
}

XmseBreakdown xmse_regularized(const KernelPtr &kernel, const AsymptoticContext &ctx, Method method, double alpha,
                               const OptimizerSettings &opt) {
    const KernelPtr k = ctx.effective_kernel(kernel);
    const LimitCriterion lc = method == Method::EB
                                  ? limit_criterion_eb(*k, ctx.theta0, alpha, opt)
                                  : limit_criterion_y(*k, ctx.theta0, alpha, ctx.sigma2, ctx.sigma_inv, opt);
    std::optional<Mat> D;
    if (!lc.on_boundary) { D = d_prime(lc.A, lc.B); }
    XmseBreakdown out = assemble_xmse(gaussian_b_quantities(*k, ctx, lc.eta_star), ctx, lc.eta_star, D);
    out.A = lc.A;
    out.B = lc.B;
    out.on_boundary = lc.on_boundary;
    // SUREy and GCV share the limit criterion; the tag is the only difference
    out.method = method_name(method);
    return out;
}

double fixed_eta_xmse(const KernelPtr &kernel, const Vec &eta, const AsymptoticContext &ctx) {
    const KernelPtr k = ctx.effective_kernel(kernel);
    const Mat Pi = spd_inverse(k->P(eta), "P(eta)");
    const double s4 = ctx.sigma2 * ctx.sigma2;
    const Mat &Si = ctx.sigma_inv;
    return s4 * (Si * (Pi * ctx.theta0)).squaredNorm() - 2.0 * s4 * (Si * Si * Pi).trace();
}

double xvarhpe_closed_scaled(const Mat &K, const Mat &Sigma, const Vec &theta0, double alpha, double sigma2) {
    require(K.rows() == theta0.size() && Sigma.rows() == theta0.size(), "xvarhpe_closed_scaled: dimension mismatch");
    const Mat Ki = spd_inverse(K, "K");
    const Mat Si = spd_inverse(Sigma, "Sigma");
    const Vec v = Ki * theta0;
    const double q = v.dot(Si * v);
    if (!(q > 0.0)) { throw NumericError("xvarhpe_closed_scaled: theta0' K^-1 Sigma^-1 K^-1 theta0 is zero"); }
    const double t = (Si * Ki).trace();
    const double r = v.dot(Si * Ki * Si * Si * v);
    return 4.0 * alpha * sigma2 * sigma2 * t / (q * q) * r;
}

double xvarhpe_closed_diag(const Vec &s, const Vec &g, double alpha, double sigma2) {
    require(s.size() == g.size() && s.size() >= 1, "xvarhpe_closed_diag: length mismatch");
    require((s.array() > 0.0).all(), "xvarhpe_closed_diag: s must be positive");
    if ((g.array() == 0.0).any()) { throw NumericError("xvarhpe_closed_diag: zero coefficient in g"); }
    return (4.0 * alpha * sigma2 * sigma2 / (g.array().square() * s.array().square())).sum();
}

}  // namespace ebxmse
