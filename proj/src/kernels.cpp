#include "ebxmse/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace ebxmse {

namespace {

double to_search(double x, bool log_scale) { return log_scale ? std::log(x) : x; }

Mat symmetrize(const Mat &M) { return 0.5 * (M + M.transpose()); }

}  // namespace

bool Box::contains(const Vec &eta) const {
    if (eta.size() != dim()) { return false; }
    for (Eigen::Index i = 0; i < dim(); ++i) {
        if (!(eta[i] >= lower[i] && eta[i] <= upper[i])) { return false; }
    }
    return true;
}

bool Box::on_boundary(const Vec &eta, double rel_tol) const {
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const bool ls = log_scale[static_cast<std::size_t>(i)];
        const double lo = to_search(lower[i], ls);
        const double hi = to_search(upper[i], ls);
        const double x = to_search(std::clamp(eta[i], lower[i], upper[i]), ls);
        const double tol = rel_tol * (hi - lo);
        if (x - lo <= tol || hi - x <= tol) { return true; }
    }
    return false;
}

void KernelModel::check_eta(const Vec &eta) const {
    require(eta.size() == dim_eta(), name() + ": eta has wrong dimension");
    require(eta.allFinite(), name() + ": eta must be finite");
}

double ss_entry(int k, int l, double c, double gamma) {
    require(k >= 1 && l >= 1, "ss_entry: indices are 1-based");
    require(c >= 0.0, "ss_entry: c must be >= 0");
    require(gamma >= 0.0 && gamma < 1.0, "ss_entry: gamma must lie in [0, 1)");
    const int m = std::max(k, l);
    return c * (std::pow(gamma, k + l + m) / 2.0 - std::pow(gamma, 3 * m) / 6.0);
}

Mat ss_matrix(Eigen::Index n, double c, double gamma) {
    Mat K(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index l = 0; l <= k; ++l) {
            K(k, l) = ss_entry(static_cast<int>(k + 1), static_cast<int>(l + 1), c, gamma);
            K(l, k) = K(k, l);
        }
    }
    return K;
}

// ---------------------------------------------------------------- SsKernel

SsKernel::SsKernel(Eigen::Index n)
    : SsKernel(n, Box{Vec::Map(std::array{1e-6, 1e-3}.data(), 2), Vec::Map(std::array{1e6, 0.999}.data(), 2),
                      {true, false}}) {}

SsKernel::SsKernel(Eigen::Index n, Box box) : n_(n), box_(std::move(box)) {
    require(n >= 1, "SsKernel: n must be >= 1");
    require(box_.dim() == 2, "SsKernel: box must be 2-dimensional");
    require(box_.lower[0] >= 0.0 && box_.lower[1] >= 0.0 && box_.upper[1] < 1.0, "SsKernel: box outside c>=0, 0<=gamma<1");
}

Mat SsKernel::P(const Vec &eta) const {
    check_eta(eta);
    return ss_matrix(n_, eta[0], eta[1]);
}

KernelEval SsKernel::evaluate(const Vec &eta) const {
    check_eta(eta);
    const double c = eta[0];
    const double g = eta[1];
    require(c >= 0.0 && g >= 0.0 && g < 1.0, "SsKernel: eta outside c>=0, 0<=gamma<1");
    Mat K(n_, n_), dK(n_, n_), d2K(n_, n_);
    for (Eigen::Index k = 0; k < n_; ++k) {
        for (Eigen::Index l = 0; l <= k; ++l) {
            const double m = static_cast<double>(std::max(k, l) + 1);
            const double a = static_cast<double>(k + l + 2) + m;
            const double b = 3.0 * m;
            K(k, l) = std::pow(g, a) / 2.0 - std::pow(g, b) / 6.0;
            dK(k, l) = a * std::pow(g, a - 1.0) / 2.0 - b * std::pow(g, b - 1.0) / 6.0;
            d2K(k, l) = a * (a - 1.0) * std::pow(g, a - 2.0) / 2.0 - b * (b - 1.0) * std::pow(g, b - 2.0) / 6.0;
            K(l, k) = K(k, l);
            dK(l, k) = dK(k, l);
            d2K(l, k) = d2K(k, l);
        }
    }
    KernelEval ev;
    ev.P = c * K;
    ev.dP = {K, c * dK};
    ev.d2P = {Mat::Zero(n_, n_), dK, dK, c * d2K};
    ev.on_boundary = box_.on_boundary(eta);
    return ev;
}

// ------------------------------------------------------------ ScaledKernel

ScaledKernel::ScaledKernel(Mat K, std::string name, double lower, double upper)
    : K_(std::move(K)), name_(std::move(name)),
      box_{Vec::Constant(1, lower), Vec::Constant(1, upper), {true}} {
    require(K_.rows() == K_.cols() && K_.rows() >= 1, "ScaledKernel: K must be square");
    require((K_ - K_.transpose()).norm() <= 1e-12 * std::max(1.0, K_.norm()), "ScaledKernel: K must be symmetric");
    spd_factor(K_, "ScaledKernel K");
    require(lower > 0.0 && upper > lower, "ScaledKernel: invalid box");
}

Mat ScaledKernel::P(const Vec &eta) const {
    check_eta(eta);
    return eta[0] * K_;
}

KernelEval ScaledKernel::evaluate(const Vec &eta) const {
    check_eta(eta);
    KernelEval ev;
    ev.P = eta[0] * K_;
    ev.dP = {K_};
    ev.d2P = {Mat::Zero(K_.rows(), K_.cols())};
    ev.on_boundary = box_.on_boundary(eta);
    return ev;
}

// ---------------------------------------------------------- DiagonalKernel

DiagonalKernel::DiagonalKernel(Eigen::Index n, double lower, double upper)
    : n_(n), box_{Vec::Constant(n, lower), Vec::Constant(n, upper), std::vector<bool>(static_cast<std::size_t>(n), true)} {
    require(n >= 1, "DiagonalKernel: n must be >= 1");
    require(lower > 0.0 && upper > lower, "DiagonalKernel: invalid box");
}

Mat DiagonalKernel::P(const Vec &eta) const {
    check_eta(eta);
    return eta.asDiagonal();
}

KernelEval DiagonalKernel::evaluate(const Vec &eta) const {
    check_eta(eta);
    KernelEval ev;
    ev.P = eta.asDiagonal();
    ev.dP.reserve(static_cast<std::size_t>(n_));
    for (Eigen::Index k = 0; k < n_; ++k) {
        Mat E = Mat::Zero(n_, n_);
        E(k, k) = 1.0;
        ev.dP.push_back(std::move(E));
    }
    ev.d2P.assign(static_cast<std::size_t>(n_ * n_), Mat::Zero(n_, n_));
    ev.on_boundary = box_.on_boundary(eta);
    return ev;
}

// ----------------------------------------------------------------- factory

KernelPtr make_ss_fixed_gamma(Eigen::Index n, double gamma) {
    require(gamma > 0.0 && gamma < 1.0, "ss-fixed-gamma: gamma must lie in (0, 1)");
    return std::make_shared<ScaledKernel>(ss_matrix(n, 1.0, gamma), "ss-fixed-gamma:" + std::to_string(gamma));
}

KernelPtr make_kernel(const std::string &spec, Eigen::Index n,
                      const std::function<Mat(const std::string &)> &load_matrix) {
    if (spec == "ss") { return std::make_shared<SsKernel>(n); }
    if (spec == "diag") { return std::make_shared<DiagonalKernel>(n); }
    const auto colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string{} : spec.substr(colon + 1);
    if (head == "ss-fixed-gamma") {
        require(!arg.empty(), "kernel ss-fixed-gamma requires a gamma value");
        double gamma = 0.0;
        try {
            gamma = std::stod(arg);
        } catch (const std::exception &) {
            throw ConfigError("kernel ss-fixed-gamma: cannot parse gamma '" + arg + "'");
        }
        return make_ss_fixed_gamma(n, gamma);
    }
    if (head == "scaled") {
        require(!arg.empty(), "kernel scaled requires a matrix file");
        require(static_cast<bool>(load_matrix), "kernel scaled: no matrix loader available");
        Mat K = load_matrix(arg);
        require(K.rows() == n && K.cols() == n, "kernel scaled: matrix dimension does not match n");
        return std::make_shared<ScaledKernel>(std::move(K), spec);
    }
    throw ConfigError("unknown kernel spec '" + spec + "'");
}

Eigen::LLT<Mat> spd_factor(const Mat &M, const std::string &what) {
    Eigen::LLT<Mat> llt(M);
    if (llt.info() != Eigen::Success || !M.allFinite()) {
        throw NumericError(what + " is not symmetric positive definite");
    }
    return llt;
}

double spd_logdet(const Eigen::LLT<Mat> &llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

InverseEval inverse_derivatives(const KernelEval &eval) {
    const Eigen::Index n = eval.P.rows();
    const Eigen::Index p = eval.p();
    const auto llt = spd_factor(eval.P, "kernel matrix");
    InverseEval out;
    out.inv = symmetrize(llt.solve(Mat::Identity(n, n)));
    const Mat &Pi = out.inv;
    out.d_inv.reserve(static_cast<std::size_t>(p));
    for (Eigen::Index k = 0; k < p; ++k) {
        out.d_inv.push_back(symmetrize(-Pi * eval.dP[static_cast<std::size_t>(k)] * Pi));
    }
    out.d2_inv.resize(static_cast<std::size_t>(p * p));
    for (Eigen::Index k = 0; k < p; ++k) {
        for (Eigen::Index l = k; l < p; ++l) {
            const Mat &dk = eval.dP[static_cast<std::size_t>(k)];
            const Mat &dl = eval.dP[static_cast<std::size_t>(l)];
            Mat v = symmetrize(Pi * (dl * Pi * dk + dk * Pi * dl - eval.d2(k, l)) * Pi);
            out.d2_inv[static_cast<std::size_t>(l * p + k)] = v;
            out.d2_inv[static_cast<std::size_t>(k * p + l)] = std::move(v);
        }
    }
    return out;
}

}  // namespace ebxmse
