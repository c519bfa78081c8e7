#include "ebxmse/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace ebxmse {

Method parse_method(const std::string &s) {
    std::string l = s;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
    if (l == "eb") { return Method::EB; }
    if (l == "surey" || l == "sy") { return Method::SUREy; }
    if (l == "gcv") { return Method::GCV; }
    throw ConfigError("unknown method '" + s + "' (expected eb, surey or gcv)");
}

std::string method_name(Method m) {
    switch (m) {
    case Method::EB: return "eb";
    case Method::SUREy: return "surey";
    case Method::GCV: return "gcv";
    }
    return "?";
}

void HyperEstimatorSpec::validate() const {
    require(alpha > 0.0 && std::isfinite(alpha), "alpha must be positive");
    require(static_cast<bool>(kernel), "hyper-parameter estimator needs a kernel");
}

namespace {

void check_stats(const SufficientStats &stats, const KernelModel &kernel) {
    require(stats.gram.rows() == kernel.n(), "kernel order does not match the data");
    require(stats.N >= stats.gram.rows(), "need N >= n");
}

// Pieces shared by the output-form costs.
struct OutputForm {
    Mat L;          // P = LL'
    Eigen::LLT<Mat> mt;  // sigma2 I + L'GL
    Mat C;          // L'GL
    Vec b;          // L'Phi'Y
    Vec theta;      // regularized estimate

    OutputForm(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double sigma2) {
        check_stats(stats, kernel);
        require(sigma2 > 0.0, "sigma2 must be positive");
        const Mat P = kernel.P(eta);
        L = spd_factor(P, "P(eta)").matrixL();
        C = L.transpose() * stats.gram * L;
        C = 0.5 * (C + C.transpose());
        const Eigen::Index n = P.rows();
        mt = spd_factor(sigma2 * Mat::Identity(n, n) + C, "sigma2 I + L'GL");
        b = L.transpose() * stats.phity;
        theta = L * mt.solve(b);
    }

    double rss(const SufficientStats &stats) const {
        const double r = stats.yty - 2.0 * theta.dot(stats.phity) + theta.dot(stats.gram * theta);
        return std::max(r, 0.0);
    }

    double trace_h() const { return mt.solve(C).trace(); }
};

struct MssForm {
    Eigen::LLT<Mat> g;
    Mat Ginv;
    Eigen::LLT<Mat> s;

    MssForm(const Mat &gram, const KernelModel &kernel, const Vec &eta, double sigma2) {
        require(gram.rows() == kernel.n(), "kernel order does not match the Gram matrix");
        require(sigma2 > 0.0, "sigma2 must be positive");
        g = spd_factor(gram, "Phi'Phi");
        const Eigen::Index n = gram.rows();
        Ginv = g.solve(Mat::Identity(n, n));
        Ginv = 0.5 * (Ginv + Ginv.transpose());
        s = spd_factor(kernel.P(eta) + sigma2 * Ginv, "S(eta)");
    }
};

}  // namespace

Vec ml_estimate(const ExperimentData &data) {
    require(data.phi.rows() == data.y.size(), "ml_estimate: Phi and Y sizes differ");
    Eigen::ColPivHouseholderQR<Mat> qr(data.phi);
    if (qr.rank() < data.phi.cols()) { throw NumericError("ml_estimate: regression matrix is rank deficient"); }
    return qr.solve(data.y);
}

Vec ml_estimate(const SufficientStats &stats) {
    return spd_factor(stats.gram, "Phi'Phi").solve(stats.phity);
}

Vec regularized_estimate(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double sigma2) {
    return OutputForm(stats, kernel, eta, sigma2).theta;
}

Vec regularized_estimate(const ExperimentData &data, const KernelModel &kernel, const Vec &eta, double sigma2) {
    return regularized_estimate(sufficient_stats(data), kernel, eta, sigma2);
}

Vec regularized_estimate_mss(const Mat &gram, const Vec &theta_ml, const KernelModel &kernel, const Vec &eta,
                             double sigma2) {
    const MssForm f(gram, kernel, eta, sigma2);
    return theta_ml - sigma2 * f.Ginv * f.s.solve(theta_ml);
}

double cost_eb(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha, double sigma2) {
    const OutputForm f(stats, kernel, eta, sigma2);
    const auto n = static_cast<double>(f.C.rows());
    const auto N = static_cast<double>(stats.N);
    const double quad = std::max(stats.yty - f.b.dot(f.mt.solve(f.b)), 0.0) / sigma2;
    // log det Q = N log sigma2 + log det(I + C / sigma2)
    const double logdet = (N - n) * std::log(sigma2) + spd_logdet(f.mt);
    return quad + alpha * logdet;
}

double cost_surey(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha,
                  double sigma2) {
    const OutputForm f(stats, kernel, eta, sigma2);
    return f.rss(stats) + 2.0 * alpha * sigma2 * f.trace_h();
}

double cost_gcv(const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha,
                double sigma2) {
    const OutputForm f(stats, kernel, eta, sigma2);
    const double tr = f.trace_h();
    const auto N = static_cast<double>(stats.N);
    if (!(tr < N)) { throw NumericError("cost_gcv: Tr H >= N, degenerate smoothing"); }
    const double r = f.rss(stats);
    const double d = 1.0 - tr / N;
    return r + alpha * r * (1.0 / (d * d) - 1.0);
}

double cost(Method m, const SufficientStats &stats, const KernelModel &kernel, const Vec &eta, double alpha,
            double sigma2) {
    switch (m) {
    case Method::EB: return cost_eb(stats, kernel, eta, alpha, sigma2);
    case Method::SUREy: return cost_surey(stats, kernel, eta, alpha, sigma2);
    case Method::GCV: return cost_gcv(stats, kernel, eta, alpha, sigma2);
    }
    throw ConfigError("unknown method");
}

double mss_cost_eb(const Mat &gram, const Vec &theta, const KernelModel &kernel, const Vec &eta, double alpha,
                   double sigma2) {
    const MssForm f(gram, kernel, eta, sigma2);
    return theta.dot(f.s.solve(theta)) + alpha * spd_logdet(f.s);
}

double mss_cost_y(const Mat &gram, const Vec &theta, const KernelModel &kernel, const Vec &eta, double alpha,
                  double sigma2) {
    const MssForm f(gram, kernel, eta, sigma2);
    const Vec v = f.s.solve(theta);
    const double s4 = sigma2 * sigma2;
    const double tr = f.s.solve(f.Ginv).trace();
    return s4 * v.dot(f.Ginv * v) - 2.0 * alpha * s4 * tr;
}

double mss_cost(Method m, const Mat &gram, const Vec &theta, const KernelModel &kernel, const Vec &eta,
                double alpha, double sigma2) {
    if (m == Method::EB) { return mss_cost_eb(gram, theta, kernel, eta, alpha, sigma2); }
    return mss_cost_y(gram, theta, kernel, eta, alpha, sigma2);
}

OptimResult tune_hyperparams(const SufficientStats &stats, const HyperEstimatorSpec &spec, double sigma2) {
    spec.validate();
    check_stats(stats, *spec.kernel);
    const auto f = [&](const Vec &eta) { return cost(spec.method, stats, *spec.kernel, eta, spec.alpha, sigma2); };
    return minimize_box(f, spec.kernel->box(), spec.optimizer);
}

OptimResult tune_hyperparams_mss(const Mat &gram, const Vec &theta, const HyperEstimatorSpec &spec, double sigma2) {
    spec.validate();
    // factor G once; the cost closure only rebuilds S(eta)
    const Eigen::Index n = gram.rows();
    require(n == spec.kernel->n() && theta.size() == n, "tune_hyperparams_mss: dimension mismatch");
    const auto g = spd_factor(gram, "Phi'Phi");
    Mat Ginv = g.solve(Mat::Identity(n, n));
    Ginv = 0.5 * (Ginv + Ginv.transpose());
    const double s4 = sigma2 * sigma2;
    const auto f = [&](const Vec &eta) {
        const auto s = spd_factor(spec.kernel->P(eta) + sigma2 * Ginv, "S(eta)");
        if (spec.method == Method::EB) { return theta.dot(s.solve(theta)) + spec.alpha * spd_logdet(s); }
        const Vec v = s.solve(theta);
        return s4 * v.dot(Ginv * v) - 2.0 * spec.alpha * s4 * s.solve(Ginv).trace();
    };
    return minimize_box(f, spec.kernel->box(), spec.optimizer);
}

EstimateResult estimate(const SufficientStats &stats, const HyperEstimatorSpec &spec, double sigma2) {
    const OptimResult opt = tune_hyperparams(stats, spec, sigma2);
    EstimateResult r;
    r.eta_hat = opt.x;
    r.theta_hat = regularized_estimate(stats, *spec.kernel, opt.x, sigma2);
    r.cost_value = opt.value;
    r.iterations = opt.iterations;
    r.on_boundary = opt.on_boundary;
    return r;
}

EstimateResult estimate_ml(const SufficientStats &stats) {
    EstimateResult r;
    r.theta_hat = ml_estimate(stats);
    return r;
}

}  // namespace ebxmse
