#include "ebxmse/mc.hpp"

#include <cmath>

namespace ebxmse {

void McConfig::validate() const {
    spec.validate();
    require(runs >= 1, "mc: runs must be >= 1");
    require(u.size() >= spec.n(), "mc: input shorter than the model order");
    require(noise_scale >= 0.0, "mc: noise_scale must be >= 0");
    for (const auto &e : estimators) {
        e.validate();
        require(e.kernel->n() == spec.n(), "mc: kernel order does not match theta0");
    }
    if (Sigma) { require(Sigma->rows() == spec.n() && Sigma->cols() == spec.n(), "mc: Sigma must be n x n"); }
}

const McEstimatorResult &McReport::find(const std::string &name) const {
    for (const auto &e : estimators) {
        if (e.name == name) { return e; }
    }
    throw ConfigError("mc report has no estimator '" + name + "'");
}

double acc_metric(double xmse_over_N2, double sample_delta_mse) {
    if (sample_delta_mse == 0.0) { throw NumericError("acc_metric: sample delta MSE is zero"); }
    return 100.0 * (1.0 - std::abs(xmse_over_N2 - sample_delta_mse) / std::abs(sample_delta_mse));
}

namespace {

Vec mean_of(const std::vector<Vec> &xs) {
    Vec m = Vec::Zero(xs.front().size());
    for (const auto &x : xs) { m += x; }
    return m / static_cast<double>(xs.size());
}

// tr of the 1/(M-1) sample cross-covariance of (x, y)
double cross_cov_trace(const std::vector<Vec> &x, const std::vector<Vec> &y) {
    const Vec mx = mean_of(x);
    const Vec my = mean_of(y);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) { s += (x[i] - mx).dot(y[i] - my); }
    return s / static_cast<double>(x.size() - 1);
}

std::vector<Vec> diff(const std::vector<Vec> &a, const std::vector<Vec> &b) {
    std::vector<Vec> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) { out[i] = a[i] - b[i]; }
    return out;
}

double mean_se(const std::vector<Vec> &xs, const Vec &theta0) {
    double s = 0.0;
    for (const auto &x : xs) { s += (x - theta0).squaredNorm(); }
    return s / static_cast<double>(xs.size());
}

}  // namespace

Upsilon decompose_upsilon(const std::vector<Vec> &ml, const std::vector<Vec> &tr, const std::vector<Vec> &ref,
                          const Vec &theta0) {
    require(ml.size() >= 2, "decompose_upsilon: needs at least two runs");
    require(tr.size() == ml.size() && ref.size() == ml.size(), "decompose_upsilon: run count mismatch");
    Upsilon u;
    const double delta = mean_se(tr, theta0) - mean_se(ml, theta0);
    u.bias = mean_of(ref) - theta0;
    u.bias_sq = u.bias.squaredNorm();
    // symmetrized cross-covariance: Tr[C(x,y) + C(y,x)] = 2 tr C(x,y)
    u.var_trace = 2.0 * cross_cov_trace(diff(ref, ml), ml);
    u.varhpe_trace = 2.0 * cross_cov_trace(diff(tr, ref), ml);
    u.hot_trace = delta - u.bias_sq - u.var_trace - u.varhpe_trace;

    const std::vector<Vec> d = diff(tr, ml);
    const Vec md = mean_of(d);
    double var_d = 0.0;
    for (const auto &x : d) { var_d += (x - md).squaredNorm(); }
    var_d /= static_cast<double>(d.size() - 1);
    u.hot_definitional = var_d + (mean_of(tr) - theta0).squaredNorm() - u.bias_sq;
    u.closure_residual = u.hot_definitional - u.hot_trace;
    return u;
}

McReport run_mc(const McConfig &cfg) {
    cfg.validate();
    const SystemSpec &spec = cfg.spec;
    const Eigen::Index N = cfg.u.size();
    const Mat phi = build_regressor(cfg.u, spec.n());
    if (!has_full_column_rank(phi)) { throw NumericError("mc: regression matrix is rank deficient"); }
    const Mat gram = phi.transpose() * phi;
    const std::size_t k = cfg.estimators.size();

    std::vector<Vec> eta_ref(k);
    if (cfg.decompose) {
        for (std::size_t j = 0; j < k; ++j) {
            eta_ref[j] = tune_hyperparams_mss(gram, spec.theta0, cfg.estimators[j], spec.sigma2).x;
        }
    }

    McReport rep;
    rep.runs = cfg.runs;
    rep.N = N;
    rep.snr = sample_snr(phi, spec.theta0, spec.sigma2);
    rep.estimators.resize(k + 1);
    rep.estimators[0].name = "ml";
    for (std::size_t j = 0; j < k; ++j) {
        rep.estimators[j + 1].name = method_name(cfg.estimators[j].method);
        rep.estimators[j + 1].method = cfg.estimators[j].method;
    }

    std::vector<Vec> ml_runs;
    std::vector<std::vector<Vec>> tr_runs(k), ref_runs(k);
    const double scale = std::sqrt(spec.sigma2) * cfg.noise_scale;
    for (int i = 0; i < cfg.runs; ++i) {
        Rng rng(cfg.base_seed, cfg.repeat_first_stream ? 0 : static_cast<std::uint64_t>(i));
        const Vec e = scale * rng.normal_vec(N);
        const ExperimentData data = simulate_with_noise(spec, cfg.u, e);
        const SufficientStats stats = sufficient_stats(data);
        Vec ml;
        std::vector<EstimateResult> est(k);
        std::vector<Vec> ref(k);
        try {
            ml = ml_estimate(stats);
            for (std::size_t j = 0; j < k; ++j) {
                est[j] = estimate(stats, cfg.estimators[j], spec.sigma2);
                if (cfg.decompose) {
                    ref[j] = regularized_estimate(stats, *cfg.estimators[j].kernel, eta_ref[j], spec.sigma2);
                }
            }
        } catch (const NumericError &ex) {
            rep.excluded_runs.push_back(i);
            rep.exclusion_reasons.emplace_back(ex.what());
            continue;
        }
        rep.included_runs.push_back(i);
        ml_runs.push_back(ml);
        rep.estimators[0].se.push_back(squared_error(ml, spec.theta0));
        for (std::size_t j = 0; j < k; ++j) {
            auto &r = rep.estimators[j + 1];
            r.se.push_back(squared_error(est[j].theta_hat, spec.theta0));
            r.eta_hat.push_back(*est[j].eta_hat);
            r.boundary_hits += est[j].on_boundary ? 1 : 0;
            tr_runs[j].push_back(est[j].theta_hat);
            if (cfg.decompose) { ref_runs[j].push_back(ref[j]); }
        }
        // FIT is undefined for a constant theta0; leave it out rather than fail the run
        const double denom = (spec.theta0.array() - spec.theta0.mean()).matrix().norm();
        if (denom > 0.0) {
            rep.estimators[0].fit.push_back(fit_metric(ml, spec.theta0));
            for (std::size_t j = 0; j < k; ++j) {
                rep.estimators[j + 1].fit.push_back(fit_metric(est[j].theta_hat, spec.theta0));
            }
        }
    }
    if (rep.included_runs.empty()) { throw NumericError("mc: every run failed"); }

    const auto M = static_cast<double>(rep.included_runs.size());
    for (auto &r : rep.estimators) {
        double s = 0.0, f = 0.0;
        for (double v : r.se) { s += v; }
        for (double v : r.fit) { f += v; }
        r.sample_mse = s / M;
        r.mean_fit = r.fit.empty() ? 0.0 : f / static_cast<double>(r.fit.size());
    }

    std::optional<AsymptoticContext> exact, apx;
    if (cfg.compute_xmse) {
        exact = exact_context(cfg.Sigma ? *cfg.Sigma : Mat::Identity(spec.n(), spec.n()), spec);
        apx = apx_context(gram, N, spec, cfg.apx_level);
    }
    const double N2 = static_cast<double>(N) * static_cast<double>(N);
    for (std::size_t j = 0; j < k; ++j) {
        auto &r = rep.estimators[j + 1];
        const auto &hs = cfg.estimators[j];
        r.sample_delta_mse = r.sample_mse - rep.estimators[0].sample_mse;
        if (cfg.decompose && ml_runs.size() >= 2) {
            Upsilon u = decompose_upsilon(ml_runs, tr_runs[j], ref_runs[j], spec.theta0);
            u.eta_ref = eta_ref[j];
            r.upsilon = u;
        }
        if (cfg.compute_xmse) {
            r.xmse_exact = xmse_regularized(hs.kernel, *exact, hs.method, hs.alpha, hs.optimizer);
            r.xmse_apx = xmse_regularized(hs.kernel, *apx, hs.method, hs.alpha, hs.optimizer);
            if (*r.sample_delta_mse != 0.0) {
                if (r.xmse_exact->xmse_total) { r.acc_exact = acc_metric(*r.xmse_exact->xmse_total / N2, *r.sample_delta_mse); }
                if (r.xmse_apx->xmse_total) { r.acc_apx = acc_metric(*r.xmse_apx->xmse_total / N2, *r.sample_delta_mse); }
            }
        }
    }
    return rep;
}

}  // namespace ebxmse
