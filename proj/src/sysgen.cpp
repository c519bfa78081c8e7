#include "ebxmse/sysgen.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace ebxmse {

void CorpusSpec::validate() const {
    require(count >= 0, "corpus: count must be >= 0");
    require(n >= 1, "corpus: n must be >= 1");
    require(N >= n, "corpus: N must be >= n");
    require(target_snr > 0.0, "corpus: target SNR must be positive");
    require(sigma2 > 0.0, "corpus: sigma2 must be positive");
    require(system.order >= 1, "corpus: system order must be >= 1");
    require(system.max_modulus > 0.0 && system.max_modulus < 1.0, "corpus: max pole modulus must lie in (0, 1)");
    require(!filter || threshold > 0.0 || threshold == -std::numeric_limits<double>::infinity(),
            "corpus: filter threshold must be positive");
    require(max_attempts >= 1, "corpus: max_attempts must be >= 1");
    require(filter_alpha > 0.0, "corpus: filter alpha must be positive");
    if (aligned_K) { require(aligned_K->rows() == n && aligned_K->cols() == n, "corpus: aligned K must be n x n"); }
    if (filter_kernel) { require(filter_kernel->n() == n, "corpus: filter kernel order must equal n"); }
}

Vec poly_from_poles(const std::vector<std::complex<double>> &poles) {
    std::vector<std::complex<double>> c{1.0};
    for (const auto &p : poles) {
        std::vector<std::complex<double>> next(c.size() + 1, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            next[i] += c[i];
            next[i + 1] -= p * c[i];
        }
        c = std::move(next);
    }
    Vec a(static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (std::abs(c[i].imag()) > 1e-9 * std::max(1.0, std::abs(c[i]))) {
            throw ConfigError("poly_from_poles: complex poles must come in conjugate pairs");
        }
        a[static_cast<Eigen::Index>(i)] = c[i].real();
    }
    return a;
}

Vec impulse_response(const Vec &b, const Vec &a, Eigen::Index length) {
    require(a.size() >= 1 && a[0] == 1.0, "impulse_response: denominator must be monic");
    require(length >= 0, "impulse_response: negative length");
    Vec g = Vec::Zero(length);
    for (Eigen::Index k = 0; k < length; ++k) {
        double v = k < b.size() ? b[k] : 0.0;
        for (Eigen::Index j = 1; j < a.size() && j <= k; ++j) { v -= a[j] * g[k - j]; }
        g[k] = v;
    }
    return g;
}

namespace {

double draw_modulus(Rng &rng, double cap) {
    double r;
    do { r = rng.uniform(); } while (r >= cap);
    return r;
}

}  // namespace

Vec random_stable_impulse(Eigen::Index n, Rng &rng, const StableSystemOptions &opt, double *tail_energy) {
    require(n >= 1, "random_stable_impulse: n must be >= 1");
    require(opt.order >= 1, "random_stable_impulse: order must be >= 1");
    std::vector<std::complex<double>> poles;
    const int pairs = rng.uniform_int(0, opt.order / 2);
    for (int i = 0; i < pairs; ++i) {
        const double r = opt.zero_poles ? 0.0 : draw_modulus(rng, opt.max_modulus);
        const double w = rng.uniform(0.0, std::numbers::pi);
        poles.push_back(std::polar(r, w));
        poles.push_back(std::polar(r, -w));
    }
    while (static_cast<int>(poles.size()) < opt.order) {
        const double r = opt.zero_poles ? 0.0 : draw_modulus(rng, opt.max_modulus);
        poles.emplace_back(rng.uniform() < 0.5 ? -r : r, 0.0);
    }
    const Vec a = poly_from_poles(poles);
    Vec b = rng.normal_vec(opt.order + 1);
    double gain;
    do { gain = rng.normal(); } while (std::abs(gain) < 1e-3);
    b *= gain;
    constexpr Eigen::Index kTail = 500;
    const Vec g = impulse_response(b, a, n + kTail);
    if (tail_energy) { *tail_energy = g.tail(kTail).squaredNorm(); }
    return g.head(n);
}

ScaledSystem scale_to_snr(const Vec &theta_tilde, const Mat &phi, double sigma2, double target_snr) {
    require(sigma2 > 0.0 && target_snr > 0.0, "scale_to_snr: sigma2 and target SNR must be positive");
    require(phi.cols() == theta_tilde.size(), "scale_to_snr: dimension mismatch");
    const double snr1 = sample_snr(phi, theta_tilde, sigma2);
    if (!(snr1 > 0.0) || !std::isfinite(snr1)) {
        throw NumericError("scale_to_snr: noiseless output is constant");
    }
    ScaledSystem s;
    s.m = std::sqrt(target_snr / snr1);
    s.theta0 = s.m * theta_tilde;
    return s;
}

std::vector<Vec> sample_aligned(const Mat &K, int count, Rng &rng) {
    require(count >= 0, "sample_aligned: negative count");
    const Mat L = spd_factor(K, "K").matrixL();
    std::vector<Vec> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) { out.push_back(L * rng.normal_vec(K.rows())); }
    return out;
}

CorpusEntry make_candidate(const CorpusSpec &spec, int candidate) {
    Rng rng(spec.seed, static_cast<std::uint64_t>(candidate));
    CorpusEntry e;
    e.candidate = candidate;
    Vec theta_tilde;
    if (spec.alignment == Alignment::RandomSystem) {
        theta_tilde = random_stable_impulse(spec.n, rng, spec.system, &e.tail_energy);
    } else {
        const Mat K = spec.aligned_K ? *spec.aligned_K : ss_matrix(spec.n, 1.0, 0.95);
        theta_tilde = sample_aligned(K, 1, rng).front();
    }
    e.u = rng.normal_vec(spec.N);
    const Mat phi = build_regressor(e.u, spec.n);
    if (!has_full_column_rank(phi)) { throw NumericError("candidate input is not persistently exciting"); }
    const ScaledSystem s = scale_to_snr(theta_tilde, phi, spec.sigma2, spec.target_snr);
    e.m = s.m;
    e.spec.theta0 = s.theta0;
    e.spec.sigma2 = spec.sigma2;
    e.snr = sample_snr(phi, s.theta0, spec.sigma2);
    e.tail_energy *= s.m * s.m;
    return e;
}

std::optional<double> filter_xmse(const CorpusEntry &e, const CorpusSpec &spec) {
    const KernelPtr kernel = spec.filter_kernel ? spec.filter_kernel : make_ss_fixed_gamma(spec.n, 0.95);
    const Mat phi = build_regressor(e.u, spec.n);
    const AsymptoticContext ctx = spec.filter_mode == Mode::Apx
                                      ? apx_context(phi.transpose() * phi, e.u.size(), e.spec, spec.filter_level)
                                      : exact_context(Mat::Identity(spec.n, spec.n), e.spec);
    return xmse_regularized(kernel, ctx, Method::EB, spec.filter_alpha, spec.optimizer).xmse_total;
}

Corpus generate_corpus(const CorpusSpec &spec) {
    spec.validate();
    Corpus c;
    const bool accept_all = !spec.filter || spec.threshold == -std::numeric_limits<double>::infinity();
    int next = 0;
    for (int idx = 0; idx < spec.count; ++idx) {
        int attempts = 0;
        for (;;) {
            if (attempts >= spec.max_attempts) {
                throw NumericError("corpus: no acceptable candidate after " + std::to_string(spec.max_attempts) +
                                   " attempts for entry " + std::to_string(idx));
            }
            const int cand = next++;
            ++attempts;
            ++c.candidates;
            CorpusEntry e;
            try {
                e = make_candidate(spec, cand);
                if (spec.filter) { e.filter_xmse = filter_xmse(e, spec); }
            } catch (const NumericError &) {
                ++c.rejected;
                continue;
            }
            if (!accept_all && !(e.filter_xmse && *e.filter_xmse > spec.threshold)) {
                ++c.rejected;
                continue;
            }
            e.index = idx;
            e.attempts = attempts;
            c.entries.push_back(std::move(e));
            break;
        }
    }
    return c;
}

}  // namespace ebxmse
