#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "ebxmse/xmse.hpp"

namespace ebxmse {

struct StableSystemOptions {
    int order = 30;
    double max_modulus = 0.95;   // pole moduli are drawn uniformly on [0, 1) and rejected at or above this
    bool zero_poles = false;     // test hook: all poles at the origin, response = numerator
};

/// Monic denominator coefficients [1, a_1, ..., a_m] of prod (1 - p_j z^-1).
/// Complex poles must come in conjugate pairs.
Vec poly_from_poles(const std::vector<std::complex<double>> &poles);

/// First `length` samples of the impulse response of B(z^-1)/A(z^-1), a[0] = 1.
Vec impulse_response(const Vec &b, const Vec &a, Eigen::Index length);

/// Random stable SISO system of the given order: a random number of complex pole pairs,
/// the rest real, random numerator and gain. Returns the first n impulse-response samples.
/// When `tail_energy` is non-null it receives the energy of samples n..n+499.
Vec random_stable_impulse(Eigen::Index n, Rng &rng, const StableSystemOptions &opt = {},
                          double *tail_energy = nullptr);

struct ScaledSystem {
    double m = 0.0;
    Vec theta0;
};

/// m > 0 such that the mean-removed sample variance of Phi m theta_tilde over sigma2 equals target_snr.
ScaledSystem scale_to_snr(const Vec &theta_tilde, const Mat &phi, double sigma2, double target_snr);

/// Draws from N(0, K) through the Cholesky factor of K.
std::vector<Vec> sample_aligned(const Mat &K, int count, Rng &rng);

enum class Alignment { RandomSystem, KernelAligned };

struct CorpusSpec {
    int count = 0;
    Eigen::Index n = 20;
    Eigen::Index N = 50;
    double target_snr = 10.0;
    double sigma2 = 1.0;
    std::uint64_t seed = 0;
    Alignment alignment = Alignment::RandomSystem;
    std::optional<Mat> aligned_K;       // defaults to SS(1, 0.95)
    StableSystemOptions system;

    // positive-XMSE filter on the EB regularized estimator
    bool filter = false;
    double threshold = 0.1;
    Mode filter_mode = Mode::Apx;
    ApxLevel filter_level = ApxLevel::Full;
    KernelPtr filter_kernel;            // defaults to ss-fixed-gamma:0.95
    double filter_alpha = 1.0;
    int max_attempts = 10000;           // per accepted system
    OptimizerSettings optimizer;

    void validate() const;
};

struct CorpusEntry {
    int index = 0;
    int candidate = 0;          // rng stream id of the accepted candidate
    SystemSpec spec;
    Vec u;
    double m = 0.0;
    double snr = 0.0;
    double tail_energy = 0.0;
    int attempts = 0;           // candidates drawn for this entry
    std::optional<double> filter_xmse;
};

struct Corpus {
    std::vector<CorpusEntry> entries;
    int candidates = 0;
    int rejected = 0;
};

/// One candidate, deterministic in (spec.seed, candidate). Throws NumericError when the
/// candidate is unusable (rank-deficient input, constant output).
CorpusEntry make_candidate(const CorpusSpec &spec, int candidate);

/// EB regularized XMSE used by the filter. Absent when the breakdown is uncertified.
std::optional<double> filter_xmse(const CorpusEntry &e, const CorpusSpec &spec);

/// Candidates are drawn in index order; each accepted one passes the filter (when enabled).
/// Throws NumericError when max_attempts candidates in a row fail.
Corpus generate_corpus(const CorpusSpec &spec);

}  // namespace ebxmse
