#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ebxmse/xmse.hpp"

namespace ebxmse {

struct McConfig {
    SystemSpec spec;
    Vec u;
    int runs = 100;
    std::uint64_t base_seed = 0;
    std::vector<HyperEstimatorSpec> estimators;  // ML is always included

    bool decompose = true;
    bool compute_xmse = true;        // exact and apx XMSE/N^2 plus acc per estimator
    std::optional<Mat> Sigma;        // exact-mode limit; identity when absent
    ApxLevel apx_level = ApxLevel::Full;

    // test hooks
    double noise_scale = 1.0;        // multiplies the drawn noise, sigma2 is unchanged
    bool repeat_first_stream = false;  // every run reuses the run-0 noise stream

    void validate() const;
};

/// Four-way split of a sample MSE difference.
struct Upsilon {
    Vec eta_ref;        // argmin of the MSS-form cost at theta0
    Vec bias;           // mean(theta_TR(eta_ref)) - theta0
    double bias_sq = 0.0;
    double var_trace = 0.0;
    double varhpe_trace = 0.0;
    double hot_trace = 0.0;          // remainder
    double hot_definitional = 0.0;
    double closure_residual = 0.0;   // hot_definitional - hot_trace
};

struct McEstimatorResult {
    std::string name;             // "ml", "eb", "surey", "gcv"
    std::optional<Method> method;
    std::vector<double> se;       // per included run
    std::vector<double> fit;
    std::vector<Vec> eta_hat;
    int boundary_hits = 0;
    double sample_mse = 0.0;
    double mean_fit = 0.0;
    std::optional<double> sample_delta_mse;
    std::optional<Upsilon> upsilon;
    std::optional<XmseBreakdown> xmse_exact;
    std::optional<XmseBreakdown> xmse_apx;
    std::optional<double> acc_exact;
    std::optional<double> acc_apx;
};

struct McReport {
    int runs = 0;
    std::vector<int> included_runs;
    std::vector<int> excluded_runs;
    std::vector<std::string> exclusion_reasons;
    Eigen::Index N = 0;
    double snr = 0.0;
    std::vector<McEstimatorResult> estimators;  // [0] is ML

    const McEstimatorResult &find(const std::string &name) const;
};

/// 100 (1 - |xmse_over_N2 - delta| / |delta|).
double acc_metric(double xmse_over_N2, double sample_delta_mse);

/// Sample moments of the per-run estimates. ml, tr and ref are indexed by run.
Upsilon decompose_upsilon(const std::vector<Vec> &ml, const std::vector<Vec> &tr, const std::vector<Vec> &ref,
                          const Vec &theta0);

McReport run_mc(const McConfig &cfg);

}  // namespace ebxmse
