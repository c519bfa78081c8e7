#pragma once

#include <functional>

#include "ebxmse/kernels.hpp"

namespace ebxmse {

struct OptimizerSettings {
    int grid = 25;          // points per coordinate in the coarse grid
    double tol = 1e-8;      // simplex size in search coordinates
    int max_iter = 4000;
    int starts = 3;         // best grid points refined by the simplex
};

struct OptimResult {
    Vec x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool on_boundary = false;
};

/// Grid search over `box` followed by Nelder-Mead in search coordinates
/// (log for scale coordinates), clamped to the box and restarted from its endpoint
/// while that improves. Non-finite or throwing
/// evaluations count as +inf. The per-coordinate density drops below `grid` when
/// the full grid would exceed 65536 points. Ties resolve to the lexicographically smallest point.
OptimResult minimize_box(const std::function<double(const Vec &)> &f, const Box &box,
                         const OptimizerSettings &settings = {});

}  // namespace ebxmse
