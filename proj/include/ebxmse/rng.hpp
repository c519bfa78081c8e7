#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "ebxmse/types.hpp"

namespace ebxmse {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014). Used only for seed derivation.
std::uint64_t splitmix64(std::uint64_t x);

/// Reproducible random stream.
///
/// Engine: std::mt19937_64, whose output sequence is fixed by the C++ standard.
/// Seeding: engine seed = splitmix64(base_seed ^ splitmix64(stream_id + 0x9E3779B97F4A7C15)).
/// Uniforms use the top 53 bits of one engine draw; Gaussians use the Marsaglia
/// polar method on those uniforms. None of the std:: distributions are used, so
/// draws are bit-identical across standard libraries and platforms.
///
/// One stream per consumer; a stream is not thread-safe.
class Rng {
public:
    explicit Rng(std::uint64_t base_seed, std::uint64_t stream_id = 0);

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Integer uniform on [lo, hi] (inclusive), rejection-free modulo for small ranges.
    int uniform_int(int lo, int hi);
    double normal();
    Vec normal_vec(Eigen::Index n);

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

}  // namespace ebxmse
