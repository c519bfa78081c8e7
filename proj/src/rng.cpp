#include "ebxmse/rng.hpp"

#include <cmath>

namespace ebxmse {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t base_seed, std::uint64_t stream_id)
    : engine_(splitmix64(base_seed ^ splitmix64(stream_id + 0x9E3779B97F4A7C15ULL))) {}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
    require(hi >= lo, "uniform_int: empty range");
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // bias is < span / 2^64, negligible for the ranges used here
    return lo + static_cast<int>(engine_() % span);
}

double Rng::normal() {
    if (spare_) {
        const double s = *spare_;
        spare_.reset();
        return s;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    return u * f;
}

Vec Rng::normal_vec(Eigen::Index n) {
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) { out[i] = normal(); }
    return out;
}

}  // namespace ebxmse
