#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ebxmse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Invalid input: bad sizes, out-of-box parameters, malformed config.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical precondition failed (SPD factorization, rank, degenerate denominator).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
    if (!cond) { throw ConfigError(msg); }
}

inline std::vector<double> to_std(const Vec &v) { return {v.data(), v.data() + v.size()}; }

inline Vec from_std(const std::vector<double> &v) {
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace ebxmse
