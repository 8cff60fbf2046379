#pragma once

#include <complex>
#include <cstdio>
#include <string>

#include <Eigen/Dense>

namespace retroq {

using Real = double;
using Complex = std::complex<double>;
using Index = Eigen::Index;

using VecR = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using MatC = Eigen::MatrixXcd;

inline constexpr Real kPi = 3.14159265358979323846;
inline constexpr Complex kI{0.0, 1.0};

/// Compact %g rendering for error messages (std::to_string drops small values).
inline std::string fmt_real(Real v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Internal units: hbar = 1 throughout; masses, lengths and times are
// dimensionless in those units.

}  // namespace retroq
