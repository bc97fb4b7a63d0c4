#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "rmdiff/error.hpp"

namespace rmdiff {

/// exp(A) by scaling and squaring: scale A by 2^-s so that its 1-norm is at
/// most 1/2, sum the Taylor series to double precision, square s times.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw InvalidArgument("expm: matrix must be square");
    const Eigen::Index n = a.rows();
    if (!a.allFinite()) throw NumericalError("expm: non-finite input");
    double norm1 = n ? a.cwiseAbs().colwise().sum().maxCoeff() : 0.0;
    int s = 0;
    if (norm1 > 0.5) s = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
    Eigen::MatrixXd scaled = a / std::ldexp(1.0, s);
    Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    // ||scaled|| <= 1/2: 30 terms leave a remainder below 2^-30 / 30! ~ 1e-42.
    for (int k = 1; k <= 30; ++k) {
        term = term * scaled / static_cast<double>(k);
        result += term;
        if (term.cwiseAbs().maxCoeff() < 1e-18 * result.cwiseAbs().maxCoeff()) break;
    }
    for (int i = 0; i < s; ++i) result = result * result;
    return result;
}

} // namespace rmdiff
