#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ossimm {

using cplx = std::complex<double>;

using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
// Column-major: each column is one fast-time image, each row one voxel.
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using CMatrixRowMajor = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One OSSI oscillation period for one voxel (length n_c).
using FastTimeSignal = CVector;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Thrown when an iterative stage produces non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ossimm
