#pragma once

#include <cmath>
#include <string>

#include "ptl/core/types.hpp"

namespace ptl {

inline constexpr double kCovarianceEpsilon = 1e-6;
inline constexpr double kSymmetryTolerance = 1e-8;
inline constexpr double kEigenClamp = 1e-8;

/// Principal square root of a symmetric positive semidefinite matrix via its
/// eigendecomposition. Eigenvalues in [-1e-8, 0) are treated as zero.
template <typename Derived>
Matrix<typename Derived::Scalar> matrix_sqrt_psd(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() != a.cols()) throw DimensionError("matrix_sqrt_psd: matrix is not square");
  const Matrix<Scalar> m = a;
  const double scale = std::max(1.0, static_cast<double>(m.cwiseAbs().maxCoeff()));
  if (static_cast<double>((m - m.transpose()).cwiseAbs().maxCoeff()) > kSymmetryTolerance * scale) {
    throw ValidationError("matrix_sqrt_psd: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m);
  if (es.info() != Eigen::Success) throw ValidationError("matrix_sqrt_psd: eigendecomposition failed");
  Vector<Scalar> ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < Scalar(-kEigenClamp) * static_cast<Scalar>(scale)) {
      throw ValidationError("matrix_sqrt_psd: matrix has a negative eigenvalue " +
                            std::to_string(static_cast<double>(ev[i])));
    }
    ev[i] = ev[i] > Scalar(0) ? std::sqrt(ev[i]) : Scalar(0);
  }
  const auto& v = es.eigenvectors();
  Matrix<Scalar> s = v * ev.asDiagonal() * v.transpose();
  return (s + s.transpose()) / Scalar(2);
}

template <typename Scalar>
struct GaussianFit {
  Vector<Scalar> mean;
  Matrix<Scalar> cov;
};

/// Sample mean and unbiased covariance of the rows of `samples` (N x d).
/// A singular estimate (smallest eigenvalue below epsilon) gets epsilon * I
/// added.
template <typename Derived>
GaussianFit<typename Derived::Scalar> fit_gaussian(const Eigen::MatrixBase<Derived>& samples,
                                                   double epsilon = kCovarianceEpsilon) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n == 0) throw ValidationError("fit_gaussian: no samples");
  GaussianFit<Scalar> fit;
  fit.mean = samples.colwise().mean().transpose();
  if (n == 1) {
    fit.cov = Matrix<Scalar>::Zero(d, d);
  } else {
    const Matrix<Scalar> centered = samples.rowwise() - fit.mean.transpose();
    fit.cov = (centered.transpose() * centered) / static_cast<Scalar>(n - 1);
    fit.cov = (fit.cov + fit.cov.transpose()) / Scalar(2);
  }
  bool singular = n <= d;
  if (!singular) {
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(fit.cov, Eigen::EigenvaluesOnly);
    singular = es.eigenvalues()[0] < static_cast<Scalar>(epsilon);
  }
  if (singular) fit.cov += static_cast<Scalar>(epsilon) * Matrix<Scalar>::Identity(d, d);
  return fit;
}

}  // namespace ptl
