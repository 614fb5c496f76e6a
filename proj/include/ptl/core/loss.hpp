#pragma once

#include <cmath>
#include <string>

#include "ptl/core/types.hpp"

namespace ptl {

/// Max-subtracted softmax of a single logit vector.
template <typename Derived>
Vector<typename Derived::Scalar> stable_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Row-wise softmax of a (B x K) logit matrix.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    out.row(i) = stable_softmax(logits.row(i).transpose()).transpose();
  return out;
}

/// Row-wise log-softmax, stable for large logit gaps.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

template <typename Derived>
void check_distribution(const Eigen::MatrixBase<Derived>& p, const char* what, double tol = 1e-9) {
  if ((p.array() < 0).any()) throw ValidationError(std::string(what) + ": negative probability");
  const double s = static_cast<double>(p.sum());
  if (!(std::abs(s - 1.0) <= tol)) {
    throw ValidationError(std::string(what) + ": probabilities sum to " + std::to_string(s));
  }
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss;
  Vector<Scalar> grad_logits;
};

/// Cross-entropy of a (possibly soft) target against softmax(logits), with its
/// gradient `softmax(logits) - target`.
template <typename D1, typename D2>
LossAndGrad<typename D1::Scalar> softmax_cross_entropy(const Eigen::MatrixBase<D1>& logits,
                                                       const Eigen::MatrixBase<D2>& target) {
  using Scalar = typename D1::Scalar;
  if (logits.size() != target.size()) {
    throw DimensionError("softmax_cross_entropy: logits and target lengths differ");
  }
  check_distribution(target, "softmax_cross_entropy target");
  const Vector<Scalar> z = logits;
  const Scalar m = z.maxCoeff();
  const Scalar lse = m + std::log((z.array() - m).exp().sum());
  Scalar loss = 0;
  for (Eigen::Index k = 0; k < z.size(); ++k)
    if (target[k] > 0) loss -= target[k] * (z[k] - lse);
  Vector<Scalar> grad = stable_softmax(z) - target;
  return {loss < Scalar(0) ? Scalar(0) : loss, std::move(grad)};
}

template <typename Scalar>
struct BatchLoss {
  Scalar mean_loss;
  Matrix<Scalar> grad_logits;  // per-sample d loss_i / d logits_i
};

/// Batch cross-entropy; targets hold one distribution per row. Rows are
/// not re-validated here: callers build targets from validated labels.
template <typename D1, typename D2>
BatchLoss<typename D1::Scalar> softmax_cross_entropy_rows(const Eigen::MatrixBase<D1>& logits,
                                                         const Eigen::MatrixBase<D2>& targets) {
  using Scalar = typename D1::Scalar;
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw DimensionError("softmax_cross_entropy_rows: logits and targets shapes differ");
  }
  const Matrix<Scalar> logp = log_softmax_rows(logits);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    for (Eigen::Index k = 0; k < logits.cols(); ++k)
      if (targets(i, k) > 0) total -= targets(i, k) * logp(i, k);
  Matrix<Scalar> grad = logp.array().exp().matrix() - targets;
  return {total / static_cast<Scalar>(logits.rows()), std::move(grad)};
}

}  // namespace ptl
