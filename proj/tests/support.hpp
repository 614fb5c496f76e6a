#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "ptl/data.hpp"
#include "ptl/training.hpp"

namespace ptl::test {

inline MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline VectorXd random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale).col(0);
}

inline MatrixXd random_rotation(Eigen::Index d, Rng& rng) {
  Eigen::HouseholderQR<MatrixXd> qr(random_matrix(d, d, rng));
  return qr.householderQ();
}

inline MatrixXd random_spd(Eigen::Index d, Rng& rng) {
  const MatrixXd b = random_matrix(d, d, rng);
  return b.transpose() * b + 0.1 * MatrixXd::Identity(d, d);
}

/// Rows drawn from a softmax distribution over K classes, one per row.
inline MatrixXd random_simplex_rows(Eigen::Index rows, Eigen::Index k, Rng& rng) {
  MatrixXd m = random_matrix(rows, k, rng).array().exp().matrix();
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

/// Bitwise equality of every weight and bias.
inline bool same_weights(const Mlp& a, const Mlp& b) {
  if (a.widths() != b.widths()) return false;
  for (std::size_t i = 0; i < a.num_layers(); ++i) {
    if (a.layers()[i].weight != b.layers()[i].weight) return false;
    if (a.layers()[i].bias != b.layers()[i].bias) return false;
  }
  return true;
}

/// Euclidean projection of z onto the simplex by enumerating every support
/// set: each candidate solves the KKT system on its support, and the feasible
/// candidate closest to z wins.
inline VectorXd brute_force_simplex_projection(const VectorXd& z) {
  const auto k = static_cast<int>(z.size());
  VectorXd best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < k; ++i)
      if (mask & (1u << i)) {
        sum += z[i];
        ++count;
      }
    const double tau = (sum - 1.0) / count;
    VectorXd p = VectorXd::Zero(k);
    bool feasible = true;
    for (int i = 0; i < k; ++i)
      if (mask & (1u << i)) {
        p[i] = z[i] - tau;
        if (p[i] < 0) feasible = false;
      }
    if (!feasible) continue;
    const double dist = (p - z).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = p;
    }
  }
  return best;
}

/// Small task pair for fast end-to-end tests.
inline TaskPairSpec small_task(std::uint64_t seed = 0) {
  TaskPairSpec spec;
  spec.feature_dim = 6;
  spec.source_classes = 6;
  spec.target_classes = 3;
  spec.source_per_class = 80;
  spec.target_train = 48;
  spec.target_test = 60;
  spec.seed = seed;
  return spec;
}

inline TrainConfig short_training(int epochs = 4) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.sgd.learning_rate = 0.05;
  cfg.sgd.decay_epochs = {};
  return cfg;
}

}  // namespace ptl::test
