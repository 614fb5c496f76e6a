#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptl/core/linalg.hpp"
#include "ptl/io.hpp"
#include "ptl/labels.hpp"
#include "ptl/random.hpp"

namespace ptl {

struct LabeledDataset {
  MatrixXd features;  // N x d
  std::vector<int> labels;
  std::string label_space;
  int num_classes = 0;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  void validate() const;
  /// Rows of each class, indexed by class.
  std::vector<std::vector<Eigen::Index>> rows_by_class() const;
  /// One-hot label rows (N x K).
  MatrixXd one_hot_targets() const;
};

struct UnlabeledDataset {
  MatrixXd features;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  void validate() const;
};

json dataset_to_json(const LabeledDataset& ds);
LabeledDataset labeled_dataset_from_json(const json& j);
json dataset_to_json(const UnlabeledDataset& ds);
UnlabeledDataset unlabeled_dataset_from_json(const json& j);

/// Parameters of a synthetic source/target task pair.
///
/// Source classes are Gaussians whose means lie on a sphere of radius
/// `source_radius` and whose covariances have eigenvalues drawn from
/// [cov_min, cov_max]. Target class k is centred at `sum_c M(k,c) mu_c` plus
/// an isotropic Gaussian offset with standard deviation `align_noise`, with
/// covariance `sum_c M(k,c) Sigma_c`.
struct TaskPairSpec {
  int feature_dim = 16;
  int source_classes = 20;
  int target_classes = 8;
  int source_per_class = 500;
  int target_train = 200;
  int target_test = 400;
  double source_radius = 3.0;
  double cov_min = 0.3;
  double cov_max = 1.2;
  // Empty: drawn from the seed, each row supported on `mixing_support` classes.
  MatrixXd mixing;
  int mixing_support = 1;
  double align_noise = 0.0;
  std::uint64_t seed = 0;
  std::string source_space = "source";
  std::string target_space = "target";

  void validate() const;
};

json task_spec_to_json(const TaskPairSpec& spec);
TaskPairSpec task_spec_from_json(const json& j);

struct TaskPair {
  LabeledDataset source;
  LabeledDataset target_train;
  LabeledDataset target_test;
  MatrixXd mixing;                     // K_t x K_s
  std::vector<VectorXd> target_means;  // constructed class means
  std::vector<VectorXd> source_means;
};

/// Deterministic in `spec.seed`. Every random component draws from its own
/// stream, so changing `align_noise` only rescales the target offsets.
TaskPair make_task_pair(const TaskPairSpec& spec);

enum class ConditioningMode { kInterpolate, kMixture };

ConditioningMode parse_conditioning_mode(const std::string& name);
std::string to_string(ConditioningMode mode);

/// Class-conditional Gaussian generator accepting soft labels.
///
/// Interpolate mode samples N(sum_c y_c mu_c, sum_c y_c Sigma_c); mixture mode
/// draws a class from Categorical(y) and samples that class's Gaussian.
class ConditionalGenerator {
 public:
  ConditionalGenerator(std::vector<VectorXd> means, std::vector<MatrixXd> covs,
                       ConditioningMode mode = ConditioningMode::kInterpolate);

  int num_classes() const { return static_cast<int>(means_.size()); }
  Eigen::Index dim() const { return means_.front().size(); }
  ConditioningMode mode() const { return mode_; }
  void set_mode(ConditioningMode mode) { mode_ = mode; }
  const std::vector<VectorXd>& means() const { return means_; }
  const std::vector<MatrixXd>& covs() const { return covs_; }

  VectorXd conditional_mean(const LabelDistribution& y) const;
  MatrixXd sample(const LabelDistribution& y, int n, Rng& rng) const;

 private:
  void check_label(const LabelDistribution& y) const;

  std::vector<VectorXd> means_;
  std::vector<MatrixXd> covs_;
  std::vector<MatrixXd> factors_;  // lower Cholesky factor per class
  ConditioningMode mode_;
};

json generator_to_json(const ConditionalGenerator& gen);
ConditionalGenerator generator_from_json(const json& j);

/// Per-class Gaussian fit. The returned generator holds only the fitted
/// moments, never source rows.
ConditionalGenerator fit_source_generator(const LabeledDataset& source,
                                          ConditioningMode mode = ConditioningMode::kInterpolate);

inline MatrixXd sample_generator(const ConditionalGenerator& gen, const LabelDistribution& y,
                                 int n, Rng& rng) {
  return gen.sample(y, n, rng);
}

/// Draws an n x d matrix of N(mean, L L^T) samples.
MatrixXd sample_gaussian(const VectorXd& mean, const MatrixXd& lower_factor, int n, Rng& rng);

/// Lower Cholesky factor of a PSD matrix; semidefinite inputs fall back to an
/// eigen-based factor.
MatrixXd psd_factor(const MatrixXd& cov);

}  // namespace ptl
