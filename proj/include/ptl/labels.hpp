#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptl/core/types.hpp"
#include "ptl/random.hpp"

namespace ptl {

/// Probability vector over a named label space. Entries are non-negative
/// and sum to one within 1e-9.
class LabelDistribution {
 public:
  explicit LabelDistribution(VectorXd probs, std::string label_space = {});

  static LabelDistribution one_hot(Eigen::Index index, Eigen::Index num_classes,
                                   std::string label_space = {});

  const VectorXd& probs() const { return probs_; }
  Eigen::Index size() const { return probs_.size(); }
  double operator[](Eigen::Index k) const { return probs_[k]; }
  double max_prob() const { return probs_.maxCoeff(); }
  const std::string& label_space() const { return label_space_; }

 private:
  VectorXd probs_;
  std::string label_space_;
};

/// Output label function applied in place of the source classifier's
/// final softmax when deriving pseudo source labels.
enum class LabelFunction { kSoftmax, kTempSoftmax, kArgmax, kSparsemax, kClasswiseMean, kRandom };

LabelFunction parse_label_function(std::string_view name);
std::string to_string(LabelFunction fn);

LabelDistribution softmax(const VectorXd& logits);
LabelDistribution temperature_softmax(const VectorXd& logits, double tau);

/// One-hot at the largest logit; ties go to the lowest index.
LabelDistribution argmax_onehot(const VectorXd& logits);

/// Euclidean projection of `logits` onto the probability simplex.
LabelDistribution sparsemax(const VectorXd& logits);

/// Mean distribution of each group. `group_of[i]` names the group of
/// `labels[i]`; every group in [0, num_groups) must be non-empty.
std::vector<LabelDistribution> classwise_mean(std::span<const LabelDistribution> labels,
                                              std::span<const int> group_of, int num_groups);

/// One-hot at a uniformly drawn class.
LabelDistribution random_label(int num_classes, Rng& rng);

}  // namespace ptl
