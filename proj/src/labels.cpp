#include "ptl/labels.hpp"

#include <algorithm>
#include <functional>

#include "ptl/core/loss.hpp"

namespace ptl {

LabelDistribution::LabelDistribution(VectorXd probs, std::string label_space)
    : probs_(std::move(probs)), label_space_(std::move(label_space)) {
  if (probs_.size() == 0) throw ValidationError("LabelDistribution: empty");
  check_distribution(probs_, "LabelDistribution");
}

LabelDistribution LabelDistribution::one_hot(Eigen::Index index, Eigen::Index num_classes,
                                             std::string label_space) {
  if (index < 0 || index >= num_classes) throw ValidationError("one_hot: index out of range");
  VectorXd p = VectorXd::Zero(num_classes);
  p[index] = 1.0;
  return LabelDistribution(std::move(p), std::move(label_space));
}

LabelFunction parse_label_function(std::string_view name) {
  if (name == "softmax") return LabelFunction::kSoftmax;
  if (name == "temp_softmax") return LabelFunction::kTempSoftmax;
  if (name == "argmax") return LabelFunction::kArgmax;
  if (name == "sparsemax") return LabelFunction::kSparsemax;
  if (name == "classwise_mean") return LabelFunction::kClasswiseMean;
  if (name == "random") return LabelFunction::kRandom;
  throw ValidationError("unknown label function '" + std::string(name) + "'");
}

std::string to_string(LabelFunction fn) {
  switch (fn) {
    case LabelFunction::kSoftmax: return "softmax";
    case LabelFunction::kTempSoftmax: return "temp_softmax";
    case LabelFunction::kArgmax: return "argmax";
    case LabelFunction::kSparsemax: return "sparsemax";
    case LabelFunction::kClasswiseMean: return "classwise_mean";
    case LabelFunction::kRandom: return "random";
  }
  return "?";
}

LabelDistribution softmax(const VectorXd& logits) { return LabelDistribution(stable_softmax(logits)); }

LabelDistribution temperature_softmax(const VectorXd& logits, double tau) {
  if (!(tau > 0)) throw ValidationError("temperature_softmax: tau must be > 0");
  return LabelDistribution(stable_softmax((logits / tau).eval()));
}

LabelDistribution argmax_onehot(const VectorXd& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = k;
  return LabelDistribution::one_hot(best, logits.size());
}

LabelDistribution sparsemax(const VectorXd& logits) {
  const Eigen::Index n = logits.size();
  std::vector<double> z(logits.data(), logits.data() + n);
  std::sort(z.begin(), z.end(), std::greater<>());
  // Support size: largest k with 1 + k * z_(k) > sum_{j<=k} z_(j).
  double cumsum = 0.0;
  double support_sum = 0.0;
  Eigen::Index support = 0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    cumsum += z[static_cast<std::size_t>(k - 1)];
    if (1.0 + static_cast<double>(k) * z[static_cast<std::size_t>(k - 1)] > cumsum) {
      support = k;
      support_sum = cumsum;
    }
  }
  const double threshold = (support_sum - 1.0) / static_cast<double>(support);
  VectorXd p = (logits.array() - threshold).cwiseMax(0.0).matrix();
  // Renormalize away the rounding residue of the threshold.
  p /= p.sum();
  return LabelDistribution(std::move(p));
}

std::vector<LabelDistribution> classwise_mean(std::span<const LabelDistribution> labels,
                                              std::span<const int> group_of, int num_groups) {
  if (labels.size() != group_of.size()) {
    throw DimensionError("classwise_mean: one group id per label required");
  }
  if (labels.empty()) throw ValidationError("classwise_mean: no labels");
  const Eigen::Index k = labels.front().size();
  std::vector<VectorXd> sums(static_cast<std::size_t>(num_groups), VectorXd::Zero(k));
  std::vector<int> counts(static_cast<std::size_t>(num_groups), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int g = group_of[i];
    if (g < 0 || g >= num_groups) throw ValidationError("classwise_mean: group id out of range");
    if (labels[i].size() != k) throw DimensionError("classwise_mean: label sizes differ");
    sums[static_cast<std::size_t>(g)] += labels[i].probs();
    ++counts[static_cast<std::size_t>(g)];
  }
  std::vector<LabelDistribution> out;
  out.reserve(static_cast<std::size_t>(num_groups));
  for (int g = 0; g < num_groups; ++g) {
    if (counts[static_cast<std::size_t>(g)] == 0) {
      throw ValidationError("classwise_mean: group " + std::to_string(g) + " is empty");
    }
    out.emplace_back(sums[static_cast<std::size_t>(g)] / counts[static_cast<std::size_t>(g)],
                     labels.front().label_space());
  }
  return out;
}

LabelDistribution random_label(int num_classes, Rng& rng) {
  if (num_classes < 1) throw ValidationError("random_label: need at least one class");
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  return LabelDistribution::one_hot(pick(rng), num_classes);
}

}  // namespace ptl
