#pragma once

#include <vector>

#include "ptl/data.hpp"
#include "ptl/labels.hpp"
#include "ptl/training.hpp"

namespace ptl {

/// Pseudo source labels, one per target sample in dataset order.
struct PseudoLabelSet {
  std::vector<LabelDistribution> labels;
  std::vector<int> origin;  // index of the originating target sample

  std::size_t size() const { return labels.size(); }
};

struct LabelFunctionOptions {
  double temperature = 0.4;  // temp_softmax only
};

/// Runs the source classifier on every target sample with its final softmax
/// replaced by `fn`. Only `kRandom` consumes `rng`; `kClasswiseMean` replaces
/// each sample's softmax output by the mean over its target class.
PseudoLabelSet pseudo_labels(const Mlp& source, const LabeledDataset& target, LabelFunction fn, Rng& rng,
                             const LabelFunctionOptions& opts = {});

/// Generated samples plus, for each row, the target sample whose pseudo
/// label conditioned it.
struct PseudoDataset {
  UnlabeledDataset data;
  std::vector<int> origin;
};

/// Cycles the label set until `count` labels are used (the last pass is
/// truncated) and draws one generator sample per label.
PseudoDataset build_pseudo_dataset(const ConditionalGenerator& gen, const PseudoLabelSet& labels, int count,
                                   Rng& rng);

json pseudo_dataset_to_json(const PseudoDataset& ds);
PseudoDataset pseudo_dataset_from_json(const json& j);

}  // namespace ptl
