#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "ptl/core/mlp.hpp"
#include "ptl/core/sgd.hpp"
#include "ptl/data.hpp"

namespace ptl {

using Mlp = MlpClassifier<double>;

/// Mini-batch SGD settings for epoch-based training. `sgd.decay_epochs` are
/// counted in epochs.
struct TrainConfig {
  int epochs = 60;
  int batch_size = 16;
  SgdOptions sgd{.learning_rate = 0.05, .momentum = 0.9, .weight_decay = 1e-4,
                 .nesterov = true, .decay_epochs = {30, 50}, .decay_factor = 0.1};

  void validate() const;
};

json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j, TrainConfig defaults = {});

/// Extra objective terms injected into the supervised loop.
///
/// `on_logits` may add per-sample logit gradients for the current labeled
/// batch and returns its loss contribution. `on_grads` may add parameter
/// gradients after the labeled backward pass and returns its loss
/// contribution.
struct StepHooks {
  std::function<double(const MatrixXd& batch, const MatrixXd& logits, MatrixXd& grad_logits)> on_logits;
  std::function<double(const Mlp& net, LayerList<double>& grads)> on_grads;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean total loss per epoch
};

/// Epoch-based mini-batch training on rows of `features` against target
/// distributions `targets` (N x K). Each epoch draws a fresh permutation from
/// the stream derived from `seed`.
Mlp train_supervised(Mlp net, const MatrixXd& features, const MatrixXd& targets,
                     const TrainConfig& cfg, std::uint64_t seed, const StepHooks& hooks = {},
                     TrainLog* log = nullptr);

inline Mlp train_supervised(Mlp net, const LabeledDataset& data, const TrainConfig& cfg,
                            std::uint64_t seed, const StepHooks& hooks = {}, TrainLog* log = nullptr) {
  data.validate();
  return train_supervised(std::move(net), data.features, data.one_hot_targets(), cfg, seed, hooks, log);
}

/// He-normal initialization from the seed's "init" stream.
Mlp init_classifier(std::span<const int> widths, std::uint64_t seed);

/// Fresh initialization followed by supervised training.
Mlp train_scratch(std::span<const int> widths, const LabeledDataset& data, const TrainConfig& cfg,
                  std::uint64_t seed);

/// Source classifier on the labeled source set. Its output width must equal
/// the source class count.
Mlp train_source_classifier(const LabeledDataset& source, std::span<const int> widths,
                            const TrainConfig& cfg, std::uint64_t seed);

/// Rows of `m` selected by `idx`.
MatrixXd gather_rows(const MatrixXd& m, std::span<const Eigen::Index> idx);

void check_finite_loss(double loss, const char* where, long step, double lr);

}  // namespace ptl
