#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ptl/data.hpp"
#include "ptl/pcs.hpp"
#include "ptl/training.hpp"

namespace ptl {

enum class PretrainStrategy { kUniform, kFiltered, kPcs, kOffline };

PretrainStrategy parse_pretrain_strategy(const std::string& name);
std::string to_string(PretrainStrategy s);

/// Step-based schedule: `sgd.decay_epochs` are counted in steps here.
struct PretrainConfig {
  int steps = 2000;
  int batch_size = 64;
  SgdOptions sgd{.learning_rate = 0.1, .momentum = 0.9, .weight_decay = 1e-4,
                 .nesterov = true, .decay_epochs = {1200}, .decay_factor = 0.1};
  // Offline pool size as a fraction of steps * batch_size; the pool is
  // reused for the full step budget.
  double offline_fraction = 0.05;
  bool offline_shuffle = true;

  void validate() const;
  int offline_pool_size() const;
};

json pretrain_config_to_json(const PretrainConfig& cfg);
PretrainConfig pretrain_config_from_json(const json& j, PretrainConfig defaults = {});

/// Strategy-specific label sources. `classes` is required by kFiltered,
/// `pcs_labels` by kPcs.
struct PretrainLabels {
  std::vector<int> classes;
  const PseudoLabelSet* pcs_labels = nullptr;
};

/// A generated labeled batch: features and target distributions.
struct SyntheticBatch {
  MatrixXd features;
  MatrixXd targets;
};

/// Draws one batch for an online strategy (kOffline draws like kUniform).
SyntheticBatch draw_pretrain_batch(const ConditionalGenerator& gen, PretrainStrategy strategy,
                                   const PretrainLabels& labels, int batch_size, Rng& rng);

/// Pre-trains `arch` (output width must equal the generator class count) on
/// generated batches. Online strategies draw a fresh batch each step; kOffline
/// first draws a fixed pool then cycles over it.
Mlp pseudo_pretrain(std::span<const int> arch, const ConditionalGenerator& gen, const PretrainConfig& cfg,
                    PretrainStrategy strategy, std::uint64_t seed, const PretrainLabels& labels = {});

/// Runs the pre-training loop from `init` over an explicit, pre-generated
/// sample sequence, consuming consecutive batches of `batch_size` rows.
Mlp pretrain_on_pool(Mlp init, const SyntheticBatch& pool, const PretrainConfig& cfg, std::uint64_t seed);

/// Replaces the final layer by a fresh `new_classes`-way head with
/// N(0, init_scale^2 / fan_in) weights and zero bias; all other layers are
/// kept as is.
Mlp swap_final_layer(const Mlp& net, int new_classes, double init_scale, Rng& rng);

}  // namespace ptl
