#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptl/data.hpp"
#include "ptl/pcs.hpp"
#include "ptl/training.hpp"

namespace ptl {

enum class SslMethod { kUda, kFixMatch, kPseudoLabel, kSoftPseudoLabel, kEntMin, kConsistency };

SslMethod parse_ssl_method(const std::string& name);
std::string to_string(SslMethod m);

/// Soft-label methods keep a full distribution as the unlabeled target.
constexpr bool is_soft_label_method(SslMethod m) {
  return m == SslMethod::kUda || m == SslMethod::kSoftPseudoLabel || m == SslMethod::kConsistency;
}

struct SslConfig {
  SslMethod method = SslMethod::kUda;
  double lambda = 1.0;
  double beta = 0.5;  // confidence threshold
  double tau = 0.4;   // sharpening temperature
  int unsup_batch = 64;
  double aug_strength = 0.5;

  void validate() const;
};

json ssl_config_to_json(const SslConfig& cfg);
SslConfig ssl_config_from_json(const json& j, SslConfig defaults = {});

/// Feature-space perturbation standing in for image augmentation: Gaussian
/// noise with per-coordinate scale `strength * feature_std`, then each
/// coordinate zeroed with probability 0.1 * strength. Strength 0 is the
/// identity and draws nothing from `rng`.
struct Augmenter {
  double strength = 0.0;
  VectorXd feature_std;  // empty means unit scale

  MatrixXd apply(const MatrixXd& batch, Rng& rng) const;
};

VectorXd augment(const VectorXd& x, double strength, Rng& rng, const VectorXd& feature_std = {});

struct UnsupResult {
  double loss = 0.0;             // mean over the unlabeled batch
  LayerList<double> grads;       // gradient of `loss`
  double mask_rate = 0.0;        // fraction of samples contributing
};

/// Unlabeled objective of `cfg.method` on the batch `x_u`. Targets derived
/// from the student's own predictions are treated as constants.
UnsupResult unsup_loss(const Mlp& student, const MatrixXd& x_u, const SslConfig& cfg, const Augmenter& aug,
                       Rng& rng);

/// Minimizes mean labeled cross-entropy + lambda * mean unlabeled loss. Each
/// labeled mini-batch step is paired with one unlabeled batch drawn (with
/// replacement) from `pseudo`. Unlabeled sampling and augmentation use a
/// stream separate from the labeled shuffling.
Mlp train_pssl(Mlp init, const LabeledDataset& target, const UnlabeledDataset& pseudo, const SslConfig& ssl,
               const TrainConfig& train, std::uint64_t seed, TrainLog* log = nullptr);

/// Supervised training on the union of the labeled target set and pseudo
/// samples labeled by their originating target sample's class.
Mlp train_pseudo_supervised(Mlp init, const LabeledDataset& target, const PseudoDataset& pseudo,
                            const TrainConfig& train, std::uint64_t seed);

}  // namespace ptl
