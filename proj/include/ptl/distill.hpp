#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ptl/data.hpp"
#include "ptl/training.hpp"

namespace ptl {

enum class KdMethod { kLogitMatching, kSoftTarget };

KdMethod parse_kd_method(const std::string& name);
std::string to_string(KdMethod m);

struct KdConfig {
  KdMethod method = KdMethod::kSoftTarget;
  double lambda = 1.0;
  double temperature = 4.0;

  void validate() const;
};

json kd_config_to_json(const KdConfig& cfg);
KdConfig kd_config_from_json(const json& j, KdConfig defaults = {});

struct KdLoss {
  double loss;              // batch mean
  MatrixXd grad_logits;     // per-sample gradient w.r.t. student logits
};

/// Distillation term for a batch of student/teacher logits. Logit matching
/// is the per-sample mean squared difference; soft target is
/// T^2 * KL(softmax(teacher/T) || softmax(student/T)). The teacher side is
/// constant.
KdLoss kd_loss(KdMethod method, const MatrixXd& student_logits, const MatrixXd& teacher_logits,
               double temperature);

/// Source architecture with a fresh target head, fine-tuned on the target set.
Mlp finetune_teacher(const Mlp& source, const LabeledDataset& target, const TrainConfig& cfg, std::uint64_t seed,
                     double head_scale = 1.0);

/// Trains a freshly initialized `student_arch` on labeled cross-entropy plus
/// lambda times the distillation term against `teacher`. Initialization and
/// batch order match `train_scratch` with the same seed.
Mlp kd_train(std::span<const int> student_arch, const Mlp& teacher, const LabeledDataset& target,
             const KdConfig& kd, const TrainConfig& cfg, std::uint64_t seed);

}  // namespace ptl
