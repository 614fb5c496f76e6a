#include "ptl/distill.hpp"

#include "ptl/core/loss.hpp"
#include "ptl/pretrain.hpp"

namespace ptl {

KdMethod parse_kd_method(const std::string& name) {
  if (name == "logit_matching") return KdMethod::kLogitMatching;
  if (name == "soft_target") return KdMethod::kSoftTarget;
  throw ValidationError("unknown distillation method '" + name + "'");
}

std::string to_string(KdMethod m) { return m == KdMethod::kLogitMatching ? "logit_matching" : "soft_target"; }

void KdConfig::validate() const {
  if (!(lambda >= 0)) throw ValidationError("KdConfig: lambda must be >= 0");
  if (!(temperature > 0)) throw ValidationError("KdConfig: temperature must be > 0");
}

json kd_config_to_json(const KdConfig& cfg) {
  return {{"method", to_string(cfg.method)}, {"lambda", cfg.lambda}, {"temperature", cfg.temperature}};
}

KdConfig kd_config_from_json(const json& j, KdConfig cfg) {
  if (j.contains("method")) cfg.method = parse_kd_method(j.at("method").get<std::string>());
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.validate();
  return cfg;
}

KdLoss kd_loss(KdMethod method, const MatrixXd& student_logits, const MatrixXd& teacher_logits,
               double temperature) {
  if (student_logits.rows() != teacher_logits.rows() || student_logits.cols() != teacher_logits.cols()) {
    throw DimensionError("kd_loss: student and teacher logits have different shapes");
  }
  if (!(temperature > 0)) throw ValidationError("kd_loss: temperature must be > 0");
  const auto b = static_cast<double>(student_logits.rows());
  const auto k = static_cast<double>(student_logits.cols());
  KdLoss out;
  if (method == KdMethod::kLogitMatching) {
    const MatrixXd diff = student_logits - teacher_logits;
    out.loss = diff.squaredNorm() / (k * b);
    out.grad_logits = (2.0 / k) * diff;
    return out;
  }
  const double t = temperature;
  const MatrixXd log_ps = log_softmax_rows((student_logits / t).eval());
  const MatrixXd log_pt = log_softmax_rows((teacher_logits / t).eval());
  const MatrixXd pt = log_pt.array().exp().matrix();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < pt.rows(); ++i)
    for (Eigen::Index j = 0; j < pt.cols(); ++j)
      if (pt(i, j) > 0) kl += pt(i, j) * (log_pt(i, j) - log_ps(i, j));
  out.loss = t * t * std::max(0.0, kl) / b;
  // d/dz_s of T^2 KL = T (softmax(z_s/T) - softmax(z_t/T))
  out.grad_logits = t * (log_ps.array().exp().matrix() - pt);
  return out;
}

Mlp finetune_teacher(const Mlp& source, const LabeledDataset& target, const TrainConfig& cfg, std::uint64_t seed,
                     double head_scale) {
  target.validate();
  Rng head_rng(derive_seed(seed, "teacher-head"));
  Mlp teacher = swap_final_layer(source, target.num_classes, head_scale, head_rng);
  return train_supervised(std::move(teacher), target, cfg, seed);
}

Mlp kd_train(std::span<const int> student_arch, const Mlp& teacher, const LabeledDataset& target,
             const KdConfig& kd, const TrainConfig& cfg, std::uint64_t seed) {
  kd.validate();
  target.validate();
  if (student_arch.empty() || student_arch.back() != teacher.output_dim()) {
    throw DimensionError("kd_train: student and teacher output widths differ");
  }
  if (teacher.input_dim() != target.dim()) throw DimensionError("kd_train: teacher input width differs from target");
  StepHooks hooks;
  hooks.on_logits = [&](const MatrixXd& xb, const MatrixXd& logits, MatrixXd& grad_logits) {
    const KdLoss l = kd_loss(kd.method, logits, teacher.forward(xb), kd.temperature);
    grad_logits += kd.lambda * l.grad_logits;
    return kd.lambda * l.loss;
  };
  return train_supervised(init_classifier(student_arch, seed), target, cfg, seed, hooks);
}

}  // namespace ptl
