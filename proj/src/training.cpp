#include "ptl/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ptl/core/loss.hpp"

namespace ptl {

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
  sgd.validate();
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.sgd.learning_rate},
          {"momentum", cfg.sgd.momentum},
          {"weight_decay", cfg.sgd.weight_decay},
          {"nesterov", cfg.sgd.nesterov},
          {"decay_epochs", cfg.sgd.decay_epochs},
          {"decay_factor", cfg.sgd.decay_factor}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.sgd.learning_rate = j.value("lr", cfg.sgd.learning_rate);
  cfg.sgd.momentum = j.value("momentum", cfg.sgd.momentum);
  cfg.sgd.weight_decay = j.value("weight_decay", cfg.sgd.weight_decay);
  cfg.sgd.nesterov = j.value("nesterov", cfg.sgd.nesterov);
  cfg.sgd.decay_epochs = j.value("decay_epochs", cfg.sgd.decay_epochs);
  cfg.sgd.decay_factor = j.value("decay_factor", cfg.sgd.decay_factor);
  cfg.validate();
  return cfg;
}

MatrixXd gather_rows(const MatrixXd& m, std::span<const Eigen::Index> idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

void check_finite_loss(double loss, const char* where, long step, double lr) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string(where) + ": loss diverged (" + std::to_string(loss) + ") at step " +
                        std::to_string(step) + ", learning rate " + std::to_string(lr));
  }
}

Mlp train_supervised(Mlp net, const MatrixXd& features, const MatrixXd& targets, const TrainConfig& cfg,
                     std::uint64_t seed, const StepHooks& hooks, TrainLog* log) {
  cfg.validate();
  net.check_input(features.cols());
  if (targets.rows() != features.rows() || targets.cols() != net.output_dim()) {
    throw DimensionError("train_supervised: targets must be N x " + std::to_string(net.output_dim()));
  }
  OptimizerState<double> opt(cfg.sgd, net.parameters());
  Rng rng(derive_seed(seed, "sup"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto n = static_cast<std::size_t>(features.rows());
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.epoch = epoch;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const Eigen::Index> idx(order.data() + start, std::min(bs, n - start));
      const MatrixXd xb = gather_rows(features, idx);
      const MatrixXd yb = gather_rows(targets, idx);
      const MatrixXd logits = net.forward(xb);
      auto ce = softmax_cross_entropy_rows(logits, yb);
      double loss = ce.mean_loss;
      if (hooks.on_logits) loss += hooks.on_logits(xb, logits, ce.grad_logits);
      LayerList<double> grads = backward(net, xb, ce.grad_logits);
      if (hooks.on_grads) loss += hooks.on_grads(net, grads);
      check_finite_loss(loss, "train_supervised", opt.step, opt.learning_rate());
      sgd_step(net.parameters(), grads, opt);
      epoch_loss += loss;
      ++batches;
    }
    if (log) log->epoch_loss.push_back(batches ? epoch_loss / batches : 0.0);
  }
  return net;
}

Mlp init_classifier(std::span<const int> widths, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  return Mlp::he_normal(widths, rng);
}

Mlp train_scratch(std::span<const int> widths, const LabeledDataset& data, const TrainConfig& cfg,
                  std::uint64_t seed) {
  return train_supervised(init_classifier(widths, seed), data, cfg, seed);
}

Mlp train_source_classifier(const LabeledDataset& source, std::span<const int> widths,
                            const TrainConfig& cfg, std::uint64_t seed) {
  source.validate();
  if (widths.empty() || widths.back() != source.num_classes) {
    throw DimensionError("train_source_classifier: output width must equal the source class count " +
                         std::to_string(source.num_classes));
  }
  if (widths.front() != source.dim()) {
    throw DimensionError("train_source_classifier: input width must equal the feature dimension");
  }
  return train_scratch(widths, source, cfg, seed);
}

}  // namespace ptl
