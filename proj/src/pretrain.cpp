#include "ptl/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ptl/core/loss.hpp"

namespace ptl {

PretrainStrategy parse_pretrain_strategy(const std::string& name) {
  if (name == "uniform") return PretrainStrategy::kUniform;
  if (name == "filtered") return PretrainStrategy::kFiltered;
  if (name == "pcs") return PretrainStrategy::kPcs;
  if (name == "offline") return PretrainStrategy::kOffline;
  throw ValidationError("unknown pre-training strategy '" + name + "'");
}

std::string to_string(PretrainStrategy s) {
  switch (s) {
    case PretrainStrategy::kUniform: return "uniform";
    case PretrainStrategy::kFiltered: return "filtered";
    case PretrainStrategy::kPcs: return "pcs";
    case PretrainStrategy::kOffline: return "offline";
  }
  return "?";
}

void PretrainConfig::validate() const {
  if (steps < 0) throw ValidationError("PretrainConfig: steps must be >= 0");
  if (batch_size < 1) throw ValidationError("PretrainConfig: batch_size must be >= 1");
  if (!(offline_fraction > 0 && offline_fraction <= 1))
    throw ValidationError("PretrainConfig: offline_fraction must be in (0,1]");
  sgd.validate();
}

int PretrainConfig::offline_pool_size() const {
  const double total = static_cast<double>(steps) * batch_size;
  return std::max(batch_size, static_cast<int>(std::llround(total * offline_fraction)));
}

json pretrain_config_to_json(const PretrainConfig& cfg) {
  return {{"steps", cfg.steps},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.sgd.learning_rate},
          {"momentum", cfg.sgd.momentum},
          {"weight_decay", cfg.sgd.weight_decay},
          {"nesterov", cfg.sgd.nesterov},
          {"decay_steps", cfg.sgd.decay_epochs},
          {"decay_factor", cfg.sgd.decay_factor},
          {"offline_fraction", cfg.offline_fraction},
          {"offline_shuffle", cfg.offline_shuffle}};
}

PretrainConfig pretrain_config_from_json(const json& j, PretrainConfig cfg) {
  cfg.steps = j.value("steps", cfg.steps);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.sgd.learning_rate = j.value("lr", cfg.sgd.learning_rate);
  cfg.sgd.momentum = j.value("momentum", cfg.sgd.momentum);
  cfg.sgd.weight_decay = j.value("weight_decay", cfg.sgd.weight_decay);
  cfg.sgd.nesterov = j.value("nesterov", cfg.sgd.nesterov);
  cfg.sgd.decay_epochs = j.value("decay_steps", cfg.sgd.decay_epochs);
  cfg.sgd.decay_factor = j.value("decay_factor", cfg.sgd.decay_factor);
  cfg.offline_fraction = j.value("offline_fraction", cfg.offline_fraction);
  cfg.offline_shuffle = j.value("offline_shuffle", cfg.offline_shuffle);
  cfg.validate();
  return cfg;
}

SyntheticBatch draw_pretrain_batch(const ConditionalGenerator& gen, PretrainStrategy strategy,
                                   const PretrainLabels& labels, int batch_size, Rng& rng) {
  const int ks = gen.num_classes();
  SyntheticBatch batch{MatrixXd(batch_size, gen.dim()), MatrixXd::Zero(batch_size, ks)};
  for (int i = 0; i < batch_size; ++i) {
    switch (strategy) {
      case PretrainStrategy::kUniform:
      case PretrainStrategy::kOffline: {
        std::uniform_int_distribution<int> pick(0, ks - 1);
        const int c = pick(rng);
        batch.targets(i, c) = 1.0;
        break;
      }
      case PretrainStrategy::kFiltered: {
        if (labels.classes.empty()) throw ValidationError("pseudo_pretrain: filtered strategy needs a class set");
        std::uniform_int_distribution<std::size_t> pick(0, labels.classes.size() - 1);
        const int c = labels.classes[pick(rng)];
        if (c < 0 || c >= ks) throw ValidationError("pseudo_pretrain: filtered class out of range");
        batch.targets(i, c) = 1.0;
        break;
      }
      case PretrainStrategy::kPcs: {
        if (!labels.pcs_labels || labels.pcs_labels->labels.empty())
          throw ValidationError("pseudo_pretrain: pcs strategy needs pseudo labels");
        std::uniform_int_distribution<std::size_t> pick(0, labels.pcs_labels->size() - 1);
        const auto& y = labels.pcs_labels->labels[pick(rng)];
        if (y.size() != ks) throw DimensionError("pseudo_pretrain: pseudo label size differs from class count");
        batch.targets.row(i) = y.probs().transpose();
        break;
      }
    }
    const LabelDistribution y(batch.targets.row(i).transpose());
    batch.features.row(i) = gen.sample(y, 1, rng);
  }
  return batch;
}

namespace {

void pretrain_step(Mlp& net, const MatrixXd& x, const MatrixXd& t, OptimizerState<double>& opt) {
  opt.epoch = static_cast<int>(opt.step);
  const auto ce = softmax_cross_entropy_rows(net.forward(x), t);
  check_finite_loss(ce.mean_loss, "pseudo_pretrain", opt.step, opt.learning_rate());
  const auto grads = backward(net, x, ce.grad_logits);
  sgd_step(net.parameters(), grads, opt);
}

void check_arch(std::span<const int> arch, const ConditionalGenerator& gen) {
  if (arch.size() < 2 || arch.front() != gen.dim() || arch.back() != gen.num_classes()) {
    throw DimensionError("pseudo_pretrain: architecture must map " + std::to_string(gen.dim()) +
                         " features to " + std::to_string(gen.num_classes()) + " source classes");
  }
}

}  // namespace

Mlp pretrain_on_pool(Mlp net, const SyntheticBatch& pool, const PretrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(pool.features.rows());
  if (n == 0) throw ValidationError("pretrain_on_pool: empty pool");
  OptimizerState<double> opt(cfg.sgd, net.parameters());
  Rng shuffle_rng(derive_seed(seed, "offline-shuffle"));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t cursor = n;  // forces a (re)shuffle before the first batch
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(cfg.batch_size));
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& slot : idx) {
      if (cursor == n) {
        if (cfg.offline_shuffle) std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      slot = order[cursor++];
    }
    pretrain_step(net, gather_rows(pool.features, idx), gather_rows(pool.targets, idx), opt);
  }
  return net;
}

Mlp pseudo_pretrain(std::span<const int> arch, const ConditionalGenerator& gen, const PretrainConfig& cfg,
                    PretrainStrategy strategy, std::uint64_t seed, const PretrainLabels& labels) {
  cfg.validate();
  check_arch(arch, gen);
  Mlp net = init_classifier(arch, seed);
  Rng batch_rng(derive_seed(seed, "pretrain-batches"));

  if (strategy == PretrainStrategy::kOffline) {
    // The pool is drawn batch by batch from the same stream as the online
    // uniform run, so a full-size pool replays the online sequence.
    const int pool_size = cfg.offline_pool_size();
    SyntheticBatch pool{MatrixXd(pool_size, gen.dim()), MatrixXd(pool_size, gen.num_classes())};
    for (int start = 0; start < pool_size; start += cfg.batch_size) {
      const int take = std::min(cfg.batch_size, pool_size - start);
      auto b = draw_pretrain_batch(gen, PretrainStrategy::kUniform, labels, take, batch_rng);
      pool.features.middleRows(start, take) = b.features;
      pool.targets.middleRows(start, take) = b.targets;
    }
    return pretrain_on_pool(std::move(net), pool, cfg, seed);
  }

  OptimizerState<double> opt(cfg.sgd, net.parameters());
  for (int step = 0; step < cfg.steps; ++step) {
    const auto b = draw_pretrain_batch(gen, strategy, labels, cfg.batch_size, batch_rng);
    pretrain_step(net, b.features, b.targets, opt);
  }
  return net;
}

Mlp swap_final_layer(const Mlp& net, int new_classes, double init_scale, Rng& rng) {
  if (new_classes < 2) throw ValidationError("swap_final_layer: need at least two classes");
  if (!(init_scale >= 0)) throw ValidationError("swap_final_layer: init_scale must be >= 0");
  LayerList<double> layers = net.layers();
  auto& head = layers.back();
  const Eigen::Index fan_in = head.in_dim();
  const double stddev = init_scale / std::sqrt(static_cast<double>(fan_in));
  std::normal_distribution<double> normal(0.0, 1.0);
  head.weight.resize(new_classes, fan_in);
  for (Eigen::Index r = 0; r < head.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < fan_in; ++c) head.weight(r, c) = stddev * normal(rng);
  head.bias = VectorXd::Zero(new_classes);
  return Mlp(std::move(layers));
}

}  // namespace ptl
