#include "ptl/pssl.hpp"

#include <cmath>

#include "ptl/core/loss.hpp"

namespace ptl {

SslMethod parse_ssl_method(const std::string& name) {
  if (name == "uda") return SslMethod::kUda;
  if (name == "fixmatch") return SslMethod::kFixMatch;
  if (name == "pseudo_label") return SslMethod::kPseudoLabel;
  if (name == "soft_pseudo_label") return SslMethod::kSoftPseudoLabel;
  if (name == "entmin") return SslMethod::kEntMin;
  if (name == "consistency") return SslMethod::kConsistency;
  throw ValidationError("unknown SSL method '" + name + "'");
}

std::string to_string(SslMethod m) {
  switch (m) {
    case SslMethod::kUda: return "uda";
    case SslMethod::kFixMatch: return "fixmatch";
    case SslMethod::kPseudoLabel: return "pseudo_label";
    case SslMethod::kSoftPseudoLabel: return "soft_pseudo_label";
    case SslMethod::kEntMin: return "entmin";
    case SslMethod::kConsistency: return "consistency";
  }
  return "?";
}

void SslConfig::validate() const {
  if (!(lambda >= 0)) throw ValidationError("SslConfig: lambda must be >= 0");
  if (!(beta >= 0 && beta <= 1)) throw ValidationError("SslConfig: beta must be in [0,1]");
  if (!(tau > 0)) throw ValidationError("SslConfig: tau must be > 0");
  if (unsup_batch < 1) throw ValidationError("SslConfig: unsup_batch must be >= 1");
  if (!(aug_strength >= 0)) throw ValidationError("SslConfig: aug_strength must be >= 0");
}

json ssl_config_to_json(const SslConfig& cfg) {
  return {{"method", to_string(cfg.method)}, {"lambda", cfg.lambda},
          {"beta", cfg.beta},                {"tau", cfg.tau},
          {"unsup_batch", cfg.unsup_batch},  {"aug_strength", cfg.aug_strength}};
}

SslConfig ssl_config_from_json(const json& j, SslConfig cfg) {
  if (j.contains("method")) cfg.method = parse_ssl_method(j.at("method").get<std::string>());
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.tau = j.value("tau", cfg.tau);
  cfg.unsup_batch = j.value("unsup_batch", cfg.unsup_batch);
  cfg.aug_strength = j.value("aug_strength", cfg.aug_strength);
  cfg.validate();
  return cfg;
}

MatrixXd Augmenter::apply(const MatrixXd& batch, Rng& rng) const {
  if (strength < 0) throw ValidationError("augment: strength must be >= 0");
  if (strength == 0.0) return batch;
  if (feature_std.size() != 0 && feature_std.size() != batch.cols())
    throw DimensionError("augment: feature_std length differs from feature dimension");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution drop(std::min(1.0, 0.1 * strength));
  MatrixXd out = batch;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index k = 0; k < out.cols(); ++k) {
      const double scale = feature_std.size() ? feature_std[k] : 1.0;
      out(i, k) += strength * scale * normal(rng);
      if (drop(rng)) out(i, k) = 0.0;
    }
  }
  return out;
}

VectorXd augment(const VectorXd& x, double strength, Rng& rng, const VectorXd& feature_std) {
  const Augmenter aug{strength, feature_std};
  return aug.apply(x.transpose(), rng).row(0).transpose();
}

namespace {

MatrixXd one_hot_argmax_rows(const MatrixXd& probs) {
  MatrixXd out = MatrixXd::Zero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < probs.cols(); ++k)
      if (probs(i, k) > probs(i, best)) best = k;
    out(i, best) = 1.0;
  }
  return out;
}

}  // namespace

UnsupResult unsup_loss(const Mlp& student, const MatrixXd& x_u, const SslConfig& cfg, const Augmenter& aug,
                       Rng& rng) {
  cfg.validate();
  student.check_input(x_u.cols());
  const Eigen::Index b = x_u.rows();
  if (b == 0) throw ValidationError("unsup_loss: empty batch");

  UnsupResult res;
  const MatrixXd clean_logits = student.forward(x_u);

  // Per-sample target (constant w.r.t. parameters) and mask, plus the
  // input the gradient flows through.
  MatrixXd target;
  VectorXd mask = VectorXd::Ones(b);
  const MatrixXd* grad_input = &x_u;
  MatrixXd augmented;
  MatrixXd pred_logits;

  switch (cfg.method) {
    case SslMethod::kUda:
    case SslMethod::kConsistency: {
      target = softmax_rows((clean_logits / cfg.tau).eval());
      if (cfg.method == SslMethod::kUda)
        for (Eigen::Index i = 0; i < b; ++i) mask[i] = target.row(i).maxCoeff() > cfg.beta ? 1.0 : 0.0;
      augmented = aug.apply(x_u, rng);
      grad_input = &augmented;
      pred_logits = student.forward(augmented);
      break;
    }
    case SslMethod::kFixMatch: {
      const MatrixXd p = softmax_rows(clean_logits);
      target = one_hot_argmax_rows(p);
      for (Eigen::Index i = 0; i < b; ++i) mask[i] = p.row(i).maxCoeff() > cfg.beta ? 1.0 : 0.0;
      augmented = aug.apply(x_u, rng);
      grad_input = &augmented;
      pred_logits = student.forward(augmented);
      break;
    }
    case SslMethod::kPseudoLabel: {
      const MatrixXd p = softmax_rows(clean_logits);
      target = one_hot_argmax_rows(p);
      for (Eigen::Index i = 0; i < b; ++i) mask[i] = p.row(i).maxCoeff() > cfg.beta ? 1.0 : 0.0;
      pred_logits = clean_logits;
      break;
    }
    case SslMethod::kSoftPseudoLabel: {
      target = softmax_rows((clean_logits / cfg.tau).eval());
      pred_logits = clean_logits;
      break;
    }
    case SslMethod::kEntMin: {
      const MatrixXd logp = log_softmax_rows(clean_logits);
      const MatrixXd p = logp.array().exp().matrix();
      MatrixXd grad_rows(b, p.cols());
      double total = 0.0;
      for (Eigen::Index i = 0; i < b; ++i) {
        const double h = -(p.row(i).array() * logp.row(i).array()).sum();
        total += h;
        // dH/dz_j = -p_j (log p_j + H)
        grad_rows.row(i) = -(p.row(i).array() * (logp.row(i).array() + h)).matrix();
      }
      res.loss = total / static_cast<double>(b);
      res.grads = backward(student, x_u, grad_rows);
      res.mask_rate = 1.0;
      return res;
    }
  }

  const MatrixXd logq = log_softmax_rows(pred_logits);
  MatrixXd grad_rows = logq.array().exp().matrix() - target;
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (mask[i] == 0.0) {
      grad_rows.row(i).setZero();
      continue;
    }
    double ce = 0.0;
    for (Eigen::Index k = 0; k < target.cols(); ++k)
      if (target(i, k) > 0) ce -= target(i, k) * logq(i, k);
    total += ce;
  }
  res.loss = total / static_cast<double>(b);
  res.grads = backward(student, *grad_input, grad_rows);
  res.mask_rate = mask.mean();
  return res;
}

Mlp train_pssl(Mlp init, const LabeledDataset& target, const UnlabeledDataset& pseudo, const SslConfig& ssl,
               const TrainConfig& train, std::uint64_t seed, TrainLog* log) {
  ssl.validate();
  pseudo.validate();
  if (pseudo.dim() != target.dim()) throw DimensionError("train_pssl: pseudo and target feature dimensions differ");

  Augmenter aug{ssl.aug_strength, {}};
  if (pseudo.size() > 1) {
    const VectorXd mean = pseudo.features.colwise().mean().transpose();
    aug.feature_std = ((pseudo.features.rowwise() - mean.transpose()).array().square().colwise().sum() /
                       static_cast<double>(pseudo.size() - 1))
                          .sqrt()
                          .transpose();
  }
  Rng unsup_rng(derive_seed(seed, "unsup"));
  std::uniform_int_distribution<Eigen::Index> pick(0, pseudo.size() - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(ssl.unsup_batch));

  StepHooks hooks;
  hooks.on_grads = [&](const Mlp& net, LayerList<double>& grads) {
    for (auto& i : idx) i = pick(unsup_rng);
    const MatrixXd xu = gather_rows(pseudo.features, idx);
    const UnsupResult u = unsup_loss(net, xu, ssl, aug, unsup_rng);
    for (std::size_t l = 0; l < grads.size(); ++l) {
      grads[l].weight += ssl.lambda * u.grads[l].weight;
      grads[l].bias += ssl.lambda * u.grads[l].bias;
    }
    return ssl.lambda * u.loss;
  };
  return train_supervised(std::move(init), target, train, seed, hooks, log);
}

Mlp train_pseudo_supervised(Mlp init, const LabeledDataset& target, const PseudoDataset& pseudo,
                            const TrainConfig& train, std::uint64_t seed) {
  target.validate();
  const Eigen::Index extra = pseudo.data.size();
  if (extra == 0) return train_supervised(std::move(init), target, train, seed);
  if (static_cast<Eigen::Index>(pseudo.origin.size()) != extra)
    throw ValidationError("train_pseudo_supervised: pseudo samples need their originating target index");
  if (pseudo.data.dim() != target.dim()) throw DimensionError("train_pseudo_supervised: feature dimensions differ");
  LabeledDataset joint = target;
  joint.features.conservativeResize(target.size() + extra, Eigen::NoChange);
  joint.features.bottomRows(extra) = pseudo.data.features;
  for (int o : pseudo.origin) {
    if (o < 0 || o >= target.size()) throw ValidationError("train_pseudo_supervised: origin index out of range");
    joint.labels.push_back(target.labels[static_cast<std::size_t>(o)]);
  }
  return train_supervised(std::move(init), joint, train, seed);
}

}  // namespace ptl
