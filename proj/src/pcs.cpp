#include "ptl/pcs.hpp"

namespace ptl {

PseudoLabelSet pseudo_labels(const Mlp& source, const LabeledDataset& target, LabelFunction fn, Rng& rng,
                             const LabelFunctionOptions& opts) {
  target.validate();
  if (source.input_dim() != target.dim()) {
    throw DimensionError("pseudo_labels: source classifier expects " + std::to_string(source.input_dim()) +
                         " features, target has " + std::to_string(target.dim()));
  }
  const MatrixXd logits = source.forward(target.features);
  const int ks = static_cast<int>(logits.cols());
  PseudoLabelSet out;
  out.labels.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const VectorXd z = logits.row(i).transpose();
    switch (fn) {
      case LabelFunction::kSoftmax:
      case LabelFunction::kClasswiseMean:
        out.labels.push_back(softmax(z));
        break;
      case LabelFunction::kTempSoftmax:
        out.labels.push_back(temperature_softmax(z, opts.temperature));
        break;
      case LabelFunction::kArgmax:
        out.labels.push_back(argmax_onehot(z));
        break;
      case LabelFunction::kSparsemax:
        out.labels.push_back(sparsemax(z));
        break;
      case LabelFunction::kRandom:
        out.labels.push_back(random_label(ks, rng));
        break;
    }
    out.origin.push_back(static_cast<int>(i));
  }
  if (fn == LabelFunction::kClasswiseMean) {
    const auto means = classwise_mean(out.labels, target.labels, target.num_classes);
    for (std::size_t i = 0; i < out.labels.size(); ++i)
      out.labels[i] = means[static_cast<std::size_t>(target.labels[i])];
  }
  return out;
}

PseudoDataset build_pseudo_dataset(const ConditionalGenerator& gen, const PseudoLabelSet& labels, int count,
                                   Rng& rng) {
  if (labels.labels.empty()) throw ValidationError("build_pseudo_dataset: empty pseudo label set");
  if (count < 1) throw ValidationError("build_pseudo_dataset: count must be >= 1");
  PseudoDataset out;
  out.data.features.resize(count, gen.dim());
  out.origin.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i) % labels.size();
    out.data.features.row(i) = gen.sample(labels.labels[k], 1, rng);
    out.origin.push_back(labels.origin.empty() ? static_cast<int>(k) : labels.origin[k]);
  }
  return out;
}

json pseudo_dataset_to_json(const PseudoDataset& ds) {
  json j = dataset_to_json(ds.data);
  j["origin"] = ds.origin;
  return j;
}

PseudoDataset pseudo_dataset_from_json(const json& j) {
  PseudoDataset ds;
  ds.data = unlabeled_dataset_from_json(j);
  if (j.contains("origin")) ds.origin = j.at("origin").get<std::vector<int>>();
  if (!ds.origin.empty() && static_cast<Eigen::Index>(ds.origin.size()) != ds.data.size()) {
    throw DimensionError("pseudo dataset: origin length does not match row count");
  }
  return ds;
}

}  // namespace ptl
