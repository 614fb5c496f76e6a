#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ptl/core/types.hpp"

namespace ptl {

/// Affine map `out = weight * in + bias`. Weight is stored out x in.
template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Parameter-shaped buffers: gradients, optimizer velocity.
template <typename Scalar>
using LayerList = std::vector<DenseLayer<Scalar>>;

template <typename Scalar>
LayerList<Scalar> zeros_like(const LayerList<Scalar>& layers) {
  LayerList<Scalar> out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    out.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                   Vector<Scalar>::Zero(l.bias.size())});
  }
  return out;
}

/// Feed-forward classifier: affine layers with ReLU between them, raw logits
/// at the output.
///
/// The architecture is identified by its width list
/// `{input, hidden..., output}`; two classifiers have the same architecture iff
/// their width lists are equal.
template <typename Scalar>
class MlpClassifier {
 public:
  MlpClassifier() = default;

  explicit MlpClassifier(LayerList<Scalar> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ValidationError("MlpClassifier: no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.weight.rows()) {
        throw DimensionError("MlpClassifier: layer " + std::to_string(i) +
                             " bias length does not match weight rows");
      }
      if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
        throw DimensionError("MlpClassifier: layer " + std::to_string(i) +
                             " input width " + std::to_string(l.in_dim()) +
                             " does not match previous output width " +
                             std::to_string(layers_[i - 1].out_dim()));
      }
    }
  }

  static MlpClassifier zeros(std::span<const int> widths) {
    check_widths(widths);
    LayerList<Scalar> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      layers.push_back({Matrix<Scalar>::Zero(widths[i + 1], widths[i]),
                        Vector<Scalar>::Zero(widths[i + 1])});
    }
    return MlpClassifier(std::move(layers));
  }

  /// He-normal weights, zero biases.
  template <class Rng>
  static MlpClassifier he_normal(std::span<const int> widths, Rng& rng) {
    MlpClassifier net = zeros(widths);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& l : net.layers_) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(l.in_dim()));
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
          l.weight(r, c) = static_cast<Scalar>(stddev * normal(rng));
    }
    return net;
  }

  std::vector<int> widths() const {
    std::vector<int> w;
    if (layers_.empty()) return w;
    w.push_back(static_cast<int>(layers_.front().in_dim()));
    for (const auto& l : layers_) w.push_back(static_cast<int>(l.out_dim()));
    return w;
  }

  Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  Eigen::Index output_dim() const { return layers_.back().out_dim(); }
  std::size_t num_layers() const { return layers_.size(); }

  const LayerList<Scalar>& layers() const { return layers_; }
  LayerList<Scalar>& parameters() { return layers_; }

  /// Logits for a batch laid out one sample per row (B x d) -> (B x K).
  Matrix<Scalar> forward(const Eigen::Ref<const Matrix<Scalar>>& batch) const {
    check_input(batch.cols());
    Matrix<Scalar> act = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix<Scalar> z = act * layers_[i].weight.transpose();
      z.rowwise() += layers_[i].bias.transpose();
      if (i + 1 < layers_.size()) z = z.cwiseMax(Scalar(0));
      act = std::move(z);
    }
    return act;
  }

  /// Penultimate activations (the input to the final layer).
  Matrix<Scalar> features(const Eigen::Ref<const Matrix<Scalar>>& batch) const {
    check_input(batch.cols());
    Matrix<Scalar> act = batch;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
      Matrix<Scalar> z = act * layers_[i].weight.transpose();
      z.rowwise() += layers_[i].bias.transpose();
      act = z.cwiseMax(Scalar(0));
    }
    return act;
  }

  void check_input(Eigen::Index cols) const {
    if (layers_.empty()) throw ValidationError("MlpClassifier: empty network");
    if (cols != input_dim()) {
      throw DimensionError("MlpClassifier: layer 0 expects input width " +
                           std::to_string(input_dim()) + ", got " + std::to_string(cols));
    }
  }

 private:
  static void check_widths(std::span<const int> widths) {
    if (widths.size() < 2) throw ValidationError("MlpClassifier: need at least two widths");
    for (int w : widths)
      if (w <= 0) throw ValidationError("MlpClassifier: widths must be positive");
  }

  LayerList<Scalar> layers_;
};

/// Gradient of the mean loss `(1/B) sum_i loss_i` with respect to every
/// parameter, given the per-sample logit gradients `d loss_i / d logits_i` as
/// the rows of `grad_logits`.
template <typename Scalar>
LayerList<Scalar> backward(const MlpClassifier<Scalar>& net,
                           const std::type_identity_t<Eigen::Ref<const Matrix<Scalar>>>& batch,
                           const std::type_identity_t<Eigen::Ref<const Matrix<Scalar>>>& grad_logits) {
  net.check_input(batch.cols());
  if (grad_logits.rows() != batch.rows() || grad_logits.cols() != net.output_dim()) {
    throw DimensionError("backward: logit gradient must be " + std::to_string(batch.rows()) +
                         " x " + std::to_string(net.output_dim()));
  }
  const auto& layers = net.layers();
  const std::size_t n = layers.size();

  // acts[i] is the input to layer i.
  std::vector<Matrix<Scalar>> acts;
  acts.reserve(n);
  acts.push_back(batch);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Matrix<Scalar> z = acts.back() * layers[i].weight.transpose();
    z.rowwise() += layers[i].bias.transpose();
    acts.push_back(z.cwiseMax(Scalar(0)));
  }

  LayerList<Scalar> grads = zeros_like(layers);
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(batch.rows());
  Matrix<Scalar> delta = grad_logits * inv_b;
  for (std::size_t k = n; k-- > 0;) {
    grads[k].weight.noalias() = delta.transpose() * acts[k];
    grads[k].bias = delta.colwise().sum().transpose();
    if (k == 0) break;
    Matrix<Scalar> upstream = delta * layers[k].weight;
    // ReLU derivative: active where the post-activation is positive.
    delta = (acts[k].array() > Scalar(0)).select(upstream, Scalar(0));
  }
  return grads;
}

}  // namespace ptl
