#include "ptl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ptl/core/linalg.hpp"
#include "ptl/core/loss.hpp"

namespace ptl {

double frechet_distance(const VectorXd& mean_a, const MatrixXd& cov_a, const VectorXd& mean_b,
                        const MatrixXd& cov_b) {
  if (mean_a.size() != mean_b.size() || cov_a.rows() != cov_b.rows()) {
    throw DimensionError("frechet_distance: dimensions differ");
  }
  const MatrixXd sqrt_a = matrix_sqrt_psd(cov_a);
  MatrixXd middle = sqrt_a * cov_b * sqrt_a;
  middle = (middle + middle.transpose()) / 2.0;
  const double cross = matrix_sqrt_psd(middle).trace();
  double fd = (mean_a - mean_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  if (fd < 0.0) {
    if (fd < -1e-6) throw ValidationError("frechet_distance: negative result " + std::to_string(fd));
    fd = 0.0;
  }
  return fd;
}

double frechet_distance(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() < 2 || b.rows() < 2) throw ValidationError("frechet_distance: need at least two samples per set");
  if (a.cols() != b.cols()) throw DimensionError("frechet_distance: feature dimensions differ");
  const auto fa = fit_gaussian(a);
  const auto fb = fit_gaussian(b);
  return frechet_distance(fa.mean, fa.cov, fb.mean, fb.cov);
}

std::vector<int> confidence_filter(const Mlp& source, const LabeledDataset& target, double threshold) {
  target.validate();
  const MatrixXd probs = softmax_rows(source.forward(target.features));
  const auto rows = target.rows_by_class();
  std::vector<bool> selected(static_cast<std::size_t>(probs.cols()), false);
  for (const auto& members : rows) {
    if (members.empty()) continue;
    VectorXd mean = VectorXd::Zero(probs.cols());
    for (Eigen::Index r : members) mean += probs.row(r).transpose();
    mean /= static_cast<double>(members.size());
    for (Eigen::Index c = 0; c < mean.size(); ++c)
      if (mean[c] > threshold) selected[static_cast<std::size_t>(c)] = true;
  }
  std::vector<int> out;
  for (std::size_t c = 0; c < selected.size(); ++c)
    if (selected[c]) out.push_back(static_cast<int>(c));
  return out;
}

std::vector<int> predict(const Mlp& net, const MatrixXd& features) {
  const MatrixXd logits = net.forward(features);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const Mlp& net, const LabeledDataset& data) {
  data.validate();
  const auto pred = predict(net, data.features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman: lengths differ");
  if (x.size() < 3) throw ValidationError("spearman: need at least three points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const auto n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace ptl
