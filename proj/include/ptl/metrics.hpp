#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ptl/data.hpp"
#include "ptl/training.hpp"

namespace ptl {

/// Closed-form 2-Wasserstein distance between two Gaussians:
/// |m1 - m2|^2 + Tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}).
double frechet_distance(const VectorXd& mean_a, const MatrixXd& cov_a, const VectorXd& mean_b,
                        const MatrixXd& cov_b);

/// Fréchet distance between Gaussians fitted to the rows of `a` and `b`.
double frechet_distance(const MatrixXd& a, const MatrixXd& b);

/// Source classes whose mean predicted probability over the samples of at
/// least one target class exceeds `threshold`. Sorted ascending.
std::vector<int> confidence_filter(const Mlp& source, const LabeledDataset& target,
                                   double threshold = 0.001);

/// Fraction of rows whose argmax logit (lowest index on ties) equals the label.
double accuracy(const Mlp& net, const LabeledDataset& data);

/// Argmax with lowest-index tie-breaking for each row.
std::vector<int> predict(const Mlp& net, const MatrixXd& features);

/// Spearman rank correlation with average ranks for ties. Empty when either
/// rank vector has zero variance.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Average (fractional) ranks starting at 1.
std::vector<double> average_ranks(std::span<const double> v);

}  // namespace ptl
