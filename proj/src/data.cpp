#include "ptl/data.hpp"

#include <algorithm>
#include <numeric>

namespace ptl {

void LabeledDataset::validate() const {
  if (features.rows() == 0) throw ValidationError("LabeledDataset: empty");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw DimensionError("LabeledDataset: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
  }
  if (num_classes < 1) throw ValidationError("LabeledDataset: num_classes must be >= 1");
  for (int y : labels)
    if (y < 0 || y >= num_classes) {
      throw ValidationError("LabeledDataset: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
}

std::vector<std::vector<Eigen::Index>> LabeledDataset::rows_by_class() const {
  std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    rows[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  return rows;
}

MatrixXd LabeledDataset::one_hot_targets() const {
  MatrixXd t = MatrixXd::Zero(size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return t;
}

void UnlabeledDataset::validate() const {
  if (features.rows() == 0) throw ValidationError("UnlabeledDataset: empty");
}

json dataset_to_json(const LabeledDataset& ds) {
  return {{"features", matrix_to_json(ds.features)},
          {"labels", ds.labels},
          {"label_space", ds.label_space},
          {"num_classes", ds.num_classes}};
}

LabeledDataset labeled_dataset_from_json(const json& j) {
  try {
    LabeledDataset ds;
    ds.features = matrix_from_json(j.at("features"));
    ds.labels = j.at("labels").get<std::vector<int>>();
    ds.label_space = j.value("label_space", std::string{});
    if (j.contains("num_classes")) {
      ds.num_classes = j.at("num_classes").get<int>();
    } else {
      ds.num_classes = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    }
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("dataset: ") + e.what());
  }
}

json dataset_to_json(const UnlabeledDataset& ds) { return {{"features", matrix_to_json(ds.features)}}; }

UnlabeledDataset unlabeled_dataset_from_json(const json& j) {
  try {
    UnlabeledDataset ds{matrix_from_json(j.at("features"))};
    ds.validate();
    return ds;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("dataset: ") + e.what());
  }
}

void TaskPairSpec::validate() const {
  if (feature_dim < 1) throw ValidationError("TaskPairSpec: feature_dim must be >= 1");
  if (source_classes < 2 || target_classes < 2) throw ValidationError("TaskPairSpec: need >= 2 classes per task");
  if (source_per_class < 1 || target_train < 1 || target_test < 1)
    throw ValidationError("TaskPairSpec: sample counts must be positive");
  if (!(cov_min > 0 && cov_max >= cov_min)) throw ValidationError("TaskPairSpec: need 0 < cov_min <= cov_max");
  if (!(align_noise >= 0)) throw ValidationError("TaskPairSpec: align_noise must be >= 0");
  if (source_space == target_space) throw ValidationError("TaskPairSpec: source and target label spaces must differ");
  if (mixing.size() > 0) {
    if (mixing.rows() != target_classes || mixing.cols() != source_classes)
      throw DimensionError("TaskPairSpec: mixing matrix must be target_classes x source_classes");
    for (Eigen::Index k = 0; k < mixing.rows(); ++k) {
      if ((mixing.row(k).array() < 0).any() || std::abs(mixing.row(k).sum() - 1.0) > 1e-9)
        throw ValidationError("TaskPairSpec: mixing row " + std::to_string(k) + " is not on the simplex");
    }
  } else if (mixing_support < 1 || mixing_support > source_classes) {
    throw ValidationError("TaskPairSpec: mixing_support must be in [1, source_classes]");
  }
}

json task_spec_to_json(const TaskPairSpec& s) {
  json j = {{"feature_dim", s.feature_dim},       {"source_classes", s.source_classes},
            {"target_classes", s.target_classes}, {"source_per_class", s.source_per_class},
            {"target_train", s.target_train},     {"target_test", s.target_test},
            {"source_radius", s.source_radius},   {"cov_min", s.cov_min},
            {"cov_max", s.cov_max},               {"mixing_support", s.mixing_support},
            {"align_noise", s.align_noise},       {"seed", s.seed},
            {"source_space", s.source_space},     {"target_space", s.target_space}};
  if (s.mixing.size() > 0) j["mixing"] = matrix_to_json(s.mixing);
  return j;
}

TaskPairSpec task_spec_from_json(const json& j) {
  TaskPairSpec s;
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.source_classes = j.value("source_classes", s.source_classes);
  s.target_classes = j.value("target_classes", s.target_classes);
  s.source_per_class = j.value("source_per_class", s.source_per_class);
  s.target_train = j.value("target_train", s.target_train);
  s.target_test = j.value("target_test", s.target_test);
  s.source_radius = j.value("source_radius", s.source_radius);
  s.cov_min = j.value("cov_min", s.cov_min);
  s.cov_max = j.value("cov_max", s.cov_max);
  s.mixing_support = j.value("mixing_support", s.mixing_support);
  s.align_noise = j.value("align_noise", s.align_noise);
  s.seed = j.value("seed", s.seed);
  s.source_space = j.value("source_space", s.source_space);
  s.target_space = j.value("target_space", s.target_space);
  if (j.contains("mixing")) s.mixing = matrix_from_json(j.at("mixing"));
  s.validate();
  return s;
}

MatrixXd psd_factor(const MatrixXd& cov) {
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  return matrix_sqrt_psd(cov);
}

MatrixXd sample_gaussian(const VectorXd& mean, const MatrixXd& lower_factor, int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index d = mean.size();
  MatrixXd out(n, d);
  VectorXd z(d);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) z[k] = normal(rng);
    out.row(i) = (mean + lower_factor * z).transpose();
  }
  return out;
}

namespace {

MatrixXd random_orthogonal(int d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd g(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) g(r, c) = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ();
  // Fix column signs so Q is Haar-distributed.
  const MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < d; ++c)
    if (rmat(c, c) < 0) q.col(c) *= -1.0;
  return q;
}

LabeledDataset draw_labeled(const std::vector<VectorXd>& means, const std::vector<MatrixXd>& factors,
                            const std::vector<int>& labels, int num_classes,
                            const std::string& space, Rng& rng) {
  LabeledDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(labels.size()), means.front().size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    ds.features.row(static_cast<Eigen::Index>(i)) = sample_gaussian(means[k], factors[k], 1, rng);
  }
  ds.labels = labels;
  ds.num_classes = num_classes;
  ds.label_space = space;
  return ds;
}

std::vector<int> balanced_labels(int n, int k) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % k;
  return labels;
}

}  // namespace

TaskPair make_task_pair(const TaskPairSpec& spec) {
  spec.validate();
  const int d = spec.feature_dim;
  const int ks = spec.source_classes;
  const int kt = spec.target_classes;
  std::normal_distribution<double> normal(0.0, 1.0);

  TaskPair pair;
  Rng mean_rng(derive_seed(spec.seed, "source-means"));
  for (int c = 0; c < ks; ++c) {
    VectorXd g(d);
    for (int k = 0; k < d; ++k) g[k] = normal(mean_rng);
    pair.source_means.push_back(spec.source_radius * g / g.norm());
  }

  Rng cov_rng(derive_seed(spec.seed, "source-covs"));
  std::uniform_real_distribution<double> eig(spec.cov_min, spec.cov_max);
  std::vector<MatrixXd> source_covs;
  for (int c = 0; c < ks; ++c) {
    const MatrixXd q = random_orthogonal(d, cov_rng);
    VectorXd lambda(d);
    for (int k = 0; k < d; ++k) lambda[k] = eig(cov_rng);
    MatrixXd cov = q * lambda.asDiagonal() * q.transpose();
    source_covs.push_back((cov + cov.transpose()) / 2.0);
  }

  if (spec.mixing.size() > 0) {
    pair.mixing = spec.mixing;
  } else {
    Rng mix_rng(derive_seed(spec.seed, "mixing"));
    std::exponential_distribution<double> expo(1.0);
    pair.mixing = MatrixXd::Zero(kt, ks);
    std::vector<int> classes(static_cast<std::size_t>(ks));
    for (int k = 0; k < kt; ++k) {
      std::iota(classes.begin(), classes.end(), 0);
      std::shuffle(classes.begin(), classes.end(), mix_rng);
      // Dirichlet(1) weights over the chosen support.
      double total = 0.0;
      for (int j = 0; j < spec.mixing_support; ++j) {
        const double w = expo(mix_rng);
        pair.mixing(k, classes[static_cast<std::size_t>(j)]) = w;
        total += w;
      }
      pair.mixing.row(k) /= total;
    }
  }

  Rng align_rng(derive_seed(spec.seed, "align"));
  std::vector<MatrixXd> target_factors;
  for (int k = 0; k < kt; ++k) {
    VectorXd mean = VectorXd::Zero(d);
    MatrixXd cov = MatrixXd::Zero(d, d);
    for (int c = 0; c < ks; ++c) {
      mean += pair.mixing(k, c) * pair.source_means[static_cast<std::size_t>(c)];
      cov += pair.mixing(k, c) * source_covs[static_cast<std::size_t>(c)];
    }
    VectorXd offset(d);
    for (int j = 0; j < d; ++j) offset[j] = normal(align_rng);
    pair.target_means.push_back(mean + spec.align_noise * offset);
    target_factors.push_back(psd_factor(cov));
  }

  std::vector<MatrixXd> source_factors;
  for (const auto& cov : source_covs) source_factors.push_back(psd_factor(cov));

  std::vector<int> source_labels;
  source_labels.reserve(static_cast<std::size_t>(ks * spec.source_per_class));
  for (int c = 0; c < ks; ++c)
    for (int i = 0; i < spec.source_per_class; ++i) source_labels.push_back(c);

  Rng source_rng(derive_seed(spec.seed, "source-samples"));
  pair.source = draw_labeled(pair.source_means, source_factors, source_labels, ks, spec.source_space, source_rng);
  Rng train_rng(derive_seed(spec.seed, "target-train"));
  pair.target_train = draw_labeled(pair.target_means, target_factors, balanced_labels(spec.target_train, kt),
                                   kt, spec.target_space, train_rng);
  Rng test_rng(derive_seed(spec.seed, "target-test"));
  pair.target_test = draw_labeled(pair.target_means, target_factors, balanced_labels(spec.target_test, kt),
                                  kt, spec.target_space, test_rng);
  return pair;
}

ConditioningMode parse_conditioning_mode(const std::string& name) {
  if (name == "interpolate") return ConditioningMode::kInterpolate;
  if (name == "mixture") return ConditioningMode::kMixture;
  throw ValidationError("unknown conditioning mode '" + name + "'");
}

std::string to_string(ConditioningMode mode) {
  return mode == ConditioningMode::kInterpolate ? "interpolate" : "mixture";
}

ConditionalGenerator::ConditionalGenerator(std::vector<VectorXd> means, std::vector<MatrixXd> covs,
                                           ConditioningMode mode)
    : means_(std::move(means)), covs_(std::move(covs)), mode_(mode) {
  if (means_.empty()) throw ValidationError("ConditionalGenerator: no classes");
  if (covs_.size() != means_.size()) throw DimensionError("ConditionalGenerator: one covariance per class");
  const Eigen::Index d = means_.front().size();
  for (std::size_t c = 0; c < means_.size(); ++c) {
    if (means_[c].size() != d || covs_[c].rows() != d || covs_[c].cols() != d)
      throw DimensionError("ConditionalGenerator: class " + std::to_string(c) + " has the wrong dimension");
    // matrix_sqrt_psd validates symmetry and semidefiniteness.
    (void)matrix_sqrt_psd(covs_[c]);
    factors_.push_back(psd_factor(covs_[c]));
  }
}

void ConditionalGenerator::check_label(const LabelDistribution& y) const {
  if (y.size() != num_classes()) {
    throw DimensionError("ConditionalGenerator: label has " + std::to_string(y.size()) +
                         " classes, generator has " + std::to_string(num_classes()));
  }
}

VectorXd ConditionalGenerator::conditional_mean(const LabelDistribution& y) const {
  check_label(y);
  VectorXd mean = VectorXd::Zero(dim());
  for (int c = 0; c < num_classes(); ++c) mean += y[c] * means_[static_cast<std::size_t>(c)];
  return mean;
}

MatrixXd ConditionalGenerator::sample(const LabelDistribution& y, int n, Rng& rng) const {
  check_label(y);
  if (n < 0) throw ValidationError("ConditionalGenerator: negative sample count");
  if (mode_ == ConditioningMode::kMixture) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    MatrixXd out(n, dim());
    for (int i = 0; i < n; ++i) {
      const double u = unif(rng);
      int c = 0;
      double acc = y[0];
      while (c + 1 < num_classes() && (u >= acc || y[c] == 0.0)) acc += y[++c];
      const auto k = static_cast<std::size_t>(c);
      out.row(i) = sample_gaussian(means_[k], factors_[k], 1, rng);
    }
    return out;
  }
  Eigen::Index nonzero = 0;
  Eigen::Index last = 0;
  for (Eigen::Index c = 0; c < y.size(); ++c)
    if (y[c] > 0) ++nonzero, last = c;
  if (nonzero == 1) {
    const auto k = static_cast<std::size_t>(last);
    return sample_gaussian(means_[k], factors_[k], n, rng);
  }
  MatrixXd cov = MatrixXd::Zero(dim(), dim());
  for (int c = 0; c < num_classes(); ++c)
    if (y[c] > 0) cov += y[c] * covs_[static_cast<std::size_t>(c)];
  return sample_gaussian(conditional_mean(y), psd_factor(cov), n, rng);
}

json generator_to_json(const ConditionalGenerator& gen) {
  json means = json::array();
  json covs = json::array();
  for (const auto& m : gen.means()) means.push_back(vector_to_json(m));
  for (const auto& c : gen.covs()) covs.push_back(matrix_to_json(c));
  return {{"means", std::move(means)}, {"covs", std::move(covs)}, {"mode", to_string(gen.mode())}};
}

ConditionalGenerator generator_from_json(const json& j) {
  try {
    std::vector<VectorXd> means;
    std::vector<MatrixXd> covs;
    for (const auto& m : j.at("means")) means.push_back(vector_from_json(m));
    for (const auto& c : j.at("covs")) covs.push_back(matrix_from_json(c));
    return ConditionalGenerator(std::move(means), std::move(covs),
                                parse_conditioning_mode(j.value("mode", std::string("interpolate"))));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("generator: ") + e.what());
  }
}

ConditionalGenerator fit_source_generator(const LabeledDataset& source, ConditioningMode mode) {
  source.validate();
  const auto rows = source.rows_by_class();
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
  for (std::size_t c = 0; c < rows.size(); ++c) {
    if (rows[c].empty()) throw ValidationError("fit_source_generator: class " + std::to_string(c) + " is empty");
    MatrixXd block(static_cast<Eigen::Index>(rows[c].size()), source.dim());
    for (std::size_t i = 0; i < rows[c].size(); ++i)
      block.row(static_cast<Eigen::Index>(i)) = source.features.row(rows[c][i]);
    auto fit = fit_gaussian(block);
    means.push_back(std::move(fit.mean));
    covs.push_back(std::move(fit.cov));
  }
  return ConditionalGenerator(std::move(means), std::move(covs), mode);
}

}  // namespace ptl
