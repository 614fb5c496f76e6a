#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ptl/metrics.hpp"
#include "ptl/pcs.hpp"
#include "support.hpp"

using namespace ptl;

namespace {

// Upper tail of the chi-square distribution via the Wilson-Hilferty normal
// approximation.
double chi_square_p_value(double stat, int df) {
  const double k = df;
  const double z = (std::cbrt(stat / k) - (1 - 2 / (9 * k))) / std::sqrt(2 / (9 * k));
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

struct Fixture {
  TaskPair pair;
  Mlp source;
  ConditionalGenerator gen;
};

Fixture small_fixture(std::uint64_t seed = 0) {
  TaskPair pair = make_task_pair(test::small_task(seed));
  const std::vector<int> arch{6, 16, 6};
  Mlp source = train_source_classifier(pair.source, arch, test::short_training(10), seed);
  ConditionalGenerator gen = fit_source_generator(pair.source);
  return {std::move(pair), std::move(source), std::move(gen)};
}

}  // namespace

TEST_SUITE("pseudo labels") {
  TEST_CASE("saturated classifier gives one-hot softmax labels") {
    const TaskPair pair = make_task_pair(test::small_task());
    VectorXd bias = VectorXd::Zero(6);
    bias[2] = 35.0;
    const Mlp sat(LayerList<double>{{MatrixXd::Zero(6, 6), bias}});
    Rng rng(1);
    const auto labels = pseudo_labels(sat, pair.target_train, LabelFunction::kSoftmax, rng);
    CHECK(labels.size() == static_cast<std::size_t>(pair.target_train.size()));
    for (const auto& y : labels.labels) CHECK((y.probs() - VectorXd::Unit(6, 2)).cwiseAbs().maxCoeff() <= 1e-9);
  }

  TEST_CASE("random labels are independent of the target class") {
    TaskPairSpec spec = test::small_task();
    spec.target_train = 3000;
    const TaskPair pair = make_task_pair(spec);
    const std::vector<int> arch{6, 16, 6};
    const Mlp net = init_classifier(arch, 0);
    Rng rng(2);
    const auto labels = pseudo_labels(net, pair.target_train, LabelFunction::kRandom, rng);
    MatrixXd table = MatrixXd::Zero(3, 6);
    Eigen::Index c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels.labels[i].probs().maxCoeff(&c);
      table(pair.target_train.labels[i], c) += 1;
    }
    const double n = table.sum();
    double stat = 0.0;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 6; ++k) {
        const double expected = table.row(r).sum() * table.col(k).sum() / n;
        stat += std::pow(table(r, k) - expected, 2) / expected;
      }
    CHECK(chi_square_p_value(stat, 2 * 5) > 0.001);
  }

  TEST_CASE("duplicate target rows get identical labels") {
    const Fixture f = small_fixture();
    LabeledDataset dup = f.pair.target_train;
    dup.features.row(1) = dup.features.row(0);
    dup.labels[1] = dup.labels[0];
    for (auto fn : {LabelFunction::kSoftmax, LabelFunction::kTempSoftmax, LabelFunction::kArgmax,
                    LabelFunction::kSparsemax, LabelFunction::kClasswiseMean}) {
      Rng rng(3);
      const auto labels = pseudo_labels(f.source, dup, fn, rng);
      CHECK(labels.labels[0].probs() == labels.labels[1].probs());
    }
  }

  TEST_CASE("classwise mean replaces each label with its class average") {
    const Fixture f = small_fixture();
    Rng r1(4), r2(4);
    const auto soft = pseudo_labels(f.source, f.pair.target_train, LabelFunction::kSoftmax, r1);
    const auto mean = pseudo_labels(f.source, f.pair.target_train, LabelFunction::kClasswiseMean, r2);
    for (int k = 0; k < 3; ++k) {
      VectorXd acc = VectorXd::Zero(6);
      int count = 0;
      for (std::size_t i = 0; i < soft.size(); ++i)
        if (f.pair.target_train.labels[i] == k) {
          acc += soft.labels[i].probs();
          ++count;
        }
      acc /= count;
      for (std::size_t i = 0; i < mean.size(); ++i)
        if (f.pair.target_train.labels[i] == k) CHECK((mean.labels[i].probs() - acc).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }

  TEST_CASE("labels span the source classes") {
    const Fixture f = small_fixture();
    Rng rng(5);
    const auto labels = pseudo_labels(f.source, f.pair.target_train, LabelFunction::kSparsemax, rng);
    for (const auto& y : labels.labels) CHECK(y.size() == 6);
  }
}

TEST_SUITE("pseudo dataset") {
  TEST_CASE("labels are cycled in order") {
    const Fixture f = small_fixture();
    PseudoLabelSet three;
    for (int i = 0; i < 3; ++i) {
      three.labels.push_back(LabelDistribution::one_hot(i, 6));
      three.origin.push_back(10 + i);
    }
    Rng rng(6);
    const PseudoDataset ds = build_pseudo_dataset(f.gen, three, 7, rng);
    CHECK(ds.data.size() == 7);
    CHECK(ds.origin == std::vector<int>{10, 11, 12, 10, 11, 12, 10});
  }

  TEST_CASE("one-hot labels reproduce the class mean") {
    const Fixture f = small_fixture();
    PseudoLabelSet one;
    one.labels.push_back(LabelDistribution::one_hot(4, 6));
    one.origin.push_back(0);
    Rng rng(7);
    const int n = 5000;
    const PseudoDataset ds = build_pseudo_dataset(f.gen, one, n, rng);
    const VectorXd se = (f.gen.covs()[4].diagonal() / n).cwiseSqrt();
    const VectorXd err = (ds.data.features.colwise().mean().transpose() - f.gen.means()[4]).cwiseAbs();
    CHECK((err.array() <= 5 * se.array()).all());
  }

  TEST_CASE("size is exact and generation is deterministic") {
    const Fixture f = small_fixture();
    auto build = [&](std::uint64_t seed) {
      Rng lr(seed), sr(seed + 1);
      const auto labels = pseudo_labels(f.source, f.pair.target_train, LabelFunction::kSoftmax, lr);
      return build_pseudo_dataset(f.gen, labels, 123, sr);
    };
    const PseudoDataset a = build(8), b = build(8);
    CHECK(a.data.size() == 123);
    CHECK(a.data.features == b.data.features);
    CHECK(a.origin == b.origin);
  }

  TEST_CASE("softmax labels give a closer pseudo set than random labels") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Fixture f = small_fixture(seed);
      auto fd_for = [&](LabelFunction fn) {
        Rng lr(seed), sr(seed + 100);
        const auto labels = pseudo_labels(f.source, f.pair.target_train, fn, lr);
        return frechet_distance(build_pseudo_dataset(f.gen, labels, 2000, sr).data.features,
                                f.pair.target_train.features);
      };
      CHECK(fd_for(LabelFunction::kSoftmax) < fd_for(LabelFunction::kRandom));
    }
  }

  TEST_CASE("JSON round-trip") {
    const Fixture f = small_fixture();
    Rng lr(9), sr(10);
    const auto labels = pseudo_labels(f.source, f.pair.target_train, LabelFunction::kSoftmax, lr);
    const PseudoDataset ds = build_pseudo_dataset(f.gen, labels, 20, sr);
    const PseudoDataset back = pseudo_dataset_from_json(pseudo_dataset_to_json(ds));
    CHECK(back.data.features == ds.data.features);
    CHECK(back.origin == ds.origin);
  }

  TEST_CASE("invalid requests are rejected") {
    const Fixture f = small_fixture();
    Rng rng(11);
    CHECK_THROWS_AS(build_pseudo_dataset(f.gen, PseudoLabelSet{}, 5, rng), ValidationError);
    PseudoLabelSet wrong;
    wrong.labels.push_back(LabelDistribution::one_hot(0, 3));
    wrong.origin.push_back(0);
    CHECK_THROWS_AS(build_pseudo_dataset(f.gen, wrong, 5, rng), DimensionError);
  }
}
