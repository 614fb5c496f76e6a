#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ptl/core/loss.hpp"
#include "ptl/distill.hpp"
#include "ptl/metrics.hpp"
#include "support.hpp"

using namespace ptl;

namespace {

// Plain-loop KL(p_t || p_s) at temperature t, scaled by t^2, averaged over rows.
double soft_target_oracle(const MatrixXd& s, const MatrixXd& t_logits, double t) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double zs = 0.0, zt = 0.0;
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
      zs += std::exp(s(i, k) / t);
      zt += std::exp(t_logits(i, k) / t);
    }
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
      const double ps = std::exp(s(i, k) / t) / zs, pt = std::exp(t_logits(i, k) / t) / zt;
      total += pt * std::log(pt / ps);
    }
  }
  return t * t * total / static_cast<double>(s.rows());
}

}  // namespace

TEST_SUITE("distillation loss") {
  TEST_CASE("logit matching of swapped one-hot logits is one") {
    MatrixXd s(1, 2), t(1, 2);
    s << 1, 0;
    t << 0, 1;
    const KdLoss l = kd_loss(KdMethod::kLogitMatching, s, t, 4.0);
    CHECK(l.loss == 1.0);
    CHECK(l.grad_logits(0, 0) == 1.0);
    CHECK(l.grad_logits(0, 1) == -1.0);
  }

  TEST_CASE("self-distillation costs nothing") {
    Rng rng(1);
    const MatrixXd z = test::random_matrix(20, 5, rng, 3.0);
    for (auto m : {KdMethod::kLogitMatching, KdMethod::kSoftTarget}) {
      const KdLoss l = kd_loss(m, z, z, 2.0);
      CHECK(l.loss == 0.0);
      CHECK(l.grad_logits.cwiseAbs().maxCoeff() <= 1e-15);
    }
  }

  TEST_CASE("soft target matches a scalar KL oracle") {
    Rng rng(2);
    for (double t : {0.5, 1.0, 4.0}) {
      const MatrixXd s = test::random_matrix(7, 4, rng, 2.0), z = test::random_matrix(7, 4, rng, 2.0);
      CHECK(std::abs(kd_loss(KdMethod::kSoftTarget, s, z, t).loss - soft_target_oracle(s, z, t)) <= 1e-12);
    }
  }

  TEST_CASE("gradients match finite differences of the batch mean") {
    Rng rng(3);
    const MatrixXd z = test::random_matrix(6, 5, rng, 2.0);
    for (auto m : {KdMethod::kLogitMatching, KdMethod::kSoftTarget}) {
      MatrixXd s = test::random_matrix(6, 5, rng, 2.0);
      const KdLoss l = kd_loss(m, s, z, 3.0);
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index k = 0; k < s.cols(); ++k) {
          const double saved = s(i, k);
          s(i, k) = saved + h;
          const double up = kd_loss(m, s, z, 3.0).loss;
          s(i, k) = saved - h;
          const double down = kd_loss(m, s, z, 3.0).loss;
          s(i, k) = saved;
          // grad_logits is per sample; the loss is a batch mean.
          CHECK(std::abs((up - down) / (2 * h) * 6 - l.grad_logits(i, k)) <= 1e-6);
        }
    }
  }

  TEST_CASE("soft target ignores a common logit shift and is nonnegative") {
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      const MatrixXd s = test::random_matrix(5, 6, rng, 3.0), z = test::random_matrix(5, 6, rng, 3.0);
      const double base = kd_loss(KdMethod::kSoftTarget, s, z, 2.0).loss;
      CHECK(base >= 0.0);
      CHECK(kd_loss(KdMethod::kLogitMatching, s, z, 2.0).loss >= 0.0);
      const MatrixXd shifted = s.array() + 7.5;
      CHECK(std::abs(kd_loss(KdMethod::kSoftTarget, shifted, z, 2.0).loss - base) <= 1e-10);
    }
  }

  TEST_CASE("invalid inputs are rejected") {
    const MatrixXd a = MatrixXd::Zero(2, 3), b = MatrixXd::Zero(2, 4);
    CHECK_THROWS_AS(kd_loss(KdMethod::kSoftTarget, a, b, 1.0), DimensionError);
    CHECK_THROWS_AS(kd_loss(KdMethod::kSoftTarget, a, a, 0.0), ValidationError);
    KdConfig cfg;
    cfg.lambda = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK_THROWS_AS(parse_kd_method("attention"), ValidationError);
    for (auto m : {KdMethod::kLogitMatching, KdMethod::kSoftTarget}) CHECK(parse_kd_method(to_string(m)) == m);
    KdConfig round;
    round.method = KdMethod::kLogitMatching;
    round.temperature = 2.5;
    CHECK(kd_config_to_json(kd_config_from_json(kd_config_to_json(round))) == kd_config_to_json(round));
  }
}

TEST_SUITE("teacher and student") {
  TEST_CASE("lambda zero is bit-identical to scratch training") {
    const TaskPair pair = make_task_pair(test::small_task());
    const std::vector<int> src{6, 16, 6}, student{6, 10, 3};
    const Mlp source = train_source_classifier(pair.source, src, test::short_training(5), 0);
    const Mlp teacher = finetune_teacher(source, pair.target_train, test::short_training(3), 0);
    const TrainConfig cfg = test::short_training(5);
    for (auto m : {KdMethod::kLogitMatching, KdMethod::kSoftTarget}) {
      const KdConfig kd{m, 0.0, 4.0};
      CHECK(test::same_weights(kd_train(student, teacher, pair.target_train, kd, cfg, 1),
                               train_scratch(student, pair.target_train, cfg, 1)));
    }
  }

  TEST_CASE("positive lambda changes the student and is deterministic") {
    const TaskPair pair = make_task_pair(test::small_task());
    const std::vector<int> src{6, 16, 6}, student{6, 10, 3};
    const Mlp source = train_source_classifier(pair.source, src, test::short_training(5), 0);
    const Mlp teacher = finetune_teacher(source, pair.target_train, test::short_training(3), 0);
    const TrainConfig cfg = test::short_training(3);
    const KdConfig kd{};
    const Mlp a = kd_train(student, teacher, pair.target_train, kd, cfg, 2);
    CHECK(test::same_weights(a, kd_train(student, teacher, pair.target_train, kd, cfg, 2)));
    CHECK_FALSE(test::same_weights(a, train_scratch(student, pair.target_train, cfg, 2)));
  }

  TEST_CASE("teacher without fine-tuning keeps the source body") {
    const TaskPair pair = make_task_pair(test::small_task());
    const std::vector<int> src{6, 16, 6};
    const Mlp source = train_source_classifier(pair.source, src, test::short_training(5), 0);
    const Mlp teacher = finetune_teacher(source, pair.target_train, test::short_training(0), 3);
    CHECK(teacher.output_dim() == 3);
    CHECK(teacher.layers().front().weight == source.layers().front().weight);
    CHECK(teacher.layers().front().bias == source.layers().front().bias);
  }

  TEST_CASE("fine-tuned teacher beats chance by three standard deviations") {
    // Pooled over five task draws; single small draws vary a lot.
    const std::vector<int> src{6, 16, 6};
    double correct = 0.0, n = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const TaskPair pair = make_task_pair(test::small_task(seed));
      const Mlp source = train_source_classifier(pair.source, src, test::short_training(10), seed);
      const Mlp teacher = finetune_teacher(source, pair.target_train, test::short_training(10), 4);
      const auto size = static_cast<double>(pair.target_test.size());
      correct += accuracy(teacher, pair.target_test) * size;
      n += size;
      if (seed == 0)
        CHECK(test::same_weights(teacher, finetune_teacher(source, pair.target_train, test::short_training(10), 4)));
    }
    CHECK(correct / n > 1.0 / 3 + 3 * std::sqrt((1.0 / 3) * (2.0 / 3) / n));
  }

  TEST_CASE("output widths must agree") {
    const TaskPair pair = make_task_pair(test::small_task());
    const std::vector<int> src{6, 16, 6}, wrong{6, 10, 4};
    const Mlp source = train_source_classifier(pair.source, src, test::short_training(1), 0);
    const Mlp teacher = finetune_teacher(source, pair.target_train, test::short_training(1), 0);
    CHECK_THROWS_AS(kd_train(wrong, teacher, pair.target_train, KdConfig{}, test::short_training(1), 0),
                    DimensionError);
  }
}
