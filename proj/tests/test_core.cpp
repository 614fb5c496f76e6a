#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ptl/core/linalg.hpp"
#include "ptl/core/loss.hpp"
#include "ptl/core/mlp.hpp"
#include "ptl/core/sgd.hpp"
#include "support.hpp"

using namespace ptl;
using test::random_matrix;

namespace {

// Mean soft-target cross-entropy of the batch.
double batch_loss(const Mlp& net, const MatrixXd& x, const MatrixXd& targets) {
  return softmax_cross_entropy_rows(net.forward(x), targets).mean_loss;
}

// Largest element-wise relative error between analytic and central
// finite-difference gradients over every parameter.
double max_gradient_error(Mlp net, const MatrixXd& x, const MatrixXd& targets, double h = 1e-5) {
  const auto loss = softmax_cross_entropy_rows(net.forward(x), targets);
  const LayerList<double> grads = backward(net, x, loss.grad_logits);
  double worst = 0.0;
  auto check = [&](double& p, double analytic) {
    const double saved = p;
    p = saved + h;
    const double up = batch_loss(net, x, targets);
    p = saved - h;
    const double down = batch_loss(net, x, targets);
    p = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  auto& params = net.parameters();
  for (std::size_t l = 0; l < params.size(); ++l) {
    for (Eigen::Index i = 0; i < params[l].weight.size(); ++i)
      check(params[l].weight.data()[i], grads[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < params[l].bias.size(); ++i) check(params[l].bias[i], grads[l].bias[i]);
  }
  return worst;
}

}  // namespace

TEST_SUITE("mlp") {
  TEST_CASE("zero network gives zero logits") {
    const std::vector<int> widths{5, 7, 3};
    const Mlp net = Mlp::zeros(widths);
    Rng rng(1);
    CHECK(net.forward(random_matrix(4, 5, rng)).isZero(0.0));
  }

  TEST_CASE("identity single layer returns its input") {
    LayerList<double> layers{{MatrixXd::Identity(4, 4), VectorXd::Zero(4)}};
    const Mlp net(layers);
    Rng rng(2);
    const MatrixXd x = random_matrix(3, 4, rng);
    CHECK(net.forward(x) == x);
  }

  TEST_CASE("two-layer forward matches a scalar recomputation") {
    Rng rng(3);
    const std::vector<int> widths{4, 6, 3};
    Mlp net = Mlp::he_normal(widths, rng);
    for (auto& l : net.parameters()) l.bias = test::random_vector(l.bias.size(), rng);
    const MatrixXd x = random_matrix(5, 4, rng);
    const MatrixXd logits = net.forward(x);
    const auto& w1 = net.layers()[0].weight;
    const auto& b1 = net.layers()[0].bias;
    const auto& w2 = net.layers()[1].weight;
    const auto& b2 = net.layers()[1].bias;
    for (int n = 0; n < 5; ++n) {
      std::vector<double> hidden(6);
      for (int j = 0; j < 6; ++j) {
        double s = b1[j];
        for (int i = 0; i < 4; ++i) s += w1(j, i) * x(n, i);
        hidden[j] = s > 0 ? s : 0.0;
      }
      for (int k = 0; k < 3; ++k) {
        double s = b2[k];
        for (int j = 0; j < 6; ++j) s += w2(k, j) * hidden[j];
        CHECK(std::abs(logits(n, k) - s) <= 1e-12);
      }
    }
  }

  TEST_CASE("features are the penultimate activations") {
    Rng rng(4);
    const std::vector<int> widths{3, 5, 4, 2};
    const Mlp net = Mlp::he_normal(widths, rng);
    const MatrixXd x = random_matrix(6, 3, rng);
    const MatrixXd f = net.features(x);
    MatrixXd logits = f * net.layers().back().weight.transpose();
    logits.rowwise() += net.layers().back().bias.transpose();
    CHECK((logits - net.forward(x)).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("layer shapes must compose") {
    LayerList<double> bad{{MatrixXd::Zero(4, 3), VectorXd::Zero(4)}, {MatrixXd::Zero(2, 5), VectorXd::Zero(2)}};
    CHECK_THROWS_AS(Mlp{bad}, DimensionError);
    const std::vector<int> widths{3, 2};
    const Mlp net = Mlp::zeros(widths);
    CHECK_THROWS_AS(net.forward(MatrixXd::Zero(1, 4)), DimensionError);
  }

  TEST_CASE("analytic gradients match finite differences") {
    Rng rng(5);
    const std::vector<int> widths{8, 16, 12, 5};
    Mlp net = Mlp::he_normal(widths, rng);
    for (auto& l : net.parameters()) l.bias = test::random_vector(l.bias.size(), rng, 0.1);
    const MatrixXd x = random_matrix(10, 8, rng);
    const MatrixXd t = test::random_simplex_rows(10, 5, rng);
    CHECK(max_gradient_error(net, x, t) <= 1e-4);
  }

  TEST_CASE("zero logit gradient gives zero parameter gradients") {
    Rng rng(6);
    const std::vector<int> widths{4, 6, 3};
    const Mlp net = Mlp::he_normal(widths, rng);
    const MatrixXd x = random_matrix(5, 4, rng);
    for (const auto& g : backward(net, x, MatrixXd::Zero(5, 3))) {
      CHECK(g.weight.isZero(0.0));
      CHECK(g.bias.isZero(0.0));
    }
  }

  TEST_CASE("duplicating the batch leaves mean gradients unchanged") {
    Rng rng(7);
    const std::vector<int> widths{4, 6, 3};
    const Mlp net = Mlp::he_normal(widths, rng);
    const MatrixXd x = random_matrix(5, 4, rng);
    const MatrixXd t = test::random_simplex_rows(5, 3, rng);
    MatrixXd x2(10, 4), t2(10, 3);
    x2 << x, x;
    t2 << t, t;
    const auto g1 = backward(net, x, softmax_cross_entropy_rows(net.forward(x), t).grad_logits);
    const auto g2 = backward(net, x2, softmax_cross_entropy_rows(net.forward(x2), t2).grad_logits);
    for (std::size_t l = 0; l < g1.size(); ++l) {
      CHECK((g1[l].weight - g2[l].weight).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK((g1[l].bias - g2[l].bias).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_SUITE("loss") {
  TEST_CASE("uniform prediction costs ln K") {
    const int k = 7;
    const auto r = softmax_cross_entropy(VectorXd::Constant(k, 0.3), VectorXd::Unit(k, 2));
    CHECK(r.loss == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  }

  TEST_CASE("gradient vanishes when the target equals the prediction") {
    VectorXd z(4);
    z << 0.2, -1.0, 3.0, 0.5;
    const auto r = softmax_cross_entropy(z, stable_softmax(z));
    CHECK(r.grad_logits.cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("scalar evaluation for [1, 0.5, -1]") {
    VectorXd z(3);
    z << 1.0, 0.5, -1.0;
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(0.5) + std::exp(-1.0)));
    const auto r = softmax_cross_entropy(z, VectorXd::Unit(3, 0));
    CHECK(std::abs(r.loss - expected) <= 1e-12);
  }

  TEST_CASE("loss is nonnegative and vanishes at saturation") {
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
      const VectorXd z = test::random_vector(5, rng, 3.0);
      const VectorXd t = test::random_simplex_rows(1, 5, rng).row(0).transpose();
      CHECK(softmax_cross_entropy(z, t).loss >= 0.0);
    }
    VectorXd z = VectorXd::Zero(4);
    z[1] = 40.0;
    CHECK(softmax_cross_entropy(z, VectorXd::Unit(4, 1)).loss <= 1e-15);
  }

  TEST_CASE("targets off the simplex are rejected") {
    VectorXd t(2);
    t << 0.7, 0.7;
    CHECK_THROWS_AS(softmax_cross_entropy(VectorXd::Zero(2), t), ValidationError);
    CHECK_THROWS_AS(softmax_cross_entropy(VectorXd::Zero(3), VectorXd::Unit(2, 0)), DimensionError);
  }
}

TEST_SUITE("sgd") {
  LayerList<double> single(double w) { return {{MatrixXd::Constant(1, 1, w), VectorXd::Zero(1)}}; }

  TEST_CASE("plain gradient descent without momentum or decay") {
    auto params = single(2.0);
    const auto grads = single(0.5);
    OptimizerState<double> state({.learning_rate = 0.1, .momentum = 0.0, .weight_decay = 0.0}, params);
    sgd_step(params, grads, state);
    CHECK(params[0].weight(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5).epsilon(1e-15));
  }

  TEST_CASE("zero gradient and zero velocity is a fixed point") {
    auto params = single(0.0);
    OptimizerState<double> state({.learning_rate = 0.1, .momentum = 0.9, .weight_decay = 1e-4}, params);
    sgd_step(params, single(0.0), state);
    CHECK(params[0].weight(0, 0) == 0.0);
  }

  TEST_CASE("zero learning rate is the identity") {
    Rng rng(9);
    LayerList<double> params{{random_matrix(3, 2, rng), test::random_vector(3, rng)}};
    const auto before = params;
    LayerList<double> grads{{random_matrix(3, 2, rng), test::random_vector(3, rng)}};
    OptimizerState<double> state({.learning_rate = 0.0}, params);
    for (int i = 0; i < 3; ++i) sgd_step(params, grads, state);
    CHECK(params[0].weight == before[0].weight);
    CHECK(params[0].bias == before[0].bias);
  }

  TEST_CASE("three Nesterov steps match the unrolled recurrence") {
    const double lr = 0.1, mu = 0.9, wd = 0.01, g = 0.5;
    auto params = single(1.0);
    OptimizerState<double> state({.learning_rate = lr, .momentum = mu, .weight_decay = wd}, params);
    double w = 1.0, v = 0.0;
    for (int i = 0; i < 3; ++i) {
      sgd_step(params, single(g), state);
      const double gd = g + wd * w;
      v = mu * v + gd;
      w -= lr * (gd + mu * v);
    }
    CHECK(std::abs(params[0].weight(0, 0) - w) <= 1e-12);
    // Hand-expanded first step: g' = 0.51, v = 0.51, w = 1 - 0.1 (0.51 + 0.459).
    auto p1 = single(1.0);
    OptimizerState<double> s1({.learning_rate = lr, .momentum = mu, .weight_decay = wd}, p1);
    sgd_step(p1, single(g), s1);
    CHECK(std::abs(p1[0].weight(0, 0) - 0.9031) <= 1e-12);
  }

  TEST_CASE("learning rate decays at milestones") {
    OptimizerState<double> state({.learning_rate = 0.1, .decay_epochs = {2, 4}, .decay_factor = 0.1}, single(0));
    state.epoch = 1;
    CHECK(state.learning_rate() == doctest::Approx(0.1));
    state.epoch = 2;
    CHECK(state.learning_rate() == doctest::Approx(0.01));
    state.epoch = 5;
    CHECK(state.learning_rate() == doctest::Approx(0.001));
  }
}

TEST_SUITE("linalg") {
  TEST_CASE("square roots of simple matrices") {
    CHECK(matrix_sqrt_psd(MatrixXd::Identity(3, 3)).isApprox(MatrixXd::Identity(3, 3), 1e-14));
    MatrixXd d = MatrixXd::Zero(2, 2);
    d.diagonal() << 4, 9;
    MatrixXd e = MatrixXd::Zero(2, 2);
    e.diagonal() << 2, 3;
    CHECK((matrix_sqrt_psd(d) - e).cwiseAbs().maxCoeff() <= 1e-14);
  }

  TEST_CASE("square root squares back") {
    Rng rng(10);
    const MatrixXd b = random_matrix(5, 5, rng);
    const MatrixXd a = b.transpose() * b;
    const MatrixXd s = matrix_sqrt_psd(a);
    CHECK((s * s - a).norm() / a.norm() <= 1e-6);
  }

  TEST_CASE("square root commutes with rotation on diagonal inputs") {
    Rng rng(11);
    const MatrixXd q = test::random_rotation(4, rng);
    VectorXd ev(4);
    ev << 0.5, 1.0, 2.0, 4.0;
    const MatrixXd d = ev.asDiagonal();
    const MatrixXd lhs = matrix_sqrt_psd((q * d * q.transpose()).eval());
    const MatrixXd rhs = q * matrix_sqrt_psd(d) * q.transpose();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("tiny negative eigenvalues are clamped, larger ones rejected") {
    MatrixXd a = MatrixXd::Zero(2, 2);
    a.diagonal() << 1.0, -1e-12;
    CHECK(matrix_sqrt_psd(a)(1, 1) == 0.0);
    a(1, 1) = -1e-3;
    CHECK_THROWS_AS(matrix_sqrt_psd(a), ValidationError);
    MatrixXd asym(2, 2);
    asym << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(matrix_sqrt_psd(asym), ValidationError);
  }

  TEST_CASE("unbiased fit of the square corners") {
    MatrixXd x(4, 2);
    x << 0, 0, 2, 0, 0, 2, 2, 2;
    const auto fit = fit_gaussian(x);
    CHECK(fit.mean.isApprox(VectorXd::Ones(2)));
    MatrixXd expected = MatrixXd::Zero(2, 2);
    expected.diagonal().setConstant(4.0 / 3.0);
    CHECK((fit.cov - expected).cwiseAbs().maxCoeff() <= 1e-14);
  }

  TEST_CASE("repeated point gives epsilon identity") {
    MatrixXd x(5, 3);
    x.rowwise() = Eigen::RowVector3d(1, -2, 3).eval();
    const auto fit = fit_gaussian(x);
    CHECK(fit.mean == Eigen::Vector3d(1, -2, 3));
    CHECK((fit.cov - kCovarianceEpsilon * MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-18);
    CHECK_THROWS_AS(fit_gaussian(MatrixXd(0, 3)), ValidationError);
  }

  TEST_CASE("large-sample mean within five standard errors") {
    Rng rng(12);
    const int n = 20000;
    const MatrixXd x = random_matrix(n, 3, rng, 2.0).rowwise() + Eigen::RowVector3d(1, 2, 3);
    const auto fit = fit_gaussian(x);
    const double bound = 5 * 2.0 / std::sqrt(n);
    CHECK((fit.mean - Eigen::Vector3d(1, 2, 3)).cwiseAbs().maxCoeff() <= bound);
  }
}
