#include <doctest.h>

#include <cmath>

#include "mixedseg/optimizer.hpp"
#include "mixedseg/rng.hpp"

using namespace mixedseg;

namespace {

GradientBuffer manual_gradient(const std::vector<std::vector<Real>>& g) { return g; }

}  // namespace

TEST_CASE("accumulate: identity cases and sequential-sum oracle") {
  Tensor p = Tensor::zeros({3}, true);
  OptimizerConfig cfg;
  Optimizer opt({p}, cfg);

  // per-batch gradients injected through the eval callback
  const std::vector<std::vector<Real>> batch_grads{
      {1.0, -2.0, 0.5}, {0.25, 0.25, -1.0}, {3.0, 0.0, 0.125}};
  auto eval = [&](std::size_t b) {
    auto g = p.grad();
    for (std::size_t j = 0; j < 3; ++j) g[j] += batch_grads[b][j];
  };

  GradientBuffer g1 = opt.accumulate(1, eval);
  for (std::size_t j = 0; j < 3; ++j) CHECK(g1[0][j] == batch_grads[0][j]);

  // two identical batches equal the single-batch gradient
  auto eval_same = [&](std::size_t) {
    auto g = p.grad();
    for (std::size_t j = 0; j < 3; ++j) g[j] += batch_grads[0][j];
  };
  GradientBuffer g2 = opt.accumulate(2, eval_same);
  for (std::size_t j = 0; j < 3; ++j) CHECK(g2[0][j] == doctest::Approx(batch_grads[0][j]));

  // three distinct batches: mean in batch order
  GradientBuffer g3 = opt.accumulate(3, eval);
  for (std::size_t j = 0; j < 3; ++j) {
    const double expect =
        (double(batch_grads[0][j]) + batch_grads[1][j] + batch_grads[2][j]) / 3.0;
    CHECK(double(g3[0][j]) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("accumulate rejects non-finite gradients") {
  Tensor p = Tensor::zeros({2}, true);
  Optimizer opt({p}, OptimizerConfig{});
  auto eval = [&](std::size_t) { p.grad()[0] = Real(NAN); };
  CHECK_THROWS_AS(opt.accumulate(1, eval), NumericError);
}

TEST_CASE("step: normalization, fixed point and momentum recurrence") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.lr_decay_every = 0;

  // unit-norm gradient passes through the normalization unchanged
  {
    Tensor p({2}, {1.0, 1.0}, true);
    Optimizer opt({p}, cfg);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    opt.step(manual_gradient({{Real(inv_sqrt2), Real(inv_sqrt2)}}));
    CHECK(double(p.values()[0]) == doctest::Approx(1.0 - 0.1 * inv_sqrt2).epsilon(1e-12));
    // velocity now equals the normalized gradient: norm 1
    double vnorm = 0;
    for (Real v : opt.velocity()[0].values()) vnorm += double(v) * v;
    CHECK(std::sqrt(vnorm) == doctest::Approx(1.0).epsilon(1e-12));
  }

  // zero gradient, zero velocity: parameters unchanged
  {
    Tensor p({2}, {0.5, -0.25}, true);
    Optimizer opt({p}, cfg);
    opt.step(manual_gradient({{0.0, 0.0}}));
    CHECK(p.values()[0] == Real(0.5));
    CHECK(p.values()[1] == Real(-0.25));
  }

  // two steps against the hand-iterated recurrence on a 2-parameter problem
  {
    Tensor p({2}, {1.0, 2.0}, true);
    Optimizer opt({p}, cfg);
    const std::vector<Real> g1{0.6, 0.8};  // norm 1
    const std::vector<Real> g2{3.0, 4.0};  // norm 5
    opt.step(manual_gradient({g1}));
    opt.step(manual_gradient({g2}));
    // by hand: v1 = g1; theta1 = theta0 - 0.1 v1
    //          v2 = 0.9 v1 + g2/5; theta2 = theta1 - 0.1 v2
    const double v1x = 0.6, v1y = 0.8;
    const double t1x = 1.0 - 0.1 * v1x, t1y = 2.0 - 0.1 * v1y;
    const double v2x = 0.9 * v1x + 3.0 / 5.0, v2y = 0.9 * v1y + 4.0 / 5.0;
    const double t2x = t1x - 0.1 * v2x, t2y = t1y - 0.1 * v2y;
    CHECK(double(p.values()[0]) == doctest::Approx(t2x).epsilon(1e-12));
    CHECK(double(p.values()[1]) == doctest::Approx(t2y).epsilon(1e-12));
  }
}

TEST_CASE("zero-velocity step direction is invariant to loss rescaling") {
  Rng rng(101);
  std::vector<Real> base(6);
  for (Real& g : base) g = Real(rng.uniform(-2, 2));
  std::vector<Real> scaled = base;
  for (Real& g : scaled) g *= Real(10);

  OptimizerConfig cfg;
  cfg.lr_decay_every = 0;
  Tensor p1 = Tensor::zeros({6}, true);
  Tensor p2 = Tensor::zeros({6}, true);
  Optimizer o1({p1}, cfg), o2({p2}, cfg);
  o1.step(manual_gradient({base}));
  o2.step(manual_gradient({scaled}));
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(double(p1.values()[j]) == doctest::Approx(double(p2.values()[j])).epsilon(1e-9));
  }
}

TEST_CASE("quadratic converges within 500 normalized steps") {
  // f(x) = (x - 3)^2, gradient 2(x-3); normalized steps need the lr decay to
  // shrink the limit cycle below the target
  OptimizerConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.0;
  cfg.lr_decay_every = 50;
  cfg.lr_decay_factor = 0.5;
  Tensor x = Tensor::zeros({1}, true);
  x.values()[0] = Real(2.0);
  Optimizer opt({x}, cfg);
  for (int i = 0; i < 500; ++i) {
    const Real g = 2 * (x.values()[0] - Real(3));
    opt.step(manual_gradient({{g}}));
  }
  CHECK(std::abs(double(x.values()[0]) - 3.0) < 1e-3);
}

TEST_CASE("normalize-after-momentum variant also reaches the minimum") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.5;
  cfg.lr_decay_every = 40;
  cfg.normalize_after_momentum = true;
  Tensor x = Tensor::zeros({1}, true);
  Optimizer opt({x}, cfg);
  for (int i = 0; i < 500; ++i) {
    const Real g = 2 * (x.values()[0] - Real(1));
    opt.step(manual_gradient({{g}}));
  }
  CHECK(std::abs(double(x.values()[0]) - 1.0) < 5e-3);
}

TEST_CASE("learning rate decays by the configured factor") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.08;
  cfg.lr_decay_every = 10;
  cfg.lr_decay_factor = 0.5;
  Tensor p = Tensor::zeros({1}, true);
  Optimizer opt({p}, cfg);
  CHECK(opt.effective_lr() == doctest::Approx(0.08));
  for (int i = 0; i < 10; ++i) opt.step(manual_gradient({{1.0}}));
  CHECK(opt.effective_lr() == doctest::Approx(0.04));
  for (int i = 0; i < 10; ++i) opt.step(manual_gradient({{1.0}}));
  CHECK(opt.effective_lr() == doctest::Approx(0.02));
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig bad;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = OptimizerConfig{};
  bad.learning_rate = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = OptimizerConfig{};
  bad.batches_per_iteration = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
