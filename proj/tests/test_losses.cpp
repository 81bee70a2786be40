#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixedseg/losses.hpp"
#include "mixedseg/rng.hpp"

using namespace mixedseg;

TEST_CASE("pixel weights follow the batch composition") {
  // one 10x10 supervised image, 10 tumor pixels, t0=0.7 t1=0.3:
  // tumor pixel weight 0.3/10 = 0.03, healthy weight 0.7/90.
  LabelMap masks = LabelMap::zeros({1, 10, 10});
  for (std::size_t i = 0; i < 10; ++i) masks.labels[i] = 1;
  LossConfig cfg = LossConfig::binary_defaults();
  PixelWeights pw = compute_pixel_weights(masks, cfg);
  CHECK(pw.weights[0] == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(pw.weights[99] == doctest::Approx(0.7 / 90.0).epsilon(1e-12));
  double total = 0, tumor = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    total += pw.weights[i];
    if (masks.labels[i] == 1) tumor += pw.weights[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tumor == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("absent classes redistribute their target weight") {
  LabelMap masks = LabelMap::zeros({2, 4, 4});  // all healthy
  LossConfig cfg = LossConfig::binary_defaults();
  PixelWeights pw = compute_pixel_weights(masks, cfg);
  double total = 0;
  for (Real w : pw.weights) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pw.class_weight_sums[0] == doctest::Approx(1.0));
  CHECK(pw.class_weight_sums[1] == 0.0);
}

TEST_CASE("multiclass weight sums hit the configured targets") {
  LabelMap masks = LabelMap::zeros({1, 8, 8});
  // classes 1,2,3 present with different counts
  masks.labels[0] = 1;
  masks.labels[1] = 1;
  masks.labels[2] = 2;
  masks.labels[3] = 3;
  masks.labels[4] = 3;
  masks.labels[5] = 3;
  LossConfig cfg = LossConfig::multiclass_defaults();
  PixelWeights pw = compute_pixel_weights(masks, cfg);
  std::vector<double> sums(4, 0.0);
  for (std::size_t i = 0; i < masks.numel(); ++i) sums[masks.labels[i]] += pw.weights[i];
  CHECK(sums[0] == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(sums[1] == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(sums[2] == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(sums[3] == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("pixel weight property: unit sum and renormalized class sums") {
  Rng rng(71);
  LossConfig cfg = LossConfig::multiclass_defaults();
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = 1 + rng.below(4), h = 2 + rng.below(6), w = 2 + rng.below(6);
    LabelMap masks = LabelMap::zeros({n, h, w});
    for (auto& l : masks.labels) l = std::uint8_t(rng.below(4));
    PixelWeights pw = compute_pixel_weights(masks, cfg);
    double total = 0;
    std::vector<double> sums(4, 0.0);
    for (std::size_t i = 0; i < masks.numel(); ++i) {
      total += pw.weights[i];
      sums[masks.labels[i]] += pw.weights[i];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(sums[c] == doctest::Approx(pw.class_weight_sums[c]).epsilon(1e-9));
    }
  }
}

TEST_CASE("pixel weight errors") {
  LossConfig cfg = LossConfig::binary_defaults();
  LabelMap bad = LabelMap::zeros({1, 2, 2});
  bad.labels[0] = 3;  // out of range for K=2
  CHECK_THROWS_AS(compute_pixel_weights(bad, cfg), DataError);
  CHECK_THROWS_AS(compute_pixel_weights(LabelMap{}, cfg), DataError);

  LossConfig broken = cfg;
  broken.target_weights = {0.5, 0.4};
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  broken.target_weights = {0.7, 0.3};
  broken.a = 1.5;
  CHECK_THROWS_AS(broken.validate(), ConfigError);
}

namespace {

Tensor logits_for(const LabelMap& masks, std::size_t k, double correct_margin) {
  // logits that put `correct_margin` on the true class and 0 elsewhere
  const std::size_t n = masks.dims[0], h = masks.dims[1], w = masks.dims[2];
  Tensor z = Tensor::zeros({n, k, h, w});
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < plane; ++p) {
      z.values()[(i * k + masks.labels[i * plane + p]) * plane + p] = Real(correct_margin);
    }
  }
  return z;
}

}  // namespace

TEST_CASE("segmentation loss limits") {
  LabelMap masks = LabelMap::zeros({2, 4, 4});
  for (std::size_t i = 0; i < 8; ++i) masks.labels[i] = 1;
  LossConfig cfg = LossConfig::binary_defaults();
  PixelWeights pw = compute_pixel_weights(masks, cfg);

  // near-one-hot logits for the truth -> loss -> 0
  Tensor confident = logits_for(masks, 2, 50.0);
  CHECK(segmentation_loss(confident, masks, pw).item() == doctest::Approx(0.0).epsilon(1e-9));

  // uniform logits, K=2 -> ln 2 regardless of mask
  Tensor uniform = Tensor::zeros({2, 2, 4, 4});
  CHECK(segmentation_loss(uniform, masks, pw).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("segmentation loss matches a scalar hand computation") {
  // single 2x2 image, known logits, hand-applied weighted cross-entropy
  LabelMap masks = LabelMap::zeros({1, 2, 2});
  masks.labels[3] = 1;
  LossConfig cfg = LossConfig::binary_defaults();
  PixelWeights pw = compute_pixel_weights(masks, cfg);
  // pixel weights: three class-0 pixels at 0.7/3, one tumor pixel at 0.3
  Tensor z({1, 2, 2, 2}, {// class-0 plane
                          1.0, -0.5, 0.25, 2.0,
                          // class-1 plane
                          0.5, 0.5, -1.0, 1.0});
  double expect = 0.0;
  const double w0 = 0.7 / 3.0;
  auto ce = [](double zt, double zo) { return std::log(std::exp(zt) + std::exp(zo)) - zt; };
  expect += w0 * ce(1.0, 0.5);
  expect += w0 * ce(-0.5, 0.5);
  expect += w0 * ce(0.25, -1.0);
  expect += 0.3 * ce(1.0, 2.0);  // tumor pixel: truth is class 1
  CHECK(segmentation_loss(z, masks, pw).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("segmentation loss is invariant to supervised image order") {
  Rng rng(73);
  const std::size_t n = 3, h = 4, w = 4, k = 2;
  LabelMap masks = LabelMap::zeros({n, h, w});
  for (auto& l : masks.labels) l = std::uint8_t(rng.below(2));
  Tensor z = Tensor::zeros({n, k, h, w});
  for (Real& v : z.values()) v = Real(rng.uniform(-2, 2));
  LossConfig cfg = LossConfig::binary_defaults();
  const Real base = segmentation_loss(z, masks, compute_pixel_weights(masks, cfg)).item();

  // permute images (rotate order)
  LabelMap pm = LabelMap::zeros({n, h, w});
  Tensor pz = Tensor::zeros({n, k, h, w});
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = (i + 1) % n;
    std::copy_n(masks.labels.begin() + src * plane, plane, pm.labels.begin() + i * plane);
    std::copy_n(z.values().begin() + src * k * plane, k * plane,
                pz.values().begin() + i * k * plane);
  }
  const Real permuted = segmentation_loss(pz, pm, compute_pixel_weights(pm, cfg)).item();
  CHECK(permuted == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("strict prefactor divides by the per-image pixel count") {
  LabelMap masks = LabelMap::zeros({1, 4, 4});
  LossConfig cfg = LossConfig::binary_defaults();
  Tensor z = Tensor::zeros({1, 2, 4, 4});
  const Real plain = segmentation_loss(z, masks, compute_pixel_weights(masks, cfg)).item();
  cfg.strict_prefactor = true;
  const Real strict = segmentation_loss(z, masks, compute_pixel_weights(masks, cfg)).item();
  CHECK(strict == doctest::Approx(plain / 16.0).epsilon(1e-12));
}

TEST_CASE("classification loss limits and branch averaging") {
  // perfect confident logits -> 0
  Tensor good({2, 2}, {20, -20, -20, 20});
  CHECK(classification_loss({good}, {{0, 1}}).item() == doctest::Approx(0.0).epsilon(1e-8));

  // uniform logits -> ln 2 per branch
  Tensor uniform = Tensor::zeros({3, 2});
  CHECK(classification_loss({uniform}, {{0, 1, 1}}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // three branches with per-branch losses (0.2, 0.4, 0.6) -> mean 0.4
  auto margin_for = [](double loss) { return -std::log(std::exp(loss) - 1.0); };
  std::vector<Tensor> logits;
  for (double l : {0.2, 0.4, 0.6}) {
    const double d = margin_for(l);
    logits.push_back(Tensor({1, 2}, {Real(d), 0}));
  }
  CHECK(classification_loss(logits, {{0}, {0}, {0}}).item() ==
        doctest::Approx(0.4).epsilon(1e-9));

  CHECK_THROWS_AS(classification_loss({uniform}, {{0, 1, 2}}), DataError);
  CHECK_THROWS_AS(classification_loss({uniform}, {{0, 1}}), ShapeError);
}

TEST_CASE("total loss identities and arithmetic") {
  Tensor ls = Tensor::scalar(2.0);
  Tensor lc = Tensor::scalar(1.0);
  Tensor t1 = total_loss(ls, lc, 1.0);
  CHECK(t1.same_data(ls));  // bitwise identity
  Tensor t0 = total_loss(ls, lc, 0.0);
  CHECK(t0.same_data(lc));
  CHECK(total_loss(ls, lc, 0.7).item() == doctest::Approx(1.7).epsilon(1e-15));
  CHECK_THROWS_AS(total_loss(ls, lc, 1.5), ConfigError);
}

TEST_CASE("total loss is monotone in each component") {
  Rng rng(79);
  for (int i = 0; i < 50; ++i) {
    const double a = rng.uniform(0.05, 0.95);
    const double s1 = rng.uniform(0, 3), c1 = rng.uniform(0, 3);
    const double ds = rng.uniform(0, 1), dc = rng.uniform(0, 1);
    const Real base = total_loss(Tensor::scalar(Real(s1)), Tensor::scalar(Real(c1)), a).item();
    const Real up_s =
        total_loss(Tensor::scalar(Real(s1 + ds)), Tensor::scalar(Real(c1)), a).item();
    const Real up_c =
        total_loss(Tensor::scalar(Real(s1)), Tensor::scalar(Real(c1 + dc)), a).item();
    CHECK(up_s >= base);
    CHECK(up_c >= base);
  }
}

TEST_CASE("background-only batches stay finite") {
  LabelMap masks = LabelMap::zeros({2, 8, 8});
  LossConfig cfg = LossConfig::multiclass_defaults();
  PixelWeights pw = compute_pixel_weights(masks, cfg);
  Rng rng(83);
  Tensor z = Tensor::zeros({2, 4, 8, 8});
  for (Real& v : z.values()) v = Real(rng.uniform(-30, 30));
  const Real loss = segmentation_loss(z, masks, pw).item();
  CHECK(std::isfinite(double(loss)));
}

TEST_CASE("loss gradients: fused ops match finite differences") {
  Rng rng(89);
  LabelMap masks = LabelMap::zeros({2, 3, 3});
  for (auto& l : masks.labels) l = std::uint8_t(rng.below(2));
  LossConfig cfg = LossConfig::binary_defaults();
  PixelWeights pw = compute_pixel_weights(masks, cfg);

  Tensor z = Tensor::zeros({2, 2, 3, 3});
  for (Real& v : z.values()) v = Real(rng.uniform(-1, 1));
  z.set_requires_grad(true);
  Tensor cl = Tensor::zeros({2, 2});
  for (Real& v : cl.values()) v = Real(rng.uniform(-1, 1));
  cl.set_requires_grad(true);

  Tape tape;
  Tensor ls = segmentation_loss(z, masks, pw, &tape);
  Tensor lc = classification_loss({cl}, {{1, 0}}, &tape);
  Tensor lt = total_loss(ls, lc, 0.7, &tape);
  backward(lt, tape);

  const double eps = 1e-6;
  auto numeric = [&](Tensor& t, std::size_t j) {
    const Real saved = t.values()[j];
    t.values()[j] = saved + Real(eps);
    const double lp = double(total_loss(segmentation_loss(z, masks, pw),
                                        classification_loss({cl}, {{1, 0}}), 0.7)
                                 .item());
    t.values()[j] = saved - Real(eps);
    const double lm = double(total_loss(segmentation_loss(z, masks, pw),
                                        classification_loss({cl}, {{1, 0}}), 0.7)
                                 .item());
    t.values()[j] = saved;
    return (lp - lm) / (2 * eps);
  };
  for (std::size_t j = 0; j < z.numel(); ++j) {
    CHECK(double(z.grad_view()[j]) == doctest::Approx(numeric(z, j)).epsilon(1e-5));
  }
  for (std::size_t j = 0; j < cl.numel(); ++j) {
    CHECK(double(cl.grad_view()[j]) == doctest::Approx(numeric(cl, j)).epsilon(1e-5));
  }
}
