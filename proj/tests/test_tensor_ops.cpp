#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "mixedseg/gradcheck.hpp"
#include "mixedseg/ops.hpp"
#include "mixedseg/rng.hpp"
#include "mixedseg/tape.hpp"
#include "mixedseg/tensor.hpp"

using namespace mixedseg;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = Real(rng.uniform(lo, hi));
  return Tensor(shape, std::move(v));
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.shape() == Shape{2, 3});
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 2}, {}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(2.5).item() == doctest::Approx(2.5));
  CHECK_FALSE(t.has_grad());
  t.grad();
  CHECK(t.has_grad());
  CHECK(t.grad_view()[0] == Real(0));
}

TEST_CASE("conv2d identity kernel keeps the input") {
  Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w({1, 1, 1, 1}, {1});
  Tensor b({1}, {0});
  ConvSpec spec{1, 1, 1, 1, 1, 1, Padding::kValid};
  Tensor y = ops::conv2d(x, w, b, spec);
  REQUIRE(y.shape() == Shape{1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d hand-convolution oracle") {
  // 1x2x2 input [[1,2],[3,4]], all-ones 2x2 kernel, valid: 1+2+3+4 = 10.
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor w({1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor b({1}, {0});
  ConvSpec spec{1, 1, 2, 2, 1, 1, Padding::kValid};
  Tensor y = ops::conv2d(x, w, b, spec);
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y.item() == doctest::Approx(10.0));
}

TEST_CASE("conv2d brute-force oracle, random shapes and strides") {
  Rng rng(11);
  for (int iter = 0; iter < 12; ++iter) {
    const std::size_t n = 1 + rng.below(2), ci = 1 + rng.below(3), co = 1 + rng.below(3);
    const std::size_t h = 4 + rng.below(4), w = 4 + rng.below(4);
    const int kh = 1 + int(rng.below(3)), kw = 1 + int(rng.below(3));
    const int sh = 1 + int(rng.below(2)), sw = 1 + int(rng.below(2));
    const Padding pad = rng.below(2) ? Padding::kSame : Padding::kValid;
    ConvSpec spec{int(ci), int(co), kh, kw, sh, sw, pad};
    Tensor x = random_tensor({n, ci, h, w}, rng);
    Tensor wt = random_tensor({co, ci, std::size_t(kh), std::size_t(kw)}, rng);
    Tensor b = random_tensor({co}, rng);
    Tensor y = ops::conv2d(x, wt, b, spec);
    auto [oh, ow] = ops::conv_output_hw(spec, h, w);
    REQUIRE(y.shape() == Shape{n, co, oh, ow});

    // independent re-computation, direct definition
    long pt = 0, pl = 0;
    if (pad == Padding::kSame) {
      pt = std::max<long>(0, (long(oh) - 1) * sh + kh - long(h)) / 2;
      pl = std::max<long>(0, (long(ow) - 1) * sw + kw - long(w)) / 2;
    }
    for (std::size_t ni = 0; ni < n; ++ni)
      for (std::size_t oc = 0; oc < co; ++oc)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            double acc = b.values()[oc];
            for (std::size_t ic = 0; ic < ci; ++ic)
              for (int r = 0; r < kh; ++r)
                for (int s = 0; s < kw; ++s) {
                  const long ii = long(i) * sh + r - pt;
                  const long jj = long(j) * sw + s - pl;
                  if (ii < 0 || jj < 0 || ii >= long(h) || jj >= long(w)) continue;
                  acc += x.values()[((ni * ci + ic) * h + ii) * w + jj] *
                         wt.values()[((oc * ci + ic) * kh + r) * kw + s];
                }
            const double got = y.values()[((ni * co + oc) * oh + i) * ow + j];
            CHECK(got == doctest::Approx(acc).epsilon(1e-12));
          }
  }
}

TEST_CASE("conv2d paper-scale shape: 64 maps to 32 maps at 101x101") {
  Rng rng(3);
  Tensor x = random_tensor({64, 101, 101}, rng);
  Tensor w = random_tensor({32, 64, 3, 3}, rng, -0.05, 0.05);
  Tensor b = Tensor::zeros({32});
  ConvSpec spec{64, 32, 3, 3, 1, 1, Padding::kSame};
  Tensor y = ops::conv2d(x, w, b, spec);
  CHECK(y.shape() == Shape{32, 101, 101});
}

TEST_CASE("conv2d same padding preserves spatial dims at stride 1") {
  Rng rng(5);
  for (int k : {1, 3, 5}) {
    ConvSpec spec{2, 3, k, k, 1, 1, Padding::kSame};
    Tensor x = random_tensor({1, 2, 9, 7}, rng);
    Tensor w = random_tensor({3, 2, std::size_t(k), std::size_t(k)}, rng);
    Tensor b = Tensor::zeros({3});
    Tensor y = ops::conv2d(x, w, b, spec);
    CHECK(y.shape() == Shape{1, 3, 9, 7});
  }
}

TEST_CASE("conv2d shape errors") {
  Tensor x({2, 4, 4}, std::vector<Real>(32, 0));
  Tensor w({1, 3, 3, 3}, std::vector<Real>(27, 0));
  Tensor b({1}, {0});
  ConvSpec spec{3, 1, 3, 3, 1, 1, Padding::kSame};
  CHECK_THROWS_AS(ops::conv2d(x, w, b, spec), ShapeError);
}

TEST_CASE("mean_pool2d definition and shapes") {
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor y = ops::mean_pool2d(x, {2, 2}, {2, 2});
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y.item() == doctest::Approx(2.5));

  Tensor c = Tensor::full({1, 6, 6}, Real(3.25));
  Tensor yc = ops::mean_pool2d(c, {2, 2}, {2, 2});
  REQUIRE(yc.shape() == Shape{1, 3, 3});
  for (Real v : yc.values()) CHECK(v == doctest::Approx(3.25));

  // 101x101 with 8x8 kernel, 8x8 stride, complete windows only:
  // floor((101-8)/8)+1 = 12 per side.
  Tensor big = Tensor::zeros({1, 101, 101});
  Tensor yb = ops::mean_pool2d(big, {8, 8}, {8, 8});
  CHECK(yb.shape() == Shape{1, 12, 12});

  CHECK_THROWS_AS(ops::mean_pool2d(x, {3, 3}, {1, 1}), ShapeError);
}

TEST_CASE("max_pool2d window max and tie gradient") {
  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor y = ops::max_pool2d(x, {2, 2}, {2, 2});
  CHECK(y.item() == doctest::Approx(4.0));

  // all-equal window: full gradient goes to the first element
  Tensor eq = Tensor::full({1, 2, 2}, Real(7), true);
  Tape tape;
  Tensor out = ops::max_pool2d(eq, {2, 2}, {2, 2}, &tape);
  backward(out, tape);
  CHECK(eq.grad_view()[0] == Real(1));
  CHECK(eq.grad_view()[1] == Real(0));
  CHECK(eq.grad_view()[2] == Real(0));
  CHECK(eq.grad_view()[3] == Real(0));
}

TEST_CASE("max_pool2d matches exhaustive window scan") {
  Rng rng(17);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor y = ops::max_pool2d(x, {2, 2}, {2, 2});
  REQUIRE(y.shape() == Shape{2, 2, 2});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double best = -1e300;
        for (std::size_t r = 0; r < 2; ++r)
          for (std::size_t s = 0; s < 2; ++s)
            best = std::max(best, double(x.values()[(c * 4 + 2 * i + r) * 4 + 2 * j + s]));
        CHECK(y.values()[(c * 2 + i) * 2 + j] == doctest::Approx(best));
      }
}

TEST_CASE("batch_norm normalizes per channel in train mode") {
  Rng rng(23);
  Tensor x = random_tensor({4, 2, 3, 3}, rng, -3.0, 5.0);
  Tensor gamma = Tensor::full({2}, Real(1));
  Tensor beta = Tensor::zeros({2});
  RunningStats stats = RunningStats::create(2);
  Tensor y = ops::batch_norm(x, gamma, beta, BatchNormMode::kTrain, &stats);
  const std::size_t per = 4 * 9;
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < 9; ++j) mean += y.values()[(n * 2 + c) * 9 + j];
    mean /= per;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < 9; ++j) {
        const double d = y.values()[(n * 2 + c) * 9 + j] - mean;
        var += d * d;
      }
    var /= per;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // epsilon in denominator
  }
}

TEST_CASE("batch_norm affine and two-pass statistics oracle") {
  Rng rng(29);
  Tensor x = random_tensor({4, 2, 3, 3}, rng, -2.0, 2.0);
  Tensor gamma = Tensor::full({2}, Real(2));
  Tensor beta = Tensor::full({2}, Real(3));
  RunningStats stats = RunningStats::create(2);
  Tensor y = ops::batch_norm(x, gamma, beta, BatchNormMode::kTrain, &stats);

  // independent two-pass mean/variance oracle
  const double eps = 1e-5;
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < 9; ++j) mean += x.values()[(n * 2 + c) * 9 + j];
    mean /= 36.0;
    double var = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < 9; ++j) {
        const double d = x.values()[(n * 2 + c) * 9 + j] - mean;
        var += d * d;
      }
    var /= 36.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t j = 0; j < 9; ++j) {
        const double xhat = (x.values()[(n * 2 + c) * 9 + j] - mean) / std::sqrt(var + eps);
        const double expect = 2.0 * xhat + 3.0;
        CHECK(y.values()[(n * 2 + c) * 9 + j] == doctest::Approx(expect).epsilon(1e-6));
      }
  }
}

TEST_CASE("batch_norm running stats feed inference") {
  Rng rng(31);
  Tensor gamma = Tensor::full({1}, Real(1));
  Tensor beta = Tensor::zeros({1});
  RunningStats stats = RunningStats::create(1);
  // Repeated exposure to the same batch pulls the running stats toward it.
  Tensor x = random_tensor({8, 1, 2, 2}, rng, 4.0, 6.0);
  for (int i = 0; i < 200; ++i) {
    ops::batch_norm(x, gamma, beta, BatchNormMode::kTrain, &stats);
  }
  Tensor y = ops::batch_norm(x, gamma, beta, BatchNormMode::kInfer, &stats);
  // infer twice: identical outputs, stats untouched
  Tensor y2 = ops::batch_norm(x, gamma, beta, BatchNormMode::kInfer, &stats);
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.values()[i] == y2.values()[i]);
  double mean = 0;
  for (Real v : y.values()) mean += v;
  CHECK(mean / y.numel() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("batch_norm rejects degenerate batches") {
  Tensor x({1, 1, 1, 1}, {5});
  Tensor gamma({1}, {1});
  Tensor beta({1}, {0});
  RunningStats stats = RunningStats::create(1);
  CHECK_THROWS_AS(ops::batch_norm(x, gamma, beta, BatchNormMode::kTrain, &stats), ShapeError);
}

TEST_CASE("fully_connected identity and hand dot product") {
  Tensor x({1, 2}, {1, 2});
  Tensor wid({2, 2}, {1, 0, 0, 1});
  Tensor b0 = Tensor::zeros({2});
  Tensor y = ops::fully_connected(x, wid, b0);
  CHECK(y.values()[0] == doctest::Approx(1.0));
  CHECK(y.values()[1] == doctest::Approx(2.0));

  // x=[1,2], W=[[1],[1]], b=[0.5] -> 1+2+0.5 = 3.5
  Tensor w({2, 1}, {1, 1});
  Tensor b({1}, {0.5});
  Tensor z = ops::fully_connected(x, w, b);
  CHECK(z.item() == doctest::Approx(3.5));

  CHECK_THROWS_AS(ops::fully_connected(x, Tensor({3, 1}, {1, 1, 1}), b), ShapeError);
}

TEST_CASE("fully_connected weight gradient equals outer-product oracle") {
  Rng rng(37);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  w.set_requires_grad(true);
  Tensor b = Tensor::zeros({2});
  Tape tape;
  Tensor y = ops::fully_connected(x, w, b, &tape);
  Tensor loss = ops::sum(y, &tape);
  backward(loss, tape);
  // d sum(xW+b) / dW[d,k] = sum_n x[n,d]
  for (std::size_t d = 0; d < 4; ++d) {
    double colsum = 0;
    for (std::size_t n = 0; n < 3; ++n) colsum += x.values()[n * 4 + d];
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(w.grad_view()[d * 2 + k] == doctest::Approx(colsum).epsilon(1e-12));
    }
  }
}

TEST_CASE("relu and softmax definitions") {
  Tensor x({4}, {-2, -0.5, 0.5, 2});
  Tensor y = ops::relu(x);
  CHECK(y.values()[0] == Real(0));
  CHECK(y.values()[1] == Real(0));
  CHECK(y.values()[2] == Real(0.5));
  CHECK(y.values()[3] == Real(2));

  Tensor logits({3}, {1.7, 1.7, 1.7});
  Tensor s = ops::softmax(logits, 0);
  for (Real v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(ops::softmax(logits, 1), ShapeError);
}

TEST_CASE("softmax outputs are a distribution along the axis") {
  Rng rng(41);
  Tensor x = random_tensor({3, 5, 2}, rng, -4.0, 4.0);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor s = ops::softmax(x, axis);
    for (Real v : s.values()) CHECK(v >= Real(0));
    // sum along axis == 1
    const std::size_t len = x.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < 3; ++i) inner *= x.dim(i);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        double acc = 0;
        for (std::size_t k = 0; k < len; ++k) acc += s.values()[o * len * inner + k * inner + i];
        CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
}

TEST_CASE("concat then slice recovers both inputs") {
  Rng rng(43);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Shape sa{2, 3, 4}, sb{2, 3, 4};
    sb[axis] = 2;
    Tensor a = random_tensor(sa, rng);
    Tensor b = random_tensor(sb, rng);
    Tensor y = ops::concat(a, b, axis);
    REQUIRE(y.dim(axis) == sa[axis] + sb[axis]);
    // slice back out and compare element-wise
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= sa[i];
    for (std::size_t i = axis + 1; i < 3; ++i) inner *= sa[i];
    const std::size_t abl = sa[axis] * inner, bbl = sb[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < abl; ++i)
        CHECK(y.values()[o * (abl + bbl) + i] == a.values()[o * abl + i]);
      for (std::size_t i = 0; i < bbl; ++i)
        CHECK(y.values()[o * (abl + bbl) + abl + i] == b.values()[o * bbl + i]);
    }
  }
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor c({3, 3}, std::vector<Real>(9, 0));
  CHECK_THROWS_AS(ops::concat(a, c, 0), ShapeError);
}

TEST_CASE("cross entropy closed form") {
  Tensor logits({2}, {0, 0});
  Tensor loss = ops::cross_entropy_from_logits(logits, 0);
  CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // strongly confident and correct -> loss ~ 0
  Tensor conf({2}, {30, -30});
  CHECK(ops::cross_entropy_from_logits(conf, 0).item() == doctest::Approx(0.0).epsilon(1e-9));

  // extreme logits stay finite
  Tensor ext({3}, {1000, -1000, 999});
  CHECK(std::isfinite(double(ops::cross_entropy_from_logits(ext, 1).item())));

  CHECK_THROWS_AS(ops::cross_entropy_from_logits(logits, 5), ShapeError);
}

TEST_CASE("upsample nearest doubles and inverts pooling shape") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = ops::upsample_nearest2d(x, {4, 4});
  REQUIRE(y.shape() == Shape{1, 1, 4, 4});
  const std::vector<Real> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (std::size_t i = 0; i < 16; ++i) CHECK(y.values()[i] == expect[i]);
}

TEST_CASE("backward: linear and quadratic identities") {
  Tensor x({4}, {1, -2, 3, 0.5}, true);
  {
    Tape tape;
    Tensor loss = ops::sum(x, &tape);
    backward(loss, tape);
    for (Real g : x.grad_view()) CHECK(g == Real(1));
  }
  x.clear_grad();
  {
    Tape tape;
    Tensor loss = ops::sum(ops::mul(x, x, &tape), &tape);
    backward(loss, tape);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(x.grad_view()[i] == doctest::Approx(2.0 * x.values()[i]));
  }
}

TEST_CASE("backward accumulates across fan-out") {
  // y = sum(x) + sum(x) must give grad 2, matching a duplicated single path.
  Tensor x({3}, {0.5, -1.5, 2}, true);
  Tape tape;
  Tensor s1 = ops::sum(x, &tape);
  Tensor s2 = ops::sum(x, &tape);
  Tensor loss = ops::add(s1, s2, &tape);
  backward(loss, tape);
  for (Real g : x.grad_view()) CHECK(g == Real(2));

  Tensor nonscalar({2}, {1, 2});
  Tape t2;
  CHECK_THROWS_AS(backward(nonscalar, t2), ShapeError);
}

TEST_CASE("grad_check: linear function is exact to fp noise") {
  Rng rng(47);
  Tensor x = random_tensor({6}, rng);
  auto f = [](const std::vector<Tensor>& in, Tape& tape) {
    return ops::sum(ops::scale(in[0], Real(3.5), &tape), &tape);
  };
  auto report = grad_check(f, {x});
  CHECK(report.pass);
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad_check: relu away from the kink") {
  std::vector<Real> v{-0.5, -0.25, 0.25, 0.5, 1.5, -2.0};
  Tensor x({6}, std::move(v));
  auto f = [](const std::vector<Tensor>& in, Tape& tape) {
    return ops::sum(ops::relu(in[0], &tape), &tape);
  };
  auto report = grad_check(f, {x});
  CHECK(report.pass);
}

TEST_CASE("grad_check: conv + batchnorm + fc composite") {
  Rng rng(53);
  Tensor img = random_tensor({1, 2, 8, 8}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
  // A conv feeding batch norm gets no bias input here; a uniform shift is
  // cancelled by the normalization, so its true gradient is identically zero
  // and central differences only see rounding noise on it.
  Tensor b0 = Tensor::zeros({3});
  Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng, -0.5, 0.5);
  Tensor fcw = random_tensor({3 * 16, 2}, rng, -0.3, 0.3);
  Tensor fcb = random_tensor({2}, rng, -0.1, 0.1);
  ConvSpec spec{2, 3, 3, 3, 1, 1, Padding::kSame};
  auto f = [&spec, &b0](const std::vector<Tensor>& in, Tape& tape) {
    Tensor h = ops::conv2d(in[0], in[1], b0, spec, &tape);
    h = ops::batch_norm(h, in[2], in[3], BatchNormMode::kTrain, nullptr, &tape);
    h = ops::relu(h, &tape);
    h = ops::max_pool2d(h, {2, 2}, {2, 2}, &tape);
    Tensor flat = ops::reshape(h, {1, h.numel()}, &tape);
    Tensor logits = ops::fully_connected(flat, in[4], in[5], &tape);
    Tensor row = ops::reshape(logits, {2}, &tape);
    return ops::cross_entropy_from_logits(row, 0, &tape);
  };
  auto report = grad_check(f, {img, w, gamma, beta, fcw, fcb});
  CHECK(report.pass);
  CHECK(report.max_rel_error < 1e-4);
}
