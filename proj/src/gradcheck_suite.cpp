#include "mixedseg/gradcheck_suite.hpp"

#include "mixedseg/losses.hpp"
#include "mixedseg/model.hpp"
#include "mixedseg/ops.hpp"
#include "mixedseg/rng.hpp"

namespace mixedseg {

namespace {

Tensor rand_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = Real(rng.uniform(lo, hi));
  return Tensor(shape, std::move(v));
}

// Random positive weights make the probe loss generic: a plain sum has
// identically-zero true gradients through batch norm and pooling shifts.
Tensor probe_weights(const Shape& shape, Rng& rng) {
  return rand_tensor(shape, rng, 0.25, 1.75);
}

Tensor weighted_sum(const Tensor& y, const Tensor& w, Tape& tape) {
  return ops::sum(ops::mul(y, w, &tape), &tape);
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_channels = 1;
  c.input_size = {8, 8};
  c.depth = 1;
  c.base_width = 2;
  c.num_classes = 2;
  c.padding_mode = Padding::kSame;
  c.branch.pool_kernel = {2, 2};
  c.branch.pool_stride = {2, 2};
  c.branch.branch_conv_out = 2;
  c.branch.fc_widths = {4, 3, 3, 3, 3, 2, 2};
  return c;
}

}  // namespace

std::vector<NamedCheck> run_standard_gradchecks(double epsilon, double tolerance) {
  std::vector<NamedCheck> out;
  Rng rng(20240901);
  auto add = [&](const std::string& name, const TensorFn& f, std::vector<Tensor> inputs) {
    out.push_back({name, grad_check(f, std::move(inputs), epsilon, tolerance)});
  };

  {
    ConvSpec spec{2, 3, 3, 3, 1, 1, Padding::kSame};
    Tensor w = probe_weights({1, 3, 6, 6}, rng);
    add("conv2d",
        [spec, w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::conv2d(in[0], in[1], in[2], spec, &t), w, t);
        },
        {rand_tensor({1, 2, 6, 6}, rng), rand_tensor({3, 2, 3, 3}, rng),
         rand_tensor({3}, rng)});
  }
  {
    ConvSpec spec{2, 2, 3, 3, 2, 2, Padding::kValid};
    Tensor w = probe_weights({1, 2, 3, 3}, rng);
    add("conv2d_strided_valid",
        [spec, w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::conv2d(in[0], in[1], in[2], spec, &t), w, t);
        },
        {rand_tensor({1, 2, 7, 7}, rng), rand_tensor({2, 2, 3, 3}, rng),
         rand_tensor({2}, rng)});
  }
  {
    Tensor w = probe_weights({1, 2, 3, 3}, rng);
    add("mean_pool2d",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::mean_pool2d(in[0], {2, 2}, {2, 2}, &t), w, t);
        },
        {rand_tensor({1, 2, 6, 6}, rng)});
  }
  {
    Tensor w = probe_weights({1, 2, 3, 3}, rng);
    add("max_pool2d",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::max_pool2d(in[0], {2, 2}, {2, 2}, &t), w, t);
        },
        {rand_tensor({1, 2, 6, 6}, rng)});
  }
  {
    Tensor w = probe_weights({2, 3, 4, 4}, rng);
    add("batch_norm",
        [w](const std::vector<Tensor>& in, Tape& t) {
          Tensor y = ops::batch_norm(in[0], in[1], in[2], BatchNormMode::kTrain,
                                     nullptr, &t);
          return weighted_sum(y, w, t);
        },
        {rand_tensor({2, 3, 4, 4}, rng), rand_tensor({3}, rng, 0.5, 1.5),
         rand_tensor({3}, rng)});
  }
  {
    Tensor w = probe_weights({3, 4}, rng);
    add("fully_connected",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::fully_connected(in[0], in[1], in[2], &t), w, t);
        },
        {rand_tensor({3, 5}, rng), rand_tensor({5, 4}, rng), rand_tensor({4}, rng)});
  }
  {
    // inputs bounded away from the relu kink by much more than epsilon
    std::vector<Real> v;
    for (int i = 0; i < 12; ++i) v.push_back(Real((i % 2 ? 1 : -1) * (0.2 + 0.1 * i)));
    Tensor w = probe_weights({12}, rng);
    add("relu",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::relu(in[0], &t), w, t);
        },
        {Tensor({12}, std::move(v))});
  }
  {
    Tensor w = probe_weights({2, 4, 3}, rng);
    add("softmax",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::softmax(in[0], 1, &t), w, t);
        },
        {rand_tensor({2, 4, 3}, rng, -2.0, 2.0)});
  }
  {
    Tensor w = probe_weights({2, 5}, rng);
    add("concat",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::concat(in[0], in[1], 1, &t), w, t);
        },
        {rand_tensor({2, 2}, rng), rand_tensor({2, 3}, rng)});
  }
  add("cross_entropy_from_logits",
      [](const std::vector<Tensor>& in, Tape& t) {
        return ops::cross_entropy_from_logits(in[0], 1, &t);
      },
      {rand_tensor({4}, rng, -2.0, 2.0)});
  {
    Tensor w = probe_weights({1, 2, 5, 7}, rng);
    add("upsample_nearest2d",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::upsample_nearest2d(in[0], {5, 7}, &t), w, t);
        },
        {rand_tensor({1, 2, 3, 3}, rng)});
  }
  {
    Tensor w = probe_weights({6}, rng);
    add("add",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::add(in[0], in[1], &t), w, t);
        },
        {rand_tensor({6}, rng), rand_tensor({6}, rng)});
  }
  add("mul",
      [](const std::vector<Tensor>& in, Tape& t) {
        return ops::sum(ops::mul(in[0], in[1], &t), &t);
      },
      {rand_tensor({6}, rng), rand_tensor({6}, rng)});
  add("scale",
      [](const std::vector<Tensor>& in, Tape& t) {
        return ops::sum(ops::scale(in[0], Real(-1.75), &t), &t);
      },
      {rand_tensor({5}, rng)});
  add("sum",
      [](const std::vector<Tensor>& in, Tape& t) { return ops::sum(in[0], &t); },
      {rand_tensor({7}, rng)});
  {
    Tensor w = probe_weights({6}, rng);
    add("reshape",
        [w](const std::vector<Tensor>& in, Tape& t) {
          return weighted_sum(ops::reshape(in[0], {6}, &t), w, t);
        },
        {rand_tensor({2, 3}, rng)});
  }

  // fused loss primitives
  {
    LabelMap masks = LabelMap::zeros({2, 3, 3});
    for (std::size_t i = 0; i < masks.numel(); ++i) {
      masks.labels[i] = std::uint8_t((i * 7 + 3) % 2);
    }
    LossConfig lc = LossConfig::binary_defaults();
    PixelWeights pw = compute_pixel_weights(masks, lc);
    add("segmentation_loss",
        [masks, pw](const std::vector<Tensor>& in, Tape& t) {
          return segmentation_loss(in[0], masks, pw, &t);
        },
        {rand_tensor({2, 2, 3, 3}, rng)});
  }
  add("classification_loss",
      [](const std::vector<Tensor>& in, Tape& t) {
        return classification_loss({in[0], in[1]}, {{1, 0, 1}, {0, 0, 1}}, &t);
      },
      {rand_tensor({3, 2}, rng), rand_tensor({3, 2}, rng)});
  add("total_loss",
      [](const std::vector<Tensor>& in, Tape& t) {
        return total_loss(ops::sum(in[0], &t), ops::sum(in[1], &t), 0.7, &t);
      },
      {rand_tensor({3}, rng), rand_tensor({3}, rng)});

  // composite objective through the tiny joint model, checked against every
  // trainable parameter
  {
    auto model = std::make_shared<Model>(build_model(tiny_config(), 404));
    Tensor images = rand_tensor({3, 1, 8, 8}, rng);
    LabelMap masks = LabelMap::zeros({2, 8, 8});
    for (std::size_t p = 20; p < 44; ++p) masks.labels[p] = 1;
    const std::vector<std::vector<int>> labels{{1, 0, 1}};
    LossConfig lc = LossConfig::binary_defaults();
    PixelWeights pw = compute_pixel_weights(masks, lc);

    add("composite_total_loss",
        [model, images, masks, pw, labels, lc](const std::vector<Tensor>&, Tape& t) {
          ForwardOutput fw = forward(*model, images, ForwardMode::kTrain, &t);
          Tensor ls = segmentation_loss(fw.seg_logits, masks, pw, &t);
          Tensor lcl = classification_loss(fw.class_logits, labels, &t);
          return total_loss(ls, lcl, lc.a, &t);
        },
        model->parameters());
  }
  return out;
}

}  // namespace mixedseg
