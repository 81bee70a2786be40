#include "mixedseg/model.hpp"

#include <cmath>
#include <sstream>

#include "mixedseg/rng.hpp"

namespace mixedseg {

namespace {

// Spatial dimensions through the encoder/decoder for a given config:
// two 3x3 convs per level, 2x2/2 max-pool between levels, nearest-neighbour
// resize back to each skip's size on the way up. Valid padding shrinks each
// conv by 2 per side-pair; same padding leaves sizes untouched.
struct ShapeWalk {
  std::vector<std::pair<std::size_t, std::size_t>> skips;
  std::pair<std::size_t, std::size_t> tap;     // second-to-last conv output
  std::pair<std::size_t, std::size_t> pooled;  // branch pooling output
};

std::pair<std::size_t, std::size_t> conv_hw(const ModelConfig& c,
                                            std::pair<std::size_t, std::size_t> in,
                                            int k) {
  ConvSpec spec;
  spec.kernel_h = spec.kernel_w = k;
  spec.padding = c.padding_mode;
  return ops::conv_output_hw(spec, in.first, in.second);
}

ShapeWalk walk_shapes(const ModelConfig& c) {
  ShapeWalk wk;
  std::pair<std::size_t, std::size_t> cur{std::size_t(c.input_size.first),
                                          std::size_t(c.input_size.second)};
  for (int level = 0; level < c.depth; ++level) {
    cur = conv_hw(c, cur, 3);
    cur = conv_hw(c, cur, 3);
    wk.skips.push_back(cur);
    cur = ops::pool_output_hw(cur.first, cur.second, {2, 2}, {2, 2});
  }
  cur = conv_hw(c, cur, 3);
  cur = conv_hw(c, cur, 3);
  for (int level = c.depth - 1; level >= 0; --level) {
    cur = wk.skips[std::size_t(level)];
    cur = conv_hw(c, cur, 3);
    cur = conv_hw(c, cur, 3);
  }
  wk.tap = cur;
  wk.pooled = ops::pool_output_hw(cur.first, cur.second, c.branch.pool_kernel,
                                  c.branch.pool_stride);
  return wk;
}

Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in));
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = Real(rng.uniform(-limit, limit));
  return Tensor(std::move(shape), std::move(v), true);
}

ConvBnRelu make_conv_block(int in_ch, int out_ch, int k, Padding pad, Rng& rng) {
  ConvBnRelu layer;
  layer.spec = ConvSpec{in_ch, out_ch, k, k, 1, 1, pad};
  layer.w = init_weight({std::size_t(out_ch), std::size_t(in_ch), std::size_t(k),
                         std::size_t(k)},
                        std::size_t(in_ch) * k * k, rng);
  layer.gamma = Tensor::full({std::size_t(out_ch)}, Real(1), true);
  layer.beta = Tensor::zeros({std::size_t(out_ch)}, true);
  layer.stats = RunningStats::create(std::size_t(out_ch));
  return layer;
}

Tensor run_conv_block(ConvBnRelu& layer, const Tensor& x, BatchNormMode bn_mode,
                      Tape* tape) {
  // conv blocks carry no bias: the batch-norm shift makes one redundant
  Tensor b0 = Tensor::zeros({std::size_t(layer.spec.out_channels)});
  Tensor h = ops::conv2d(x, layer.w, b0, layer.spec, tape);
  h = ops::batch_norm(h, layer.gamma, layer.beta, bn_mode, &layer.stats, tape);
  return ops::relu(h, tape);
}

}  // namespace

void BranchConfig::validate() const {
  if (fc_widths.size() != 7) {
    throw ConfigError("branch must have exactly 7 fully-connected layers, got " +
                      std::to_string(fc_widths.size()));
  }
  if (fc_widths.back() != 2) {
    throw ConfigError("final branch layer must output 2 scores (absent/present)");
  }
  for (int w : fc_widths) {
    if (w < 1) throw ConfigError("branch fc widths must be positive");
  }
  if (pool_kernel.first < 1 || pool_kernel.second < 1 || pool_stride.first < 1 ||
      pool_stride.second < 1 || branch_conv_out < 1) {
    throw ConfigError("branch pooling/conv parameters must be >= 1");
  }
  if (skip_from < 1 || skip_to < skip_from || skip_to > 6) {
    throw ConfigError("branch skip indices must satisfy 1 <= skip_from <= skip_to <= 6");
  }
}

void ModelConfig::validate() const {
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (base_width < 1 || input_channels < 1) throw ConfigError("widths must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (padding_mode == Padding::kSame) {
    const int div = 1 << depth;
    if (input_size.first % div || input_size.second % div) {
      throw ConfigError("same padding requires input dims divisible by 2^depth (" +
                        std::to_string(div) + ")");
    }
  }
  branch.validate();
  walk_shapes(*this);  // throws if the schedule underflows the input
}

ModelConfig ModelConfig::toy_binary() {
  ModelConfig c;
  c.input_channels = 2;
  c.input_size = {32, 32};
  c.depth = 2;
  c.base_width = 8;
  c.num_classes = 2;
  c.padding_mode = Padding::kSame;
  c.branch.pool_kernel = {8, 8};
  c.branch.pool_stride = {8, 8};
  c.branch.branch_conv_out = 8;
  c.branch.fc_widths = {64, 32, 16, 16, 16, 8, 2};
  return c;
}

ModelConfig ModelConfig::toy_multiclass() {
  ModelConfig c = toy_binary();
  c.num_classes = 4;
  return c;
}

ModelConfig ModelConfig::valid_101_demo() {
  ModelConfig c;
  c.input_channels = 4;
  c.input_size = {109, 109};
  c.depth = 2;
  c.base_width = 64;
  c.num_classes = 2;
  c.padding_mode = Padding::kValid;
  c.branch.pool_kernel = {8, 8};
  c.branch.pool_stride = {8, 8};
  c.branch.branch_conv_out = 32;
  c.branch.fc_widths = {256, 128, 64, 64, 64, 32, 2};
  return c;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  Rng rng(seed);

  int prev = config.input_channels;
  for (int level = 0; level < config.depth; ++level) {
    const int w = config.level_width(level);
    m.encoder.push_back({make_conv_block(prev, w, 3, config.padding_mode, rng),
                         make_conv_block(w, w, 3, config.padding_mode, rng)});
    prev = w;
  }
  const int bw = config.level_width(config.depth);
  m.bottleneck = {make_conv_block(prev, bw, 3, config.padding_mode, rng),
                  make_conv_block(bw, bw, 3, config.padding_mode, rng)};

  m.decoder.resize(std::size_t(config.depth));
  int above = bw;  // channels arriving from the level below
  for (int level = config.depth - 1; level >= 0; --level) {
    const int w = config.level_width(level);
    m.decoder[std::size_t(level)] = {
        make_conv_block(above + w, w, 3, config.padding_mode, rng),
        make_conv_block(w, w, 3, config.padding_mode, rng)};
    above = w;
  }

  const std::size_t k = std::size_t(config.num_classes);
  const std::size_t tap_ch = std::size_t(config.base_width);
  m.final_w = init_weight({k, tap_ch, 1, 1}, tap_ch, rng);
  m.final_b = Tensor::zeros({k}, true);

  const ShapeWalk wk = walk_shapes(config);
  const std::size_t fc_in0 = std::size_t(config.branch.branch_conv_out) *
                             wk.pooled.first * wk.pooled.second;
  for (int bi = 0; bi < config.num_branches(); ++bi) {
    Branch br;
    br.conv = make_conv_block(int(tap_ch), config.branch.branch_conv_out, 3,
                              Padding::kSame, rng);
    std::size_t in_w = fc_in0;
    const auto& widths = config.branch.fc_widths;
    for (std::size_t j = 0; j < 7; ++j) {
      if (j == std::size_t(config.branch.skip_to)) {
        // layer after skip_to sees [out(skip_from), out(skip_to)]
        in_w = std::size_t(widths[std::size_t(config.branch.skip_from - 1)]) +
               std::size_t(widths[std::size_t(config.branch.skip_to - 1)]);
      }
      FcLayer fc;
      fc.w = init_weight({in_w, std::size_t(widths[j])}, in_w, rng);
      fc.b = Tensor::zeros({std::size_t(widths[j])}, true);
      fc.relu = j + 1 < 7;
      br.fc.push_back(std::move(fc));
      in_w = std::size_t(widths[j]);
    }
    m.branches.push_back(std::move(br));
  }
  return m;
}

namespace {

void push_block_params(std::vector<std::pair<std::string, Tensor>>& out,
                       const std::string& name, const ConvBnRelu& l) {
  out.emplace_back(name + ".w", l.w);
  out.emplace_back(name + ".gamma", l.gamma);
  out.emplace_back(name + ".beta", l.beta);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    push_block_params(out, "enc" + std::to_string(i) + ".conv1", encoder[i][0]);
    push_block_params(out, "enc" + std::to_string(i) + ".conv2", encoder[i][1]);
  }
  push_block_params(out, "bottleneck.conv1", bottleneck[0]);
  push_block_params(out, "bottleneck.conv2", bottleneck[1]);
  for (std::size_t i = decoder.size(); i-- > 0;) {
    push_block_params(out, "dec" + std::to_string(i) + ".conv1", decoder[i][0]);
    push_block_params(out, "dec" + std::to_string(i) + ".conv2", decoder[i][1]);
  }
  out.emplace_back("final.w", final_w);
  out.emplace_back("final.b", final_b);
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const std::string bn = "branch" + std::to_string(b);
    push_block_params(out, bn + ".conv", branches[b].conv);
    for (std::size_t j = 0; j < branches[b].fc.size(); ++j) {
      out.emplace_back(bn + ".fc" + std::to_string(j + 1) + ".w", branches[b].fc[j].w);
      out.emplace_back(bn + ".fc" + std::to_string(j + 1) + ".b", branches[b].fc[j].b);
    }
  }
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Model::named_stats() {
  std::vector<std::pair<std::string, Tensor>> out;
  auto push = [&out](const std::string& name, ConvBnRelu& l) {
    out.emplace_back(name + ".running_mean", l.stats.mean);
    out.emplace_back(name + ".running_var", l.stats.var);
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    push("enc" + std::to_string(i) + ".conv1", encoder[i][0]);
    push("enc" + std::to_string(i) + ".conv2", encoder[i][1]);
  }
  push("bottleneck.conv1", bottleneck[0]);
  push("bottleneck.conv2", bottleneck[1]);
  for (std::size_t i = decoder.size(); i-- > 0;) {
    push("dec" + std::to_string(i) + ".conv1", decoder[i][0]);
    push("dec" + std::to_string(i) + ".conv2", decoder[i][1]);
  }
  for (std::size_t b = 0; b < branches.size(); ++b) {
    push("branch" + std::to_string(b) + ".conv", branches[b].conv);
  }
  return out;
}

void Model::zero_grad() {
  for (auto& t : parameters()) t.clear_grad();
}

ForwardOutput forward(Model& m, const Tensor& images, ForwardMode mode, Tape* tape,
                      bool with_branches) {
  if (images.ndim() != 4) {
    throw ShapeError("forward: expected [N,C,H,W], got " + shape_str(images.shape()));
  }
  if (images.dim(1) != std::size_t(m.config.input_channels) ||
      images.dim(2) != std::size_t(m.config.input_size.first) ||
      images.dim(3) != std::size_t(m.config.input_size.second)) {
    throw ShapeError("forward: batch " + shape_str(images.shape()) +
                     " does not match configured input " +
                     std::to_string(m.config.input_channels) + "x" +
                     std::to_string(m.config.input_size.first) + "x" +
                     std::to_string(m.config.input_size.second));
  }
  const bool train = mode == ForwardMode::kTrain;
  Tape* t = train ? tape : nullptr;
  const BatchNormMode bn = train ? BatchNormMode::kTrain : BatchNormMode::kInfer;

  Tensor h = images;
  std::vector<Tensor> skips;
  for (auto& level : m.encoder) {
    h = run_conv_block(level[0], h, bn, t);
    h = run_conv_block(level[1], h, bn, t);
    skips.push_back(h);
    h = ops::max_pool2d(h, {2, 2}, {2, 2}, t);
  }
  h = run_conv_block(m.bottleneck[0], h, bn, t);
  h = run_conv_block(m.bottleneck[1], h, bn, t);
  for (std::size_t level = m.decoder.size(); level-- > 0;) {
    const Tensor& sk = skips[level];
    h = ops::upsample_nearest2d(h, {sk.dim(2), sk.dim(3)}, t);
    h = ops::concat(h, sk, 1, t);
    h = run_conv_block(m.decoder[level][0], h, bn, t);
    h = run_conv_block(m.decoder[level][1], h, bn, t);
  }
  const Tensor tap = h;  // second-to-last layer; the branches read from here

  ForwardOutput out;
  const ConvSpec final_spec{m.config.base_width, m.config.num_classes, 1, 1, 1, 1,
                            m.config.padding_mode};
  out.seg_logits = ops::conv2d(tap, m.final_w, m.final_b, final_spec, t);

  if (with_branches) {
    const std::size_t n = images.dim(0);
    for (auto& br : m.branches) {
      Tensor p = ops::mean_pool2d(tap, m.config.branch.pool_kernel,
                                  m.config.branch.pool_stride, t);
      p = run_conv_block(br.conv, p, bn, t);
      Tensor cur = ops::reshape(p, {n, p.numel() / n}, t);
      std::vector<Tensor> fc_outs;
      for (std::size_t j = 0; j < br.fc.size(); ++j) {
        Tensor in = cur;
        if (j == std::size_t(m.config.branch.skip_to)) {
          in = ops::concat(fc_outs[std::size_t(m.config.branch.skip_from - 1)],
                           fc_outs[std::size_t(m.config.branch.skip_to - 1)], 1, t);
        }
        cur = ops::fully_connected(in, br.fc[j].w, br.fc[j].b, t);
        if (br.fc[j].relu) cur = ops::relu(cur, t);
        fc_outs.push_back(cur);
      }
      out.class_logits.push_back(cur);
    }
  }
  return out;
}

LabelMap predict_mask(Model& m, const Tensor& image) {
  Tensor batch = image;
  bool was_3d = false;
  if (image.ndim() == 3) {
    batch = ops::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
    was_3d = true;
  } else if (image.ndim() != 4) {
    throw ShapeError("predict_mask: expected [C,H,W] or [N,C,H,W]");
  }
  ForwardOutput out = forward(m, batch, ForwardMode::kInfer, nullptr, false);
  const Tensor& logits = out.seg_logits;
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  const std::size_t hh = logits.dim(2), ww = logits.dim(3);
  LabelMap mask = was_3d ? LabelMap::zeros({hh, ww}) : LabelMap::zeros({n, hh, ww});
  const Real* z = logits.values().data();
  const std::size_t plane = hh * ww;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < plane; ++p) {
      std::size_t best = 0;
      Real best_v = z[(i * k) * plane + p];
      for (std::size_t c = 1; c < k; ++c) {
        const Real v = z[(i * k + c) * plane + p];
        if (v > best_v) {  // strict: ties resolve to the lower class
          best_v = v;
          best = c;
        }
      }
      mask.labels[i * plane + p] = std::uint8_t(best);
    }
  }
  return mask;
}

std::size_t parameter_count(const Model& m) {
  std::size_t total = 0;
  for (const auto& t : m.parameters()) total += t.numel();
  return total;
}

namespace {

std::string hw_str(std::size_t c, std::pair<std::size_t, std::size_t> hw) {
  return std::to_string(c) + "x" + std::to_string(hw.first) + "x" +
         std::to_string(hw.second);
}

}  // namespace

std::string describe(const Model& m) {
  const ModelConfig& c = m.config;
  const ShapeWalk wk = walk_shapes(c);
  std::ostringstream os;
  auto row = [&os](const std::string& name, const std::string& shape, std::size_t params) {
    os << name;
    for (std::size_t i = name.size(); i < 22; ++i) os << ' ';
    os << shape;
    for (std::size_t i = shape.size(); i < 16; ++i) os << ' ';
    os << params << "\n";
  };
  os << "layer                 output          params\n";
  row("input", hw_str(std::size_t(c.input_channels),
                      {std::size_t(c.input_size.first), std::size_t(c.input_size.second)}),
      0);

  auto block_params = [](const ConvBnRelu& l) {
    return l.w.numel() + l.gamma.numel() + l.beta.numel();
  };

  std::pair<std::size_t, std::size_t> cur{std::size_t(c.input_size.first),
                                          std::size_t(c.input_size.second)};
  for (int level = 0; level < c.depth; ++level) {
    const std::size_t w = std::size_t(c.level_width(level));
    cur = conv_hw(c, cur, 3);
    row("enc" + std::to_string(level) + ".conv1", hw_str(w, cur),
        block_params(m.encoder[std::size_t(level)][0]));
    cur = conv_hw(c, cur, 3);
    row("enc" + std::to_string(level) + ".conv2", hw_str(w, cur),
        block_params(m.encoder[std::size_t(level)][1]));
    cur = ops::pool_output_hw(cur.first, cur.second, {2, 2}, {2, 2});
    row("enc" + std::to_string(level) + ".pool", hw_str(w, cur), 0);
  }
  const std::size_t bw = std::size_t(c.level_width(c.depth));
  cur = conv_hw(c, cur, 3);
  row("bottleneck.conv1", hw_str(bw, cur), block_params(m.bottleneck[0]));
  cur = conv_hw(c, cur, 3);
  row("bottleneck.conv2", hw_str(bw, cur), block_params(m.bottleneck[1]));
  for (int level = c.depth - 1; level >= 0; --level) {
    const std::size_t w = std::size_t(c.level_width(level));
    const std::size_t up_ch = std::size_t(
        level + 1 == c.depth ? c.level_width(c.depth) : c.level_width(level + 1));
    cur = wk.skips[std::size_t(level)];
    row("dec" + std::to_string(level) + ".up", hw_str(up_ch, cur), 0);
    row("dec" + std::to_string(level) + ".concat", hw_str(up_ch + w, cur), 0);
    cur = conv_hw(c, cur, 3);
    row("dec" + std::to_string(level) + ".conv1", hw_str(w, cur),
        block_params(m.decoder[std::size_t(level)][0]));
    cur = conv_hw(c, cur, 3);
    row("dec" + std::to_string(level) + ".conv2", hw_str(w, cur),
        block_params(m.decoder[std::size_t(level)][1]));
  }
  row("final.conv", hw_str(std::size_t(c.num_classes), cur),
      m.final_w.numel() + m.final_b.numel());

  for (std::size_t b = 0; b < m.branches.size(); ++b) {
    const std::string bn = "branch" + std::to_string(b);
    row(bn + ".meanpool",
        hw_str(std::size_t(c.base_width), wk.pooled), 0);
    row(bn + ".conv", hw_str(std::size_t(c.branch.branch_conv_out), wk.pooled),
        block_params(m.branches[b].conv));
    for (std::size_t j = 0; j < m.branches[b].fc.size(); ++j) {
      const auto& fc = m.branches[b].fc[j];
      row(bn + ".fc" + std::to_string(j + 1),
          "[N," + std::to_string(fc.w.dim(1)) + "]", fc.w.numel() + fc.b.numel());
    }
  }
  os << "total parameters: " << parameter_count(m) << "\n";
  return os.str();
}

}  // namespace mixedseg
