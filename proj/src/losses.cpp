#include "mixedseg/losses.hpp"

#include <cmath>
#include <string>

namespace mixedseg {

void LossConfig::validate() const {
  if (a < 0.0 || a > 1.0) throw ConfigError("loss weight a must lie in [0,1]");
  if (target_weights.size() < 2) {
    throw ConfigError("target_weights needs at least two classes");
  }
  double sum = 0.0;
  for (double t : target_weights) {
    if (t < 0.0) throw ConfigError("target weights must be non-negative");
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("target weights must sum to 1, got " + std::to_string(sum));
  }
}

LossConfig LossConfig::binary_defaults() {
  LossConfig c;
  c.a = 0.7;
  c.target_weights = {0.7, 0.3};
  return c;
}

LossConfig LossConfig::multiclass_defaults() {
  LossConfig c;
  c.a = 0.3;
  c.target_weights = {0.7, 0.1, 0.1, 0.1};
  return c;
}

PixelWeights compute_pixel_weights(const LabelMap& masks, const LossConfig& config) {
  config.validate();
  if (masks.dims.size() != 3 || masks.numel() == 0) {
    throw DataError("compute_pixel_weights: expected non-empty [n,H,W] masks");
  }
  const std::size_t n = masks.dims[0], h = masks.dims[1], w = masks.dims[2];
  const std::size_t k = config.num_classes();

  PixelWeights pw;
  pw.num_images = n;
  pw.height = h;
  pw.width = w;
  pw.class_pixel_counts.assign(k, 0);
  for (std::uint8_t label : masks.labels) {
    if (label >= k) {
      throw DataError("mask label " + std::to_string(int(label)) +
                      " out of range for " + std::to_string(k) + " classes");
    }
    ++pw.class_pixel_counts[label];
  }

  // Renormalize the targets over the classes present in this batch.
  double present_total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (pw.class_pixel_counts[c] > 0) present_total += config.target_weights[c];
  }
  if (present_total <= 0.0) {
    throw DataError("no class with positive target weight present in the batch");
  }
  pw.class_weight_sums.assign(k, 0.0);
  std::vector<Real> per_pixel(k, Real(0));
  for (std::size_t c = 0; c < k; ++c) {
    if (pw.class_pixel_counts[c] == 0) continue;
    pw.class_weight_sums[c] = config.target_weights[c] / present_total;
    per_pixel[c] = Real(pw.class_weight_sums[c] / double(pw.class_pixel_counts[c]));
  }
  pw.weights.resize(masks.numel());
  for (std::size_t i = 0; i < masks.numel(); ++i) {
    pw.weights[i] = per_pixel[masks.labels[i]];
  }
  pw.loss_scale = config.strict_prefactor ? Real(1) / Real(h * w) : Real(1);
  return pw;
}

Tensor segmentation_loss(const Tensor& seg_logits, const LabelMap& masks,
                         const PixelWeights& weights, Tape* tape) {
  if (seg_logits.ndim() != 4) {
    throw ShapeError("segmentation_loss: seg_logits must be [N,K,H,W]");
  }
  const std::size_t n_sup = weights.num_images;
  const std::size_t k = seg_logits.dim(1);
  const std::size_t h = seg_logits.dim(2), w = seg_logits.dim(3);
  if (seg_logits.dim(0) < n_sup || h != weights.height || w != weights.width ||
      masks.dims != Shape{n_sup, h, w}) {
    throw ShapeError("segmentation_loss: logits " + shape_str(seg_logits.shape()) +
                     " vs masks " + shape_str(masks.dims) + " vs weights for " +
                     std::to_string(n_sup) + " images");
  }
  const std::size_t plane = h * w;
  const Real* z = seg_logits.values().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n_sup; ++i) {
    const Real* zi = z + i * k * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      Real mx = zi[p];
      for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, zi[c * plane + p]);
      Real denom = 0;
      for (std::size_t c = 0; c < k; ++c) denom += std::exp(zi[c * plane + p] - mx);
      const Real lse = mx + std::log(denom);
      const std::uint8_t target = masks.labels[i * plane + p];
      acc += double(weights.weights[i * plane + p]) * double(lse - zi[target * plane + p]);
    }
  }
  Tensor out = Tensor::scalar(Real(acc) * weights.loss_scale);

  if (tape && seg_logits.requires_grad()) {
    out.set_requires_grad(true);
    auto zd = seg_logits.ptr();
    auto yd = out.ptr();
    // the weight table and mask are the saved forward context
    std::vector<Real> wsaved = weights.weights;
    std::vector<std::uint8_t> msaved = masks.labels;
    const Real scale = weights.loss_scale;
    tape->record("segmentation_loss", [zd, yd, wsaved = std::move(wsaved),
                                       msaved = std::move(msaved), n_sup, k, plane,
                                       scale]() {
      if (!yd->has_grad()) return;
      zd->ensure_grad();
      const Real g = yd->grad[0] * scale;
      const Real* z = zd->values.data();
      for (std::size_t i = 0; i < n_sup; ++i) {
        const Real* zi = z + i * k * plane;
        Real* dzi = zd->grad.data() + i * k * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          Real mx = zi[p];
          for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, zi[c * plane + p]);
          Real denom = 0;
          for (std::size_t c = 0; c < k; ++c) denom += std::exp(zi[c * plane + p] - mx);
          const Real gw = g * wsaved[i * plane + p];
          const std::uint8_t target = msaved[i * plane + p];
          for (std::size_t c = 0; c < k; ++c) {
            const Real prob = std::exp(zi[c * plane + p] - mx) / denom;
            dzi[c * plane + p] += gw * (prob - (c == target ? Real(1) : Real(0)));
          }
        }
      }
    });
  }
  return out;
}

Tensor classification_loss(const std::vector<Tensor>& class_logits,
                           const std::vector<std::vector<int>>& labels, Tape* tape) {
  if (class_logits.empty() || class_logits.size() != labels.size()) {
    throw ShapeError("classification_loss: need one label vector per branch");
  }
  const std::size_t branches = class_logits.size();
  const std::size_t n = class_logits[0].dim(0);
  double acc = 0.0;
  for (std::size_t b = 0; b < branches; ++b) {
    const Tensor& logits = class_logits[b];
    if (logits.ndim() != 2 || logits.dim(1) != 2 || logits.dim(0) != n) {
      throw ShapeError("classification_loss: branch logits must be [N,2]");
    }
    if (labels[b].size() != n) {
      throw ShapeError("classification_loss: labels size mismatch for branch " +
                       std::to_string(b));
    }
    const Real* z = logits.values().data();
    for (std::size_t i = 0; i < n; ++i) {
      const int l = labels[b][i];
      if (l != 0 && l != 1) {
        throw DataError("classification label must be 0 or 1, got " + std::to_string(l));
      }
      const Real z0 = z[i * 2], z1 = z[i * 2 + 1];
      const Real mx = std::max(z0, z1);
      const Real lse = mx + std::log(std::exp(z0 - mx) + std::exp(z1 - mx));
      acc += double(lse - z[i * 2 + std::size_t(l)]);
    }
  }
  acc /= double(branches) * double(n);
  Tensor out = Tensor::scalar(Real(acc));

  bool any_grad = false;
  for (const Tensor& t : class_logits) any_grad = any_grad || t.requires_grad();
  if (tape && any_grad) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData>> zds;
    for (const Tensor& t : class_logits) zds.push_back(t.ptr());
    auto yd = out.ptr();
    auto labels_saved = labels;
    tape->record("classification_loss", [zds, yd, labels_saved = std::move(labels_saved),
                                         branches, n]() {
      if (!yd->has_grad()) return;
      const Real g = yd->grad[0] / (Real(branches) * Real(n));
      for (std::size_t b = 0; b < branches; ++b) {
        if (!zds[b]->requires_grad) continue;
        zds[b]->ensure_grad();
        const Real* z = zds[b]->values.data();
        Real* dz = zds[b]->grad.data();
        for (std::size_t i = 0; i < n; ++i) {
          const int l = labels_saved[b][i];
          const Real z0 = z[i * 2], z1 = z[i * 2 + 1];
          const Real mx = std::max(z0, z1);
          const Real e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
          const Real p0 = e0 / (e0 + e1);
          dz[i * 2] += g * (p0 - (l == 0 ? Real(1) : Real(0)));
          dz[i * 2 + 1] += g * ((Real(1) - p0) - (l == 1 ? Real(1) : Real(0)));
        }
      }
    });
  }
  return out;
}

Tensor total_loss(const Tensor& loss_s, const Tensor& loss_c, double a, Tape* tape) {
  if (a < 0.0 || a > 1.0) throw ConfigError("total_loss: a must lie in [0,1]");
  // Identity cases are returned as-is so the equalities are bitwise.
  if (a == 1.0) return loss_s;
  if (a == 0.0) return loss_c;
  if (loss_s.numel() != 1 || loss_c.numel() != 1) {
    throw ShapeError("total_loss: component losses must be scalar");
  }
  Tensor out = Tensor::scalar(Real(a) * loss_s.item() + Real(1.0 - a) * loss_c.item());
  if (tape && (loss_s.requires_grad() || loss_c.requires_grad())) {
    out.set_requires_grad(true);
    auto sd = loss_s.ptr(), cd = loss_c.ptr(), yd = out.ptr();
    tape->record("total_loss", [sd, cd, yd, a]() {
      if (!yd->has_grad()) return;
      const Real g = yd->grad[0];
      if (sd->requires_grad) {
        sd->ensure_grad();
        sd->grad[0] += Real(a) * g;
      }
      if (cd->requires_grad) {
        cd->ensure_grad();
        cd->grad[0] += Real(1.0 - a) * g;
      }
    });
  }
  return out;
}

}  // namespace mixedseg
