#include "mixedseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

namespace mixedseg {

RunningStats RunningStats::create(std::size_t channels) {
  // Variance starts at 1 so an untrained model can still run inference.
  return RunningStats{Tensor::zeros({channels}), Tensor::full({channels}, Real(1))};
}

namespace ops {

namespace {

using Data = std::shared_ptr<TensorData>;

struct SpatialMap {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  long pad_top = 0;
  long pad_left = 0;
};

SpatialMap plan_spatial(std::size_t in_h, std::size_t in_w, int kh, int kw,
                        int sh, int sw, Padding padding, const char* what) {
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1) {
    throw ShapeError(std::string(what) + ": kernel and stride must be >= 1");
  }
  SpatialMap m;
  if (padding == Padding::kSame) {
    m.out_h = (in_h + sh - 1) / sh;
    m.out_w = (in_w + sw - 1) / sw;
    const long pad_h = std::max<long>(0, long(m.out_h - 1) * sh + kh - long(in_h));
    const long pad_w = std::max<long>(0, long(m.out_w - 1) * sw + kw - long(in_w));
    m.pad_top = pad_h / 2;
    m.pad_left = pad_w / 2;
  } else {
    if (std::size_t(kh) > in_h || std::size_t(kw) > in_w) {
      throw ShapeError(std::string(what) + ": kernel " + std::to_string(kh) + "x" +
                       std::to_string(kw) + " larger than input " +
                       std::to_string(in_h) + "x" + std::to_string(in_w));
    }
    m.out_h = (in_h - kh) / sh + 1;
    m.out_w = (in_w - kw) / sw + 1;
  }
  return m;
}

struct Nchw {
  std::size_t n, c, h, w;
  bool was_3d;
};

Nchw as_nchw(const Tensor& t, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(what) + ": undefined input");
  if (t.ndim() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), true};
  if (t.ndim() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), false};
  throw ShapeError(std::string(what) + ": expected [C,H,W] or [N,C,H,W], got " +
                   shape_str(t.shape()));
}

Shape spatial_shape(const Nchw& in, std::size_t c, std::size_t h, std::size_t w) {
  return in.was_3d ? Shape{c, h, w} : Shape{in.n, c, h, w};
}

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

std::pair<std::size_t, std::size_t> conv_output_hw(const ConvSpec& spec,
                                                   std::size_t in_h,
                                                   std::size_t in_w) {
  const SpatialMap m = plan_spatial(in_h, in_w, spec.kernel_h, spec.kernel_w,
                                    spec.stride_h, spec.stride_w, spec.padding,
                                    "conv2d");
  return {m.out_h, m.out_w};
}

std::pair<std::size_t, std::size_t> pool_output_hw(std::size_t in_h,
                                                   std::size_t in_w,
                                                   std::pair<int, int> kernel,
                                                   std::pair<int, int> stride) {
  const SpatialMap m = plan_spatial(in_h, in_w, kernel.first, kernel.second,
                                    stride.first, stride.second,
                                    Padding::kValid, "pool2d");
  return {m.out_h, m.out_w};
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec, Tape* tape) {
  const Nchw in = as_nchw(input, "conv2d");
  if (weights.ndim() != 4) {
    throw ShapeError("conv2d: weights must be [out,in,kh,kw], got " +
                     shape_str(weights.shape()));
  }
  const std::size_t co = weights.dim(0), ci = weights.dim(1);
  const std::size_t kh = weights.dim(2), kw = weights.dim(3);
  if (ci != in.c || co != std::size_t(spec.out_channels) ||
      ci != std::size_t(spec.in_channels) || kh != std::size_t(spec.kernel_h) ||
      kw != std::size_t(spec.kernel_w)) {
    throw ShapeError("conv2d: weights " + shape_str(weights.shape()) +
                     " inconsistent with input " + shape_str(input.shape()) +
                     " and spec (in=" + std::to_string(spec.in_channels) +
                     ", out=" + std::to_string(spec.out_channels) + ", k=" +
                     std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w) + ")");
  }
  if (bias.ndim() != 1 || bias.dim(0) != co) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(co) + "], got " +
                     shape_str(bias.shape()));
  }
  const SpatialMap m = plan_spatial(in.h, in.w, spec.kernel_h, spec.kernel_w,
                                    spec.stride_h, spec.stride_w, spec.padding,
                                    "conv2d");
  Tensor out = Tensor::zeros(spatial_shape(in, co, m.out_h, m.out_w));

  const Real* x = input.values().data();
  const Real* w = weights.values().data();
  const Real* b = bias.values().data();
  Real* y = out.values().data();
  const std::size_t in_plane = in.h * in.w;
  const std::size_t out_plane = m.out_h * m.out_w;
  const std::size_t sh = std::size_t(spec.stride_h), sw = std::size_t(spec.stride_w);

  for (std::size_t n = 0; n < in.n; ++n) {
    const Real* xn = x + n * in.c * in_plane;
    Real* yn = y + n * co * out_plane;
    for (std::size_t oc = 0; oc < co; ++oc) {
      Real* yp = yn + oc * out_plane;
      std::fill(yp, yp + out_plane, b[oc]);
      for (std::size_t icn = 0; icn < ci; ++icn) {
        const Real* xp = xn + icn * in_plane;
        const Real* wp = w + ((oc * ci + icn) * kh) * kw;
        for (std::size_t r = 0; r < kh; ++r) {
          for (std::size_t s = 0; s < kw; ++s) {
            const Real wv = wp[r * kw + s];
            for (std::size_t oh = 0; oh < m.out_h; ++oh) {
              const long ih = long(oh * sh) + long(r) - m.pad_top;
              if (ih < 0 || ih >= long(in.h)) continue;
              Real* yrow = yp + oh * m.out_w;
              const Real* xrow = xp + std::size_t(ih) * in.w;
              if (sw == 1) {
                const long base = long(s) - m.pad_left;
                const std::size_t ow0 = base < 0 ? std::size_t(-base) : 0;
                const long last = long(in.w) - 1 - base;
                const std::size_t ow1 =
                    last < 0 ? 0 : std::min(m.out_w, std::size_t(last) + 1);
                for (std::size_t ow = ow0; ow < ow1; ++ow) {
                  yrow[ow] += wv * xrow[std::size_t(long(ow) + base)];
                }
              } else {
                for (std::size_t ow = 0; ow < m.out_w; ++ow) {
                  const long iw = long(ow * sw) + long(s) - m.pad_left;
                  if (iw < 0 || iw >= long(in.w)) continue;
                  yrow[ow] += wv * xrow[std::size_t(iw)];
                }
              }
            }
          }
        }
      }
    }
  }

  if (want_grad(tape, {&input, &weights, &bias})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), wd = weights.ptr(), bd = bias.ptr(), yd = out.ptr();
    const Nchw inc = in;
    const SpatialMap mc = m;
    tape->record("conv2d", [xd, wd, bd, yd, inc, mc, co, ci, kh, kw, sh, sw]() {
      if (!yd->has_grad()) return;
      const Real* gy = yd->grad.data();
      const std::size_t in_plane = inc.h * inc.w;
      const std::size_t out_plane = mc.out_h * mc.out_w;
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t n = 0; n < inc.n; ++n) {
          for (std::size_t oc = 0; oc < co; ++oc) {
            const Real* gp = gy + (n * co + oc) * out_plane;
            Real acc = 0;
            for (std::size_t i = 0; i < out_plane; ++i) acc += gp[i];
            bd->grad[oc] += acc;
          }
        }
      }
      const bool need_dx = xd->requires_grad;
      const bool need_dw = wd->requires_grad;
      if (need_dx) xd->ensure_grad();
      if (need_dw) wd->ensure_grad();
      if (!need_dx && !need_dw) return;
      const Real* x = xd->values.data();
      const Real* w = wd->values.data();
      for (std::size_t n = 0; n < inc.n; ++n) {
        const Real* xn = x + n * ci * in_plane;
        Real* dxn = need_dx ? xd->grad.data() + n * ci * in_plane : nullptr;
        for (std::size_t oc = 0; oc < co; ++oc) {
          const Real* gp = gy + (n * co + oc) * out_plane;
          for (std::size_t icn = 0; icn < ci; ++icn) {
            for (std::size_t r = 0; r < kh; ++r) {
              for (std::size_t s = 0; s < kw; ++s) {
                const std::size_t widx = ((oc * ci + icn) * kh + r) * kw + s;
                const Real wv = w[widx];
                Real dw_acc = 0;
                for (std::size_t oh = 0; oh < mc.out_h; ++oh) {
                  const long ih = long(oh * sh) + long(r) - mc.pad_top;
                  if (ih < 0 || ih >= long(inc.h)) continue;
                  const Real* grow = gp + oh * mc.out_w;
                  const Real* xrow = xn + icn * in_plane + std::size_t(ih) * inc.w;
                  Real* dxrow =
                      need_dx ? dxn + icn * in_plane + std::size_t(ih) * inc.w : nullptr;
                  for (std::size_t ow = 0; ow < mc.out_w; ++ow) {
                    const long iw = long(ow * sw) + long(s) - mc.pad_left;
                    if (iw < 0 || iw >= long(inc.w)) continue;
                    const Real g = grow[ow];
                    if (need_dw) dw_acc += g * xrow[std::size_t(iw)];
                    if (need_dx) dxrow[std::size_t(iw)] += g * wv;
                  }
                }
                if (need_dw) wd->grad[widx] += dw_acc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor mean_pool2d(const Tensor& input, std::pair<int, int> kernel,
                   std::pair<int, int> stride, Tape* tape) {
  const Nchw in = as_nchw(input, "mean_pool2d");
  const SpatialMap m = plan_spatial(in.h, in.w, kernel.first, kernel.second,
                                    stride.first, stride.second,
                                    Padding::kValid, "mean_pool2d");
  Tensor out = Tensor::zeros(spatial_shape(in, in.c, m.out_h, m.out_w));
  const std::size_t planes = in.n * in.c;
  const std::size_t in_plane = in.h * in.w, out_plane = m.out_h * m.out_w;
  const std::size_t kh = kernel.first, kw = kernel.second;
  const std::size_t sh = stride.first, sw = stride.second;
  const Real inv = Real(1) / Real(kh * kw);
  const Real* x = input.values().data();
  Real* y = out.values().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* xp = x + p * in_plane;
    Real* yp = y + p * out_plane;
    for (std::size_t oh = 0; oh < m.out_h; ++oh) {
      for (std::size_t ow = 0; ow < m.out_w; ++ow) {
        Real acc = 0;
        for (std::size_t r = 0; r < kh; ++r) {
          const Real* xrow = xp + (oh * sh + r) * in.w + ow * sw;
          for (std::size_t s = 0; s < kw; ++s) acc += xrow[s];
        }
        yp[oh * m.out_w + ow] = acc * inv;
      }
    }
  }
  if (want_grad(tape, {&input})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), yd = out.ptr();
    const Nchw inc = in;
    const SpatialMap mc = m;
    tape->record("mean_pool2d", [xd, yd, inc, mc, kh, kw, sh, sw, inv]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      const Real* gy = yd->grad.data();
      const std::size_t planes = inc.n * inc.c;
      const std::size_t in_plane = inc.h * inc.w;
      const std::size_t out_plane = mc.out_h * mc.out_w;
      for (std::size_t p = 0; p < planes; ++p) {
        Real* dxp = xd->grad.data() + p * in_plane;
        const Real* gp = gy + p * out_plane;
        for (std::size_t oh = 0; oh < mc.out_h; ++oh) {
          for (std::size_t ow = 0; ow < mc.out_w; ++ow) {
            const Real g = gp[oh * mc.out_w + ow] * inv;
            for (std::size_t r = 0; r < kh; ++r) {
              Real* dxrow = dxp + (oh * sh + r) * inc.w + ow * sw;
              for (std::size_t s = 0; s < kw; ++s) dxrow[s] += g;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor max_pool2d(const Tensor& input, std::pair<int, int> kernel,
                  std::pair<int, int> stride, Tape* tape) {
  const Nchw in = as_nchw(input, "max_pool2d");
  const SpatialMap m = plan_spatial(in.h, in.w, kernel.first, kernel.second,
                                    stride.first, stride.second,
                                    Padding::kValid, "max_pool2d");
  Tensor out = Tensor::zeros(spatial_shape(in, in.c, m.out_h, m.out_w));
  const std::size_t planes = in.n * in.c;
  const std::size_t in_plane = in.h * in.w, out_plane = m.out_h * m.out_w;
  const std::size_t kh = kernel.first, kw = kernel.second;
  const std::size_t sh = stride.first, sw = stride.second;
  const Real* x = input.values().data();
  Real* y = out.values().data();
  // Flat input index of each window's (first) maximum, for the backward pass.
  std::vector<std::size_t> argmax(planes * out_plane);
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* xp = x + p * in_plane;
    Real* yp = y + p * out_plane;
    for (std::size_t oh = 0; oh < m.out_h; ++oh) {
      for (std::size_t ow = 0; ow < m.out_w; ++ow) {
        Real best = -std::numeric_limits<Real>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t r = 0; r < kh; ++r) {
          const std::size_t row = (oh * sh + r) * in.w + ow * sw;
          for (std::size_t s = 0; s < kw; ++s) {
            if (xp[row + s] > best) {  // strict: ties keep the first element
              best = xp[row + s];
              best_idx = row + s;
            }
          }
        }
        yp[oh * m.out_w + ow] = best;
        argmax[p * out_plane + oh * m.out_w + ow] = best_idx;
      }
    }
  }
  if (want_grad(tape, {&input})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), yd = out.ptr();
    const std::size_t planes_c = planes, in_plane_c = in_plane, out_plane_c = out_plane;
    tape->record("max_pool2d", [xd, yd, argmax = std::move(argmax), planes_c,
                                in_plane_c, out_plane_c]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      const Real* gy = yd->grad.data();
      for (std::size_t p = 0; p < planes_c; ++p) {
        for (std::size_t i = 0; i < out_plane_c; ++i) {
          xd->grad[p * in_plane_c + argmax[p * out_plane_c + i]] += gy[p * out_plane_c + i];
        }
      }
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormMode mode, RunningStats* stats, Tape* tape,
                  Real epsilon, Real stat_momentum) {
  if (input.ndim() != 4) {
    throw ShapeError("batch_norm: expected [N,C,H,W], got " + shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c) {
    throw ShapeError("batch_norm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  const std::size_t plane = h * w;
  const std::size_t per_channel = n * plane;
  Tensor out = Tensor::zeros(input.shape());
  const Real* x = input.values().data();
  const Real* g = gamma.values().data();
  const Real* b = beta.values().data();
  Real* y = out.values().data();

  if (mode == BatchNormMode::kInfer) {
    if (!stats) throw ConfigError("batch_norm: infer mode requires running stats");
    const Real* rm = stats->mean.values().data();
    const Real* rv = stats->var.values().data();
    std::vector<Real> scale_c(c), shift_c(c);
    for (std::size_t k = 0; k < c; ++k) {
      const Real inv = Real(1) / std::sqrt(rv[k] + epsilon);
      scale_c[k] = g[k] * inv;
      shift_c[k] = b[k] - rm[k] * scale_c[k];
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        const Real* xp = x + (i * c + k) * plane;
        Real* yp = y + (i * c + k) * plane;
        for (std::size_t j = 0; j < plane; ++j) yp[j] = scale_c[k] * xp[j] + shift_c[k];
      }
    }
    if (want_grad(tape, {&input, &gamma, &beta})) {
      out.set_requires_grad(true);
      Data xd = input.ptr(), gd = gamma.ptr(), bd = beta.ptr(), yd = out.ptr();
      Tensor rmean = stats->mean, rvar = stats->var;
      tape->record("batch_norm_infer", [xd, gd, bd, yd, rmean, rvar, n, c, plane, epsilon]() {
        if (!yd->has_grad()) return;
        if (xd->requires_grad) xd->ensure_grad();
        const Real* gy = yd->grad.data();
        const Real* rm = rmean.values().data();
        const Real* rv = rvar.values().data();
        for (std::size_t k = 0; k < c; ++k) {
          const Real inv = Real(1) / std::sqrt(rv[k] + epsilon);
          const Real sc = gd->values[k] * inv;
          Real dg = 0, db = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const Real* gp = gy + (i * c + k) * plane;
            const Real* xp = xd->values.data() + (i * c + k) * plane;
            Real* dxp = xd->requires_grad ? xd->grad.data() + (i * c + k) * plane : nullptr;
            for (std::size_t j = 0; j < plane; ++j) {
              if (dxp) dxp[j] += gp[j] * sc;
              dg += gp[j] * (xp[j] - rm[k]) * inv;
              db += gp[j];
            }
          }
          if (gd->requires_grad) {
            gd->ensure_grad();
            gd->grad[k] += dg;
          }
          if (bd->requires_grad) {
            bd->ensure_grad();
            bd->grad[k] += db;
          }
        }
      });
    }
    return out;
  }

  // train mode
  if (per_channel < 2) {
    throw ShapeError("batch_norm: train mode needs N*H*W >= 2, got " +
                     std::to_string(per_channel));
  }
  std::vector<Real> mean_c(c, 0), var_c(c, 0), inv_std(c, 0);
  for (std::size_t k = 0; k < c; ++k) {
    Real acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Real* xp = x + (i * c + k) * plane;
      for (std::size_t j = 0; j < plane; ++j) acc += xp[j];
    }
    mean_c[k] = acc / Real(per_channel);
    Real vacc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Real* xp = x + (i * c + k) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const Real d = xp[j] - mean_c[k];
        vacc += d * d;
      }
    }
    var_c[k] = vacc / Real(per_channel);
    inv_std[k] = Real(1) / std::sqrt(var_c[k] + epsilon);
  }
  // Normalized activations are the saved forward context for backward.
  std::vector<Real> xhat(input.numel());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const Real* xp = x + (i * c + k) * plane;
      Real* xh = xhat.data() + (i * c + k) * plane;
      Real* yp = y + (i * c + k) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        xh[j] = (xp[j] - mean_c[k]) * inv_std[k];
        yp[j] = g[k] * xh[j] + b[k];
      }
    }
  }
  if (stats) {
    Real* rm = stats->mean.values().data();
    Real* rv = stats->var.values().data();
    for (std::size_t k = 0; k < c; ++k) {
      rm[k] = stat_momentum * rm[k] + (Real(1) - stat_momentum) * mean_c[k];
      rv[k] = stat_momentum * rv[k] + (Real(1) - stat_momentum) * var_c[k];
    }
  }
  if (want_grad(tape, {&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), gd = gamma.ptr(), bd = beta.ptr(), yd = out.ptr();
    tape->record("batch_norm", [xd, gd, bd, yd, xhat = std::move(xhat),
                                inv_std = std::move(inv_std), n, c, plane]() {
      if (!yd->has_grad()) return;
      const Real* gy = yd->grad.data();
      const std::size_t per_channel = n * plane;
      for (std::size_t k = 0; k < c; ++k) {
        Real sum_g = 0, sum_gx = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const Real* gp = gy + (i * c + k) * plane;
          const Real* xh = xhat.data() + (i * c + k) * plane;
          for (std::size_t j = 0; j < plane; ++j) {
            sum_g += gp[j];
            sum_gx += gp[j] * xh[j];
          }
        }
        if (gd->requires_grad) {
          gd->ensure_grad();
          gd->grad[k] += sum_gx;
        }
        if (bd->requires_grad) {
          bd->ensure_grad();
          bd->grad[k] += sum_g;
        }
        if (xd->requires_grad) {
          xd->ensure_grad();
          const Real gk = gd->values[k];
          const Real coef = gk * inv_std[k] / Real(per_channel);
          for (std::size_t i = 0; i < n; ++i) {
            const Real* gp = gy + (i * c + k) * plane;
            const Real* xh = xhat.data() + (i * c + k) * plane;
            Real* dxp = xd->grad.data() + (i * c + k) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
              dxp[j] += coef * (Real(per_channel) * gp[j] - sum_g - xh[j] * sum_gx);
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights,
                       const Tensor& bias, Tape* tape) {
  if (input.ndim() != 2 || weights.ndim() != 2 || bias.ndim() != 1) {
    throw ShapeError("fully_connected: expected x:[N,D], W:[D,K], b:[K]");
  }
  const std::size_t n = input.dim(0), d = input.dim(1);
  const std::size_t k = weights.dim(1);
  if (weights.dim(0) != d || bias.dim(0) != k) {
    throw ShapeError("fully_connected: x " + shape_str(input.shape()) + " vs W " +
                     shape_str(weights.shape()) + " vs b " + shape_str(bias.shape()));
  }
  Tensor out = Tensor::zeros({n, k});
  const Real* x = input.values().data();
  const Real* w = weights.values().data();
  const Real* b = bias.values().data();
  Real* y = out.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    Real* yrow = y + i * k;
    for (std::size_t j = 0; j < k; ++j) yrow[j] = b[j];
    const Real* xrow = x + i * d;
    for (std::size_t t = 0; t < d; ++t) {
      const Real xv = xrow[t];
      const Real* wrow = w + t * k;
      for (std::size_t j = 0; j < k; ++j) yrow[j] += xv * wrow[j];
    }
  }
  if (want_grad(tape, {&input, &weights, &bias})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), wd = weights.ptr(), bd = bias.ptr(), yd = out.ptr();
    tape->record("fully_connected", [xd, wd, bd, yd, n, d, k]() {
      if (!yd->has_grad()) return;
      const Real* gy = yd->grad.data();
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < k; ++j) bd->grad[j] += gy[i * k + j];
        }
      }
      if (wd->requires_grad) {
        wd->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const Real* xrow = xd->values.data() + i * d;
          const Real* grow = gy + i * k;
          for (std::size_t t = 0; t < d; ++t) {
            Real* dwrow = wd->grad.data() + t * k;
            const Real xv = xrow[t];
            for (std::size_t j = 0; j < k; ++j) dwrow[j] += xv * grow[j];
          }
        }
      }
      if (xd->requires_grad) {
        xd->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          Real* dxrow = xd->grad.data() + i * d;
          const Real* grow = gy + i * k;
          for (std::size_t t = 0; t < d; ++t) {
            const Real* wrow = wd->values.data() + t * k;
            Real acc = 0;
            for (std::size_t j = 0; j < k; ++j) acc += wrow[j] * grow[j];
            dxrow[t] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& input, Tape* tape) {
  Tensor out = Tensor::zeros(input.shape());
  const Real* x = input.values().data();
  Real* y = out.values().data();
  const std::size_t n = input.numel();
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
  if (want_grad(tape, {&input})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), yd = out.ptr();
    tape->record("relu", [xd, yd, n]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (xd->values[i] > Real(0)) xd->grad[i] += yd->grad[i];
      }
    });
  }
  return out;
}

namespace {

struct AxisView {
  std::size_t outer, len, inner;
};

AxisView axis_view(const Tensor& t, std::size_t axis, const char* what) {
  if (axis >= t.ndim()) {
    throw ShapeError(std::string(what) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(t.shape()));
  }
  AxisView v{1, t.dim(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= t.dim(i);
  for (std::size_t i = axis + 1; i < t.ndim(); ++i) v.inner *= t.dim(i);
  return v;
}

}  // namespace

Tensor softmax(const Tensor& input, std::size_t axis, Tape* tape) {
  const AxisView v = axis_view(input, axis, "softmax");
  Tensor out = Tensor::zeros(input.shape());
  const Real* x = input.values().data();
  Real* y = out.values().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      Real mx = x[base];
      for (std::size_t k = 1; k < v.len; ++k) mx = std::max(mx, x[base + k * v.inner]);
      Real denom = 0;
      for (std::size_t k = 0; k < v.len; ++k) {
        const Real e = std::exp(x[base + k * v.inner] - mx);
        y[base + k * v.inner] = e;
        denom += e;
      }
      const Real inv = Real(1) / denom;
      for (std::size_t k = 0; k < v.len; ++k) y[base + k * v.inner] *= inv;
    }
  }
  if (want_grad(tape, {&input})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), yd = out.ptr();
    tape->record("softmax", [xd, yd, v]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      const Real* s = yd->values.data();
      const Real* gy = yd->grad.data();
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t base = o * v.len * v.inner + i;
          Real dot = 0;
          for (std::size_t k = 0; k < v.len; ++k) {
            dot += gy[base + k * v.inner] * s[base + k * v.inner];
          }
          for (std::size_t k = 0; k < v.len; ++k) {
            const std::size_t idx = base + k * v.inner;
            xd->grad[idx] += s[idx] * (gy[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis, Tape* tape) {
  if (a.ndim() != b.ndim()) {
    throw ShapeError("concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  if (axis >= a.ndim()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
  }
  for (std::size_t i = 0; i < a.ndim(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw ShapeError("concat: shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " differ off the concat axis");
    }
  }
  Shape out_shape = a.shape();
  out_shape[axis] += b.dim(axis);
  Tensor out = Tensor::zeros(out_shape);
  const AxisView va = axis_view(a, axis, "concat");
  const std::size_t a_block = va.len * va.inner;
  const std::size_t b_block = b.dim(axis) * va.inner;
  const Real* ap = a.values().data();
  const Real* bp = b.values().data();
  Real* yp = out.values().data();
  for (std::size_t o = 0; o < va.outer; ++o) {
    std::memcpy(yp + o * (a_block + b_block), ap + o * a_block, a_block * sizeof(Real));
    std::memcpy(yp + o * (a_block + b_block) + a_block, bp + o * b_block,
                b_block * sizeof(Real));
  }
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Data ad = a.ptr(), bd = b.ptr(), yd = out.ptr();
    const std::size_t outer = va.outer;
    tape->record("concat", [ad, bd, yd, outer, a_block, b_block]() {
      if (!yd->has_grad()) return;
      const Real* gy = yd->grad.data();
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const Real* gp = gy + o * (a_block + b_block);
          Real* dst = ad->grad.data() + o * a_block;
          for (std::size_t i = 0; i < a_block; ++i) dst[i] += gp[i];
        }
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const Real* gp = gy + o * (a_block + b_block) + a_block;
          Real* dst = bd->grad.data() + o * b_block;
          for (std::size_t i = 0; i < b_block; ++i) dst[i] += gp[i];
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy_from_logits(const Tensor& logits, std::size_t target_index,
                                 Tape* tape) {
  if (logits.ndim() != 1) {
    throw ShapeError("cross_entropy_from_logits: expected 1-D logits, got " +
                     shape_str(logits.shape()));
  }
  const std::size_t k = logits.dim(0);
  if (target_index >= k) {
    throw ShapeError("cross_entropy_from_logits: target " + std::to_string(target_index) +
                     " out of range for " + std::to_string(k) + " classes");
  }
  const Real* z = logits.values().data();
  Real mx = z[0];
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, z[i]);
  Real denom = 0;
  for (std::size_t i = 0; i < k; ++i) denom += std::exp(z[i] - mx);
  const Real lse = mx + std::log(denom);
  Tensor out = Tensor::scalar(lse - z[target_index]);
  if (want_grad(tape, {&logits})) {
    out.set_requires_grad(true);
    Data zd = logits.ptr(), yd = out.ptr();
    tape->record("cross_entropy_from_logits", [zd, yd, k, target_index, mx, denom]() {
      if (!yd->has_grad()) return;
      zd->ensure_grad();
      const Real g = yd->grad[0];
      for (std::size_t i = 0; i < k; ++i) {
        const Real p = std::exp(zd->values[i] - mx) / denom;
        zd->grad[i] += g * (p - (i == target_index ? Real(1) : Real(0)));
      }
    });
  }
  return out;
}

Tensor upsample_nearest2d(const Tensor& input,
                          std::pair<std::size_t, std::size_t> out_hw, Tape* tape) {
  if (input.ndim() != 4) {
    throw ShapeError("upsample_nearest2d: expected [N,C,H,W], got " +
                     shape_str(input.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = out_hw.first, ow = out_hw.second;
  if (oh == 0 || ow == 0) throw ShapeError("upsample_nearest2d: zero output size");
  Tensor out = Tensor::zeros({n, c, oh, ow});
  std::vector<std::size_t> src_r(oh), src_c(ow);
  for (std::size_t i = 0; i < oh; ++i) src_r[i] = i * h / oh;
  for (std::size_t j = 0; j < ow; ++j) src_c[j] = j * w / ow;
  const Real* x = input.values().data();
  Real* y = out.values().data();
  const std::size_t planes = n * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const Real* xp = x + p * h * w;
    Real* yp = y + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const Real* xrow = xp + src_r[i] * w;
      Real* yrow = yp + i * ow;
      for (std::size_t j = 0; j < ow; ++j) yrow[j] = xrow[src_c[j]];
    }
  }
  if (want_grad(tape, {&input})) {
    out.set_requires_grad(true);
    Data xd = input.ptr(), yd = out.ptr();
    tape->record("upsample_nearest2d", [xd, yd, src_r = std::move(src_r),
                                        src_c = std::move(src_c), planes, h, w, oh, ow]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      const Real* gy = yd->grad.data();
      for (std::size_t p = 0; p < planes; ++p) {
        Real* dxp = xd->grad.data() + p * h * w;
        const Real* gp = gy + p * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
          Real* dxrow = dxp + src_r[i] * w;
          const Real* grow = gp + i * ow;
          for (std::size_t j = 0; j < ow; ++j) dxrow[src_c[j]] += grow[j];
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  if (!shape_equal(a.shape(), b.shape())) {
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Data ad = a.ptr(), bd = b.ptr(), yd = out.ptr();
    tape->record("add", [ad, bd, yd, n]() {
      if (!yd->has_grad()) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += yd->grad[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bd->grad[i] += yd->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (!shape_equal(a.shape(), b.shape())) {
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Data ad = a.ptr(), bd = b.ptr(), yd = out.ptr();
    tape->record("mul", [ad, bd, yd, n]() {
      if (!yd->has_grad()) return;
      if (ad->requires_grad) {
        ad->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ad->grad[i] += yd->grad[i] * bd->values[i];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bd->grad[i] += yd->grad[i] * ad->values[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, Real c, Tape* tape) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = c * x.values()[i];
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Data xd = x.ptr(), yd = out.ptr();
    tape->record("scale", [xd, yd, c, n]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) xd->grad[i] += c * yd->grad[i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape, Tape* tape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  Tensor out(std::move(new_shape),
             std::vector<Real>(x.values().begin(), x.values().end()));
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Data xd = x.ptr(), yd = out.ptr();
    const std::size_t n = x.numel();
    tape->record("reshape", [xd, yd, n]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) xd->grad[i] += yd->grad[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
  Real acc = 0;
  for (Real v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Data xd = x.ptr(), yd = out.ptr();
    const std::size_t n = x.numel();
    tape->record("sum", [xd, yd, n]() {
      if (!yd->has_grad()) return;
      xd->ensure_grad();
      const Real g = yd->grad[0];
      for (std::size_t i = 0; i < n; ++i) xd->grad[i] += g;
    });
  }
  return out;
}

}  // namespace ops
}  // namespace mixedseg
