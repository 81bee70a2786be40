#ifndef MIXEDSEG_LOSSES_HPP_
#define MIXEDSEG_LOSSES_HPP_

#include <vector>

#include "mixedseg/labelmap.hpp"
#include "mixedseg/tape.hpp"
#include "mixedseg/tensor.hpp"

namespace mixedseg {

struct LossConfig {
  // Weight of the segmentation loss in the convex total loss.
  double a = 0.7;
  // Per-class total weight budgets t_0..t_{K-1}; must sum to 1.
  std::vector<double> target_weights{0.7, 0.3};
  // When set, additionally divides the segmentation loss by the per-image
  // pixel count, i.e. keeps the explicit 1/P prefactor on top of the
  // unit-sum weights instead of absorbing it into them.
  bool strict_prefactor = false;

  void validate() const;
  std::size_t num_classes() const { return target_weights.size(); }

  static LossConfig binary_defaults();      // a=0.7, t={0.7,0.3}
  static LossConfig multiclass_defaults();  // a=0.3, t={0.7,0.1,0.1,0.1}
};

// Per-pixel weights over the supervised (masked) images of a batch. For each
// class c present in the batch, every class-c pixel carries t~_c / N_c where
// N_c is the batch-wide pixel count of c and t~ renormalizes the target
// weights over the classes actually present. Weights sum to 1 overall.
struct PixelWeights {
  std::size_t num_images = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Real> weights;                   // [num_images * H * W]
  std::vector<std::size_t> class_pixel_counts; // N_c
  std::vector<double> class_weight_sums;       // t~_c for present classes, else 0
  Real loss_scale = Real(1);                   // 1, or 1/(H*W) in strict mode
};

// masks: [n,H,W] labels in [0,K). Throws DataError on an empty mask set or an
// out-of-range label.
PixelWeights compute_pixel_weights(const LabelMap& masks, const LossConfig& config);

// Weighted pixelwise cross-entropy over the first `weights.num_images` images
// of seg_logits [N,K,H,W] (softmax over the class axis, log-sum-exp form).
Tensor segmentation_loss(const Tensor& seg_logits, const LabelMap& masks,
                         const PixelWeights& weights, Tape* tape = nullptr);

// Mean cross-entropy over all images of the batch, averaged across branches.
// class_logits: one [N,2] tensor per branch; labels: per branch, N values in
// {0,1}.
Tensor classification_loss(const std::vector<Tensor>& class_logits,
                           const std::vector<std::vector<int>>& labels,
                           Tape* tape = nullptr);

// a * loss_s + (1-a) * loss_c; returns loss_s itself at a=1 and loss_c at a=0
// so the identities hold bitwise.
Tensor total_loss(const Tensor& loss_s, const Tensor& loss_c, double a,
                  Tape* tape = nullptr);

}  // namespace mixedseg

#endif  // MIXEDSEG_LOSSES_HPP_
