#ifndef MIXEDSEG_OPS_HPP_
#define MIXEDSEG_OPS_HPP_

#include <utility>

#include "mixedseg/tape.hpp"
#include "mixedseg/tensor.hpp"

namespace mixedseg {

enum class Padding { kSame, kValid };

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride_h = 1;
  int stride_w = 1;
  Padding padding = Padding::kSame;
};

// Per-channel running mean/variance (exponential moving average of batch
// statistics); not differentiated.
struct RunningStats {
  Tensor mean;
  Tensor var;

  static RunningStats create(std::size_t channels);
};

enum class BatchNormMode { kTrain, kInfer };

namespace ops {

// Output spatial size for a conv/pool given the padding rule:
//   same:  ceil(in / stride)
//   valid: floor((in - kernel) / stride) + 1
std::pair<std::size_t, std::size_t> conv_output_hw(const ConvSpec& spec,
                                                   std::size_t in_h,
                                                   std::size_t in_w);
std::pair<std::size_t, std::size_t> pool_output_hw(std::size_t in_h,
                                                   std::size_t in_w,
                                                   std::pair<int, int> kernel,
                                                   std::pair<int, int> stride);

// All ops validate shapes, compute eagerly and, when `tape` is non-null and
// some input requires grad, record a backward node. Inputs may be [C,H,W] or
// [N,C,H,W] for conv2d; the pools, batch_norm and upsample take [N,C,H,W]
// ([C,H,W] accepted by conv2d/pools and returned in kind).

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec, Tape* tape = nullptr);

Tensor mean_pool2d(const Tensor& input, std::pair<int, int> kernel,
                   std::pair<int, int> stride, Tape* tape = nullptr);

// Window maximum; backward routes the gradient to the first (row-major)
// maximal element of each window.
Tensor max_pool2d(const Tensor& input, std::pair<int, int> kernel,
                  std::pair<int, int> stride, Tape* tape = nullptr);

// Train mode normalizes with batch statistics and, when `stats` is non-null,
// folds them into the running averages. Infer mode normalizes with the
// running statistics and records nothing.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormMode mode, RunningStats* stats,
                  Tape* tape = nullptr, Real epsilon = Real(1e-5),
                  Real stat_momentum = Real(0.9));

// y = x W + b with x:[N,D], W:[D,K], b:[K].
Tensor fully_connected(const Tensor& input, const Tensor& weights,
                       const Tensor& bias, Tape* tape = nullptr);

Tensor relu(const Tensor& input, Tape* tape = nullptr);

Tensor softmax(const Tensor& input, std::size_t axis, Tape* tape = nullptr);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis,
              Tape* tape = nullptr);

// Scalar -log softmax(logits)[target]; logits is 1-D. Uses the log-sum-exp
// form so finite logits never produce non-finite loss.
Tensor cross_entropy_from_logits(const Tensor& logits,
                                 std::size_t target_index,
                                 Tape* tape = nullptr);

// Nearest-neighbour resize of [N,C,H,W] to the given spatial size.
Tensor upsample_nearest2d(const Tensor& input,
                          std::pair<std::size_t, std::size_t> out_hw,
                          Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& x, Real c, Tape* tape = nullptr);
Tensor sum(const Tensor& x, Tape* tape = nullptr);

// Same element count, new shape; gradients flow through element-wise.
Tensor reshape(const Tensor& x, Shape new_shape, Tape* tape = nullptr);

}  // namespace ops
}  // namespace mixedseg

#endif  // MIXEDSEG_OPS_HPP_
