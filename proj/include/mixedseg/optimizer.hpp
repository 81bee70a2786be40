#ifndef MIXEDSEG_OPTIMIZER_HPP_
#define MIXEDSEG_OPTIMIZER_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "mixedseg/tensor.hpp"

namespace mixedseg {

struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int batches_per_iteration = 2;  // gradients averaged over this many batches
  double norm_epsilon = 1e-12;    // guards the division for near-zero gradients
  int lr_decay_every = 2000;      // iterations between x0.5 steps; 0 disables
  double lr_decay_factor = 0.5;
  // Default folds the normalized mean gradient into the velocity; the
  // alternative normalizes the velocity after the momentum update instead.
  bool normalize_after_momentum = false;

  void validate() const;
};

// Flat per-parameter gradient buffers in parameter order.
using GradientBuffer = std::vector<std::vector<Real>>;

// Momentum SGD on a gradient that is averaged over several batches per
// iteration and divided by its global L2 norm:
//   g~ = g / max(||g||_2, eps);  v <- mu v + g~;  theta <- theta - lr v
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerConfig config);

  // Runs eval_batch(b) for b in [0,num_batches): the callback must zero no
  // grads itself; it computes one batch's loss and backward pass so the
  // parameter grad buffers hold that batch's gradient afterwards. Returns the
  // mean gradient, summed in batch order. Throws NumericError on non-finite
  // gradients, naming the batch.
  GradientBuffer accumulate(std::size_t num_batches,
                            const std::function<void(std::size_t)>& eval_batch);

  void step(const GradientBuffer& gradient);

  double effective_lr() const;
  std::uint64_t iterations() const { return iterations_; }
  void set_iterations(std::uint64_t it) { iterations_ = it; }
  const OptimizerConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::vector<Tensor>& velocity() { return velocity_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<Tensor> velocity_;  // zero-initialized, shapes mirror params
  std::uint64_t iterations_ = 0;
};

}  // namespace mixedseg

#endif  // MIXEDSEG_OPTIMIZER_HPP_
