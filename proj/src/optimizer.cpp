#include "mixedseg/optimizer.hpp"

#include <cmath>
#include <string>

namespace mixedseg {

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (batches_per_iteration < 1) throw ConfigError("batches_per_iteration must be >= 1");
  if (norm_epsilon <= 0.0) throw ConfigError("norm epsilon must be positive");
  if (lr_decay_every < 0 || lr_decay_factor <= 0.0) {
    throw ConfigError("invalid learning-rate decay settings");
  }
}

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig config)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.push_back(Tensor::zeros(p.shape()));
}

GradientBuffer Optimizer::accumulate(std::size_t num_batches,
                                     const std::function<void(std::size_t)>& eval_batch) {
  if (num_batches < 1) throw ConfigError("accumulate needs at least one batch");
  GradientBuffer acc(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    acc[i].assign(params_[i].numel(), Real(0));
  }
  for (std::size_t b = 0; b < num_batches; ++b) {
    for (Tensor& p : params_) p.clear_grad();
    eval_batch(b);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto g = params_[i].grad_view();
      if (g.empty()) continue;  // parameter unused by this loss: zero gradient
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (!std::isfinite(double(g[j]))) {
          throw NumericError("non-finite gradient in batch " + std::to_string(b) +
                             ", parameter " + std::to_string(i) + " element " +
                             std::to_string(j));
        }
        acc[i][j] += g[j];
      }
    }
  }
  const Real inv = Real(1) / Real(num_batches);
  for (auto& buf : acc) {
    for (Real& g : buf) g *= inv;
  }
  return acc;
}

double Optimizer::effective_lr() const {
  double lr = config_.learning_rate;
  if (config_.lr_decay_every > 0) {
    const std::uint64_t decays = iterations_ / std::uint64_t(config_.lr_decay_every);
    lr *= std::pow(config_.lr_decay_factor, double(decays));
  }
  return lr;
}

void Optimizer::step(const GradientBuffer& gradient) {
  if (gradient.size() != params_.size()) {
    throw ShapeError("gradient buffer does not match parameter list");
  }
  const double lr = effective_lr();
  const Real mu = Real(config_.momentum);

  if (!config_.normalize_after_momentum) {
    double sq = 0.0;
    for (const auto& buf : gradient) {
      for (Real g : buf) sq += double(g) * double(g);
    }
    const Real inv_norm = Real(1.0 / std::max(std::sqrt(sq), config_.norm_epsilon));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto v = velocity_[i].values();
      auto p = params_[i].values();
      const auto& g = gradient[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = mu * v[j] + g[j] * inv_norm;
        p[j] -= Real(lr) * v[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto v = velocity_[i].values();
      const auto& g = gradient[i];
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = mu * v[j] + g[j];
    }
    double sq = 0.0;
    for (const Tensor& vt : velocity_) {
      for (Real v : vt.values()) sq += double(v) * double(v);
    }
    const Real inv_norm = Real(1.0 / std::max(std::sqrt(sq), config_.norm_epsilon));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto v = velocity_[i].values();
      auto p = params_[i].values();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= Real(lr) * v[j] * inv_norm;
    }
  }
  ++iterations_;
}

}  // namespace mixedseg
