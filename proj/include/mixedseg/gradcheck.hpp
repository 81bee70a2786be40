#ifndef MIXEDSEG_GRADCHECK_HPP_
#define MIXEDSEG_GRADCHECK_HPP_

#include <functional>
#include <string>
#include <vector>

#include "mixedseg/tape.hpp"
#include "mixedseg/tensor.hpp"

namespace mixedseg {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::size_t checked = 0;
  std::string worst;  // "input 1 element 3" for the max_rel_error entry
};

// Scalar-valued function of the inputs; must be deterministic and must route
// every differentiable op through the provided tape.
using TensorFn = std::function<Tensor(const std::vector<Tensor>&, Tape&)>;

// Central-difference check of reverse-mode gradients:
//   numeric = (f(x+eps) - f(x-eps)) / (2 eps), element by element,
//   rel_error = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Reports rather than throws on mismatch.
GradCheckReport grad_check(const TensorFn& f, std::vector<Tensor> inputs,
                           double epsilon = 1e-6, double tolerance = 1e-4);

}  // namespace mixedseg

#endif  // MIXEDSEG_GRADCHECK_HPP_
