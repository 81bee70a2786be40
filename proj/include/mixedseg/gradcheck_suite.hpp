#ifndef MIXEDSEG_GRADCHECK_SUITE_HPP_
#define MIXEDSEG_GRADCHECK_SUITE_HPP_

#include <string>
#include <vector>

#include "mixedseg/gradcheck.hpp"

namespace mixedseg {

struct NamedCheck {
  std::string name;
  GradCheckReport report;
};

// Central-difference checks for every differentiable primitive plus the full
// composite objective (weighted segmentation loss + classification loss +
// convex combination) evaluated through a tiny model. Inputs are fixed-seed
// random values bounded away from the non-differentiable points of relu and
// max-pooling.
std::vector<NamedCheck> run_standard_gradchecks(double epsilon = 1e-6,
                                                double tolerance = 1e-4);

}  // namespace mixedseg

#endif  // MIXEDSEG_GRADCHECK_SUITE_HPP_
