#include "mixedseg/gradcheck.hpp"

#include <cmath>

namespace mixedseg {

GradCheckReport grad_check(const TensorFn& f, std::vector<Tensor> inputs,
                           double epsilon, double tolerance) {
#ifdef MIXEDSEG_REAL32
  throw ConfigError("grad_check requires the 64-bit build");
#else
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  Tape tape;
  Tensor loss = f(inputs, tape);
  backward(loss, tape);

  std::vector<std::vector<Real>> analytic;
  analytic.reserve(inputs.size());
  for (Tensor& t : inputs) {
    auto g = t.grad_view();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), Real(0));
  }

  GradCheckReport report;
  report.pass = true;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    auto vals = t.values();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const Real saved = vals[j];
      vals[j] = saved + Real(epsilon);
      Tape tp;
      const Real lp = f(inputs, tp).item();
      vals[j] = saved - Real(epsilon);
      Tape tm;
      const Real lm = f(inputs, tm).item();
      vals[j] = saved;
      const double numeric = (double(lp) - double(lm)) / (2.0 * epsilon);
      const double a = double(analytic[ti][j]);
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = "input " + std::to_string(ti) + " element " + std::to_string(j);
      }
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
#endif
}

}  // namespace mixedseg
