#include "mixedseg/tape.hpp"

namespace mixedseg {

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss");
  }
  loss.ptr()->ensure_grad();
  loss.ptr()->grad[0] += Real(1);
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    it->backward();
  }
}

}  // namespace mixedseg
