#ifndef MIXEDSEG_TAPE_HPP_
#define MIXEDSEG_TAPE_HPP_

#include <functional>
#include <vector>

#include "mixedseg/tensor.hpp"

namespace mixedseg {

// Recorded forward pass for reverse-mode differentiation. Nodes are appended
// in forward order; backward() walks them in exact reverse order. Each node's
// closure owns references to its input/output TensorData plus whatever forward
// context its derivative needs, and accumulates into input grad buffers.
class Tape {
 public:
  struct Node {
    const char* op;
    std::function<void()> backward;
  };

  void record(const char* op, std::function<void()> backward_fn) {
    nodes_.push_back(Node{op, std::move(backward_fn)});
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards. Grad buffers of
// tensors used on several paths accumulate additively. Throws ShapeError if
// loss is not scalar.
void backward(const Tensor& loss, Tape& tape);

}  // namespace mixedseg

#endif  // MIXEDSEG_TAPE_HPP_
