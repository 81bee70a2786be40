#ifndef MIXEDSEG_LABELMAP_HPP_
#define MIXEDSEG_LABELMAP_HPP_

#include <cstdint>
#include <vector>

#include "mixedseg/tensor.hpp"

namespace mixedseg {

// Dense integer label volume/slice ([H,W], [N,H,W] or [D,H,W]).
struct LabelMap {
  Shape dims;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(Shape d, std::vector<std::uint8_t> l) : dims(std::move(d)), labels(std::move(l)) {
    if (labels.size() != shape_numel(dims)) {
      throw ShapeError("label count does not match dims " + shape_str(dims));
    }
  }
  static LabelMap zeros(Shape d) {
    std::vector<std::uint8_t> l(shape_numel(d), 0);
    return LabelMap(std::move(d), std::move(l));
  }

  std::size_t numel() const { return labels.size(); }
  bool empty_of_tumor() const {
    for (std::uint8_t v : labels) {
      if (v != 0) return false;
    }
    return true;
  }
  bool contains_class(std::uint8_t c) const {
    for (std::uint8_t v : labels) {
      if (v == c) return true;
    }
    return false;
  }
};

}  // namespace mixedseg

#endif  // MIXEDSEG_LABELMAP_HPP_
