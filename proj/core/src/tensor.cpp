#include "xvseg/tensor.hpp"

namespace xvseg {

std::string Tensor::shape_str() const {
  if (is_grid())
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(cols());
  return std::to_string(rows()) + "x" + std::to_string(cols());
}

}  // namespace xvseg
