#include "sscae/tensor.hpp"

#include <limits>

namespace sscae {

std::string to_string(Precision p) { return p == Precision::fp32 ? "fp32" : "fp64"; }

Precision precision_from_string(const std::string& s) {
  if (s == "fp32") return Precision::fp32;
  if (s == "fp64") return Precision::fp64;
  throw ConfigError("unknown precision '" + s + "'");
}

std::size_t Shape::size() const {
  constexpr std::size_t limit = std::numeric_limits<std::ptrdiff_t>::max() / sizeof(double);
  std::size_t total = 1;
  for (std::size_t d : {n, c, h, w}) {
    if (d == 0) return 0;
  }
  for (std::size_t d : {n, c, h, w}) {
    if (total > limit / d) throw ShapeError("shape " + str() + " overflows addressable size");
    total *= d;
  }
  return total;
}

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace sscae
