#include "ptmatch/array.hpp"

#include <cmath>
#include <sstream>

#include "ptmatch/errors.hpp"

namespace ptmatch {

DenseArray::DenseArray(std::vector<std::size_t> shape_in, std::vector<double> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("DenseArray rank must be 1 or 2, got shape " + ptmatch::shape_str(shape));
  }
  std::size_t expected = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("DenseArray dimensions must be nonzero, got shape " +
                           ptmatch::shape_str(shape));
    }
    expected *= d;
  }
  if (expected != values.size()) {
    throw DimensionError("DenseArray shape " + ptmatch::shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
}

DenseArray DenseArray::scalar(double v) { return DenseArray({1}, {v}); }

DenseArray DenseArray::zeros(const std::vector<std::size_t>& shape_in) {
  return full(shape_in, 0.0);
}

DenseArray DenseArray::full(const std::vector<std::size_t>& shape_in, double fill) {
  std::size_t n = 1;
  for (std::size_t d : shape_in) n *= d;
  return DenseArray(shape_in, std::vector<double>(n, fill));
}

DenseArray DenseArray::from_vector(std::vector<double> v) {
  std::size_t n = v.size();
  return DenseArray({n}, std::move(v));
}

DenseArray DenseArray::from_matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return DenseArray({rows, cols}, std::move(v));
}

std::string DenseArray::shape_str() const { return ptmatch::shape_str(shape); }

void DenseArray::require_finite(const std::string& what) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw DomainError(what + ": non-finite value at index " + std::to_string(i));
    }
  }
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace ptmatch
