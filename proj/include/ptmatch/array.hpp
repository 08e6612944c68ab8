#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ptmatch {

// Dense row-major array of 64-bit floats, rank 1 or 2. Scalars are rank-1
// arrays holding a single value. Everything downstream (attention maps,
// similarity matrices, parameters) lives in these.
struct DenseArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  DenseArray() = default;
  DenseArray(std::vector<std::size_t> shape_in, std::vector<double> values_in);

  static DenseArray scalar(double v);
  static DenseArray zeros(const std::vector<std::size_t>& shape_in);
  static DenseArray full(const std::vector<std::size_t>& shape_in, double fill);
  static DenseArray from_vector(std::vector<double> v);
  static DenseArray from_matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return values.size(); }
  bool is_scalar() const { return values.size() == 1; }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double at(std::size_t i) const { return values[i]; }
  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }

  bool same_shape(const DenseArray& other) const { return shape == other.shape; }
  std::string shape_str() const;

  // Throws DomainError naming `what` when any entry is NaN or infinite.
  void require_finite(const std::string& what) const;
};

std::string shape_str(const std::vector<std::size_t>& shape);

double l2_norm(const std::vector<double>& v);

bool all_finite(const std::vector<double>& v);

}  // namespace ptmatch
