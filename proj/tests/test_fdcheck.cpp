#include <cmath>

#include "doctest.h"
#include "ptmatch/errors.hpp"
#include "ptmatch/fdcheck.hpp"

using namespace ptmatch;

TEST_CASE("finite differences are exact for linear functions") {
  auto fn = [](const std::vector<DenseArray>& p) {
    double s = 0.0;
    for (double x : p[0].values) s += 3.0 * x;
    return s;
  };
  const std::vector<DenseArray> params{DenseArray::from_vector({0.3, -1.2, 0.7})};
  const std::vector<DenseArray> analytic{DenseArray::full({3}, 3.0)};
  CHECK(finite_difference_check(fn, params, analytic).max_rel_err <= 1e-10);
}

TEST_CASE("cubic at x = 1 with h = 1e-5") {
  auto fn = [](const std::vector<DenseArray>& p) {
    const double x = p[0].values[0];
    return x * x * x;
  };
  const std::vector<DenseArray> params{DenseArray::scalar(1.0)};
  const std::vector<DenseArray> analytic{DenseArray::scalar(3.0)};
  CHECK(finite_difference_check(fn, params, analytic, 1e-5).max_rel_err <= 1e-8);
}

TEST_CASE("discontinuous function is flagged, not a crash") {
  auto fn = [](const std::vector<DenseArray>& p) {
    return p[0].values[0] > 0.0 ? 1.0 : 0.0;
  };
  const std::vector<DenseArray> params{DenseArray::scalar(1e-7)};
  const std::vector<DenseArray> analytic{DenseArray::scalar(0.0)};
  const FdResult r = finite_difference_check(fn, params, analytic, 1e-5);
  CHECK(r.max_rel_err > 1e-4);
}

TEST_CASE("non-finite fn output raises an evaluation error") {
  auto fn = [](const std::vector<DenseArray>&) { return std::nan(""); };
  const std::vector<DenseArray> params{DenseArray::scalar(1.0)};
  const std::vector<DenseArray> analytic{DenseArray::scalar(0.0)};
  CHECK_THROWS_AS(finite_difference_check(fn, params, analytic), DomainError);
}

TEST_CASE("parameter and gradient shape agreement is enforced") {
  auto fn = [](const std::vector<DenseArray>& p) { return p[0].values[0]; };
  const std::vector<DenseArray> params{DenseArray::scalar(1.0)};
  const std::vector<DenseArray> analytic{DenseArray::from_vector({1.0, 2.0})};
  CHECK_THROWS_AS(finite_difference_check(fn, params, analytic), DimensionError);
}
