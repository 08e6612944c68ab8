#pragma once

#include <functional>
#include <vector>

#include "ptmatch/array.hpp"

namespace ptmatch {

enum class FdMode { central, forward };

struct FdResult {
  double max_rel_err = 0.0;
  std::size_t worst_param = 0;  // index into the parameter list
  std::size_t worst_coord = 0;  // flat index within that parameter
  double analytic = 0.0;        // analytic gradient at the worst coordinate
  double numeric = 0.0;         // finite-difference estimate there
};

// Central-difference check of an analytic gradient. `fn` must be a pure
// deterministic scalar function of the parameter list; each coordinate is
// perturbed by +-h and (f+ - f-)/2h is compared against `analytic` with
// |analytic| + |numeric| + 1e-12 in the relative-error denominator. Returns
// the worst coordinate; throws DomainError when fn produces a non-finite
// value. A discontinuous fn simply reports a large error, it does not throw.
//
// `abs_floor` treats coordinates with |analytic - numeric| below it as exact
// matches. Structurally-zero gradients (a query bias under token-axis
// softmax, a disabled attention branch) otherwise compare rounding noise of
// order eps/h against a true zero and report a spurious O(1) relative error.
FdResult finite_difference_check(
    const std::function<double(const std::vector<DenseArray>&)>& fn,
    std::vector<DenseArray> params, const std::vector<DenseArray>& analytic, double h = 1e-5,
    FdMode mode = FdMode::central, double abs_floor = 0.0);

}  // namespace ptmatch
