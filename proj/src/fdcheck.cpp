#include "ptmatch/fdcheck.hpp"

#include <cmath>
#include <string>

#include "ptmatch/errors.hpp"

namespace ptmatch {

FdResult finite_difference_check(
    const std::function<double(const std::vector<DenseArray>&)>& fn,
    std::vector<DenseArray> params, const std::vector<DenseArray>& analytic, double h,
    FdMode mode, double abs_floor) {
  if (!(h > 0.0)) throw ConfigError("finite_difference_check: h must be > 0");
  if (analytic.size() != params.size()) {
    throw DimensionError("finite_difference_check: " + std::to_string(params.size()) +
                         " params but " + std::to_string(analytic.size()) + " gradients");
  }
  auto eval = [&](const std::vector<DenseArray>& p) {
    const double v = fn(p);
    if (!std::isfinite(v)) {
      throw DomainError("finite_difference_check: fn returned non-finite value");
    }
    return v;
  };

  FdResult result;
  const double base = mode == FdMode::forward ? eval(params) : 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    if (!analytic[pi].same_shape(params[pi])) {
      throw DimensionError("finite_difference_check: gradient " + std::to_string(pi) +
                           " has shape " + analytic[pi].shape_str() + ", parameter has " +
                           params[pi].shape_str());
    }
    for (std::size_t ci = 0; ci < params[pi].size(); ++ci) {
      const double original = params[pi].values[ci];
      double numeric = 0.0;
      if (mode == FdMode::central) {
        params[pi].values[ci] = original + h;
        const double plus = eval(params);
        params[pi].values[ci] = original - h;
        const double minus = eval(params);
        numeric = (plus - minus) / (2.0 * h);
      } else {
        params[pi].values[ci] = original + h;
        numeric = (eval(params) - base) / h;
      }
      params[pi].values[ci] = original;

      const double a = analytic[pi].values[ci];
      const double diff = std::abs(a - numeric);
      const double rel = diff <= abs_floor ? 0.0 : diff / (std::abs(a) + std::abs(numeric) + 1e-12);
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = pi;
        result.worst_coord = ci;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace ptmatch
