#include "ptmatch/posenc.hpp"

#include <cmath>
#include <string>

#include "ptmatch/errors.hpp"

namespace ptmatch {

DenseArray patch_position_embedding(const std::vector<Centroid>& centroids, std::size_t p_n,
                                    std::size_t d_c) {
  if (d_c % 2 != 0 || d_c == 0) {
    throw ConfigError("patch_position_embedding: d_c must be even, got " + std::to_string(d_c));
  }
  if (p_n != centroids.size() || p_n == 0) {
    throw ConfigError("patch_position_embedding: p_n " + std::to_string(p_n) +
                      " does not match " + std::to_string(centroids.size()) + " centroids");
  }
  for (std::size_t j = 0; j < centroids.size(); ++j) {
    for (double coord : centroids[j]) {
      if (!(coord >= 0.0 && coord <= 1.0)) {
        throw DomainError("patch_position_embedding: centroid " + std::to_string(j) +
                          " coordinate " + std::to_string(coord) + " outside [0, 1]");
      }
    }
  }

  DenseArray e = DenseArray::zeros({p_n, d_c});
  const double scale = static_cast<double>(p_n);
  for (std::size_t j = 0; j < p_n; ++j) {
    const double h = centroids[j][0] * scale;  // coordinate scaled by token count
    const double v = centroids[j][1] * scale;
    for (std::size_t k = 0; k < d_c; ++k) {
      // even index k uses exponent k/d_c with sin, odd uses (k-1)/d_c with cos
      const std::size_t base = k - (k % 2);
      const double freq = std::pow(10000.0, static_cast<double>(base) / static_cast<double>(d_c));
      const double ex = (k % 2 == 0) ? std::sin(h / freq) : std::cos(h / freq);
      const double ey = (k % 2 == 0) ? std::sin(v / freq) : std::cos(v / freq);
      e.at(j, k) = ex + ey;
    }
  }
  return e;
}

}  // namespace ptmatch
