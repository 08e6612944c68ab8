#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "ptmatch/array.hpp"

namespace ptmatch {

// Normalized (horizontal, vertical) patch centroid, both coordinates in [0, 1].
using Centroid = std::array<double, 2>;

// p_n x d_c sinusoidal embedding of patch centroid coordinates. For each
// patch, even dimensions carry sin and odd dimensions cos of the coordinate
// scaled by the token count, at geometrically spaced frequencies; the
// horizontal and vertical components are fused by summation so entries stay
// in [-2, 2] and the width stays d_c. Pure function, constant with respect to
// trainable parameters. d_c must be even and p_n must equal centroids.size().
DenseArray patch_position_embedding(const std::vector<Centroid>& centroids, std::size_t p_n,
                                    std::size_t d_c);

}  // namespace ptmatch
