#include <cmath>

#include "doctest.h"
#include "ptmatch/errors.hpp"
#include "ptmatch/posenc.hpp"

using namespace ptmatch;

TEST_CASE("origin centroid gives alternating [0, 2] pattern") {
  const DenseArray e = patch_position_embedding({{0.0, 0.0}}, 1, 4);
  CHECK(e.shape == std::vector<std::size_t>{1, 4});
  CHECK(e.values[0] == doctest::Approx(0.0));
  CHECK(e.values[1] == doctest::Approx(2.0));
  CHECK(e.values[2] == doctest::Approx(0.0));
  CHECK(e.values[3] == doctest::Approx(2.0));
}

TEST_CASE("scalar evaluation at h=0.5, v=0, p_n=4, d_c=2") {
  // four patches so the scale factor is 4; only the first patch is inspected
  const std::vector<Centroid> centroids{{0.5, 0.0}, {0.1, 0.1}, {0.2, 0.2}, {0.3, 0.3}};
  const DenseArray e = patch_position_embedding(centroids, 4, 2);
  CHECK(e.at(0, 0) == doctest::Approx(std::sin(2.0) + 0.0).epsilon(1e-12));
  CHECK(e.at(0, 1) == doctest::Approx(std::cos(2.0) + 1.0).epsilon(1e-12));
  CHECK(std::sin(2.0) == doctest::Approx(0.9093).epsilon(1e-4));
  CHECK(std::cos(2.0) == doctest::Approx(-0.4161).epsilon(1e-4));
}

TEST_CASE("entries bounded by 2 and deterministic") {
  std::vector<Centroid> centroids;
  for (int i = 0; i < 9; ++i) {
    centroids.push_back({(i % 3) / 2.0, (i / 3) / 2.0});
  }
  const DenseArray a = patch_position_embedding(centroids, 9, 8);
  const DenseArray b = patch_position_embedding(centroids, 9, 8);
  CHECK(a.values == b.values);
  for (double v : a.values) CHECK(std::abs(v) <= 2.0);
}

// Summation fusion makes the embedding symmetric under swapping (h, v):
// E(a, b) and E(b, a) coincide exactly, so injectivity can only hold up to
// that swap. The brute-force sweep checks distinctness for every other pair
// and pins the swap collision itself.
TEST_CASE("rows are distinct across a 16x16 centroid grid up to the h/v swap") {
  std::vector<Centroid> centroids;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      centroids.push_back({(c + 0.5) / 16.0, (r + 0.5) / 16.0});
    }
  }
  const DenseArray e = patch_position_embedding(centroids, centroids.size(), 32);
  double min_dist = 1e300;
  double max_swap_dist = 0.0;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    for (std::size_t j = i + 1; j < centroids.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 32; ++k) {
        const double diff = e.at(i, k) - e.at(j, k);
        d += diff * diff;
      }
      const bool swapped = centroids[i][0] == centroids[j][1] && centroids[i][1] == centroids[j][0];
      if (swapped) {
        max_swap_dist = std::max(max_swap_dist, std::sqrt(d));
      } else {
        min_dist = std::min(min_dist, std::sqrt(d));
      }
    }
  }
  CHECK(min_dist > 0.0);
  CHECK(max_swap_dist == 0.0);
  MESSAGE("min pairwise distance excluding swaps: ", min_dist);
}

TEST_CASE("configuration and domain errors") {
  CHECK_THROWS_AS(patch_position_embedding({{0.5, 0.5}}, 1, 3), ConfigError);
  CHECK_THROWS_AS(patch_position_embedding({{0.5, 0.5}}, 2, 4), ConfigError);
  CHECK_THROWS_AS(patch_position_embedding({{1.5, 0.5}}, 1, 4), DomainError);
  CHECK_THROWS_AS(patch_position_embedding({{0.5, -0.1}}, 1, 4), DomainError);
}
