#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptmatch/graph.hpp"

namespace ptmatch {

struct GradCheckLine {
  std::string name;
  std::size_t configs = 0;
  double worst_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckLine> lines;
  double tolerance = 1e-4;
  bool all_pass = false;
};

// Finite-difference verification of every kernel op plus the composed
// embedding/loss graphs at random small shapes (K <= 8, n <= 6, d_c <= 16).
// `corrupt_op` (an op name) deliberately breaks that op's gradient rule so
// the harness itself can be shown to catch a wrong gradient.
GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t op_configs = 100,
                              std::size_t composed_configs = 100,
                              const std::string& corrupt_op = "");

}  // namespace ptmatch
