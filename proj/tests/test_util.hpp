#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ptmatch/array.hpp"
#include "ptmatch/fdcheck.hpp"
#include "ptmatch/graph.hpp"

namespace ptmatch::testutil {

inline DenseArray random_array(std::mt19937_64& rng, const std::vector<std::size_t>& shape,
                               double lo = -1.0, double hi = 1.0) {
  DenseArray out = DenseArray::zeros(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : out.values) x = dist(rng);
  return out;
}

// Builds the graph twice: once to collect analytic gradients, then as the
// scalar function handed to the finite-difference checker.
using GraphFn = std::function<Var(Graph&, const std::vector<Var>&)>;

inline FdResult fd_check_graph(const GraphFn& build, const std::vector<DenseArray>& params,
                               double h = 1e-5, double abs_floor = 0.0) {
  auto run = [&build](const std::vector<DenseArray>& p, std::vector<DenseArray>* grads) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(p.size());
    for (const DenseArray& a : p) leaves.push_back(g.leaf(a));
    const Var out = build(g, leaves);
    const double value = g.value(out).values[0];
    if (grads != nullptr) {
      g.backward(out);
      grads->clear();
      for (Var v : leaves) grads->push_back(g.grad(v));
    }
    return value;
  };

  std::vector<DenseArray> analytic;
  run(params, &analytic);
  auto fn = [&run](const std::vector<DenseArray>& p) { return run(p, nullptr); };
  return finite_difference_check(fn, params, analytic, h, FdMode::central, abs_floor);
}

}  // namespace ptmatch::testutil
