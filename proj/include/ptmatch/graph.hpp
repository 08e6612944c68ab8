#pragma once

#include <cstddef>
#include <unordered_map>
#include <vector>

#include "ptmatch/array.hpp"

namespace ptmatch {

enum class OpKind {
  constant,
  leaf,
  matmul,
  transpose,
  add,
  subtract,
  hadamard,
  scale,
  log,
  log1m,
  pow,
  softmax,
  mean_over_tokens,
  sum,
  l2_normalize,
  tile_columns,
  stack_rows,
  clamp_max,
};

const char* op_name(OpKind kind);

struct Var {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

// Reverse-mode tape over the fixed op vocabulary the embedding/loss graph
// needs. Ops append nodes in topological order; backward() sweeps the tape
// once in reverse, so gradients are deterministic and bit-identical for
// identical graphs. One Graph instance must not be mutated from two threads.
class Graph {
 public:
  Var constant(DenseArray value);
  Var leaf(DenseArray value);  // trainable parameter slot

  Var matmul(Var a, Var b);    // (n x m)(m x p) or (n x m)(m) -> matrix/vector
  Var transpose(Var a);
  Var add(Var a, Var b);       // same shape, or matrix + row vector broadcast
  Var subtract(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double factor);
  Var log(Var a);              // inputs must be > 0
  Var log1m(Var a);            // log(1 - x), inputs must be < 1
  Var pow(Var a, double exponent);  // inputs must be >= 0
  Var softmax(Var a, std::size_t axis);
  Var mean_over_tokens(Var a);  // column means of an n x d matrix -> d vector
  Var sum(Var a);
  Var l2_normalize(Var a);
  Var tile_columns(Var a, std::size_t count);  // n vector -> n x count, equal columns
  Var stack_rows(const std::vector<Var>& rows);
  Var clamp_max(Var a, double cap);

  const DenseArray& value(Var v) const;
  void backward(Var scalar_output);
  const DenseArray& grad(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

  // Test hook: scales every gradient contribution of one op kind so that a
  // deliberately wrong gradient is observable by the checking harness.
  void corrupt_gradient_for_testing(OpKind kind, double factor);

 private:
  struct Node {
    OpKind op;
    std::size_t a = Var::npos;
    std::size_t b = Var::npos;
    std::vector<std::size_t> inputs;  // stack_rows only
    double c = 0.0;                   // scale factor / pow exponent / clamp cap
    std::size_t axis = 0;
    DenseArray value;
    DenseArray grad;
  };

  Var push(Node node);
  const Node& node_at(Var v) const;
  double corruption(OpKind kind) const;
  void backprop_node(std::size_t id);

  std::vector<Node> nodes_;
  std::unordered_map<int, double> corrupt_;
  bool has_grads_ = false;
};

}  // namespace ptmatch
