#include "ptmatch/graph.hpp"

#include <cmath>
#include <string>

#include "ptmatch/errors.hpp"

namespace ptmatch {

namespace {

void require_same_shape(const DenseArray& a, const DenseArray& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
  }
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::subtract: return "subtract";
    case OpKind::hadamard: return "hadamard";
    case OpKind::scale: return "scale";
    case OpKind::log: return "log";
    case OpKind::log1m: return "log1m";
    case OpKind::pow: return "pow";
    case OpKind::softmax: return "softmax";
    case OpKind::mean_over_tokens: return "mean_over_tokens";
    case OpKind::sum: return "sum";
    case OpKind::l2_normalize: return "l2_normalize";
    case OpKind::tile_columns: return "tile_columns";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::clamp_max: return "clamp_max";
  }
  return "?";
}

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node_at(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw UsageError("graph: invalid node handle");
  }
  return nodes_[v.id];
}

double Graph::corruption(OpKind kind) const {
  auto it = corrupt_.find(static_cast<int>(kind));
  return it == corrupt_.end() ? 1.0 : it->second;
}

void Graph::corrupt_gradient_for_testing(OpKind kind, double factor) {
  corrupt_[static_cast<int>(kind)] = factor;
}

Var Graph::constant(DenseArray value) {
  value.require_finite("constant");
  Node n;
  n.op = OpKind::constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::leaf(DenseArray value) {
  value.require_finite("leaf");
  Node n;
  n.op = OpKind::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const DenseArray& av = node_at(a).value;
  const DenseArray& bv = node_at(b).value;
  if (av.rank() != 2 || (bv.rank() != 2 && bv.rank() != 1)) {
    throw DimensionError("matmul: unsupported ranks " + av.shape_str() + " vs " + bv.shape_str());
  }
  const std::size_t n = av.rows();
  const std::size_t m = av.cols();
  Node out;
  out.op = OpKind::matmul;
  out.a = a.id;
  out.b = b.id;
  if (bv.rank() == 2) {
    if (bv.rows() != m) {
      throw DimensionError("matmul: inner dimensions disagree " + av.shape_str() + " vs " +
                           bv.shape_str());
    }
    const std::size_t p = bv.cols();
    out.value = DenseArray::zeros({n, p});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        const double aik = av.values[i * m + k];
        if (aik == 0.0) continue;
        const double* brow = &bv.values[k * p];
        double* crow = &out.value.values[i * p];
        for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
      }
    }
  } else {
    if (bv.size() != m) {
      throw DimensionError("matmul: inner dimensions disagree " + av.shape_str() + " vs " +
                           bv.shape_str());
    }
    out.value = DenseArray::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const double* arow = &av.values[i * m];
      for (std::size_t k = 0; k < m; ++k) s += arow[k] * bv.values[k];
      out.value.values[i] = s;
    }
  }
  return push(std::move(out));
}

Var Graph::transpose(Var a) {
  const DenseArray& av = node_at(a).value;
  if (av.rank() != 2) {
    throw DimensionError("transpose: expects a matrix, got " + av.shape_str());
  }
  const std::size_t n = av.rows(), m = av.cols();
  Node out;
  out.op = OpKind::transpose;
  out.a = a.id;
  out.value = DenseArray::zeros({m, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out.value.values[j * n + i] = av.values[i * m + j];
    }
  }
  return push(std::move(out));
}

Var Graph::add(Var a, Var b) {
  const DenseArray& av = node_at(a).value;
  const DenseArray& bv = node_at(b).value;
  Node out;
  out.op = OpKind::add;
  out.a = a.id;
  out.b = b.id;
  if (av.same_shape(bv)) {
    out.value = av;
    for (std::size_t i = 0; i < bv.size(); ++i) out.value.values[i] += bv.values[i];
  } else if (av.rank() == 2 && bv.rank() == 1 && av.cols() == bv.size()) {
    // matrix + row vector, broadcast over rows (bias add)
    out.value = av;
    const std::size_t n = av.rows(), m = av.cols();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) out.value.values[i * m + j] += bv.values[j];
    }
  } else {
    throw DimensionError("add: shapes not compatible " + av.shape_str() + " vs " + bv.shape_str());
  }
  return push(std::move(out));
}

Var Graph::subtract(Var a, Var b) {
  const DenseArray& av = node_at(a).value;
  const DenseArray& bv = node_at(b).value;
  require_same_shape(av, bv, "subtract");
  Node out;
  out.op = OpKind::subtract;
  out.a = a.id;
  out.b = b.id;
  out.value = av;
  for (std::size_t i = 0; i < bv.size(); ++i) out.value.values[i] -= bv.values[i];
  return push(std::move(out));
}

Var Graph::hadamard(Var a, Var b) {
  const DenseArray& av = node_at(a).value;
  const DenseArray& bv = node_at(b).value;
  require_same_shape(av, bv, "hadamard");
  Node out;
  out.op = OpKind::hadamard;
  out.a = a.id;
  out.b = b.id;
  out.value = av;
  for (std::size_t i = 0; i < bv.size(); ++i) out.value.values[i] *= bv.values[i];
  return push(std::move(out));
}

Var Graph::scale(Var a, double factor) {
  const DenseArray& av = node_at(a).value;
  Node out;
  out.op = OpKind::scale;
  out.a = a.id;
  out.c = factor;
  out.value = av;
  for (double& x : out.value.values) x *= factor;
  return push(std::move(out));
}

Var Graph::log(Var a) {
  const DenseArray& av = node_at(a).value;
  Node out;
  out.op = OpKind::log;
  out.a = a.id;
  out.value = av;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av.values[i] > 0.0)) {
      throw DomainError("log: nonpositive input at index " + std::to_string(i));
    }
    out.value.values[i] = std::log(av.values[i]);
  }
  return push(std::move(out));
}

Var Graph::log1m(Var a) {
  const DenseArray& av = node_at(a).value;
  Node out;
  out.op = OpKind::log1m;
  out.a = a.id;
  out.value = av;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av.values[i] < 1.0)) {
      throw DomainError("log1m: input >= 1 at index " + std::to_string(i));
    }
    out.value.values[i] = std::log1p(-av.values[i]);
  }
  return push(std::move(out));
}

Var Graph::pow(Var a, double exponent) {
  const DenseArray& av = node_at(a).value;
  Node out;
  out.op = OpKind::pow;
  out.a = a.id;
  out.c = exponent;
  out.value = av;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av.values[i] < 0.0) {
      throw DomainError("pow: negative base at index " + std::to_string(i));
    }
    out.value.values[i] = std::pow(av.values[i], exponent);
  }
  return push(std::move(out));
}

Var Graph::softmax(Var a, std::size_t axis) {
  const DenseArray& av = node_at(a).value;
  if (axis >= av.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         av.shape_str());
  }
  Node out;
  out.op = OpKind::softmax;
  out.a = a.id;
  out.axis = axis;
  out.value = av;
  auto normalize_slice = [](double* x, std::size_t n, std::size_t stride) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::exp(x[i * stride] - mx);
      x[i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < n; ++i) x[i * stride] /= total;
  };
  if (av.rank() == 1) {
    normalize_slice(out.value.values.data(), av.size(), 1);
  } else {
    const std::size_t n = av.rows(), m = av.cols();
    if (axis == 1) {
      for (std::size_t i = 0; i < n; ++i) normalize_slice(&out.value.values[i * m], m, 1);
    } else {
      for (std::size_t j = 0; j < m; ++j) normalize_slice(&out.value.values[j], n, m);
    }
  }
  return push(std::move(out));
}

Var Graph::mean_over_tokens(Var a) {
  const DenseArray& av = node_at(a).value;
  if (av.rank() != 2) {
    throw DimensionError("mean_over_tokens: expects an n x d matrix, got " + av.shape_str());
  }
  const std::size_t n = av.rows(), m = av.cols();
  Node out;
  out.op = OpKind::mean_over_tokens;
  out.a = a.id;
  out.value = DenseArray::zeros({m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.value.values[j] += av.values[i * m + j];
  }
  for (double& x : out.value.values) x /= static_cast<double>(n);
  return push(std::move(out));
}

Var Graph::sum(Var a) {
  const DenseArray& av = node_at(a).value;
  double s = 0.0;
  for (double x : av.values) s += x;
  Node out;
  out.op = OpKind::sum;
  out.a = a.id;
  out.value = DenseArray::scalar(s);
  return push(std::move(out));
}

Var Graph::l2_normalize(Var a) {
  const DenseArray& av = node_at(a).value;
  if (av.rank() != 1) {
    throw DimensionError("l2_normalize: expects a vector, got " + av.shape_str());
  }
  const double norm = l2_norm(av.values);
  if (!(norm > 1e-12)) {
    throw DegenerateInputError("l2_normalize: vector norm " + std::to_string(norm) +
                               " below 1e-12");
  }
  Node out;
  out.op = OpKind::l2_normalize;
  out.a = a.id;
  out.value = av;
  for (double& x : out.value.values) x /= norm;
  return push(std::move(out));
}

Var Graph::tile_columns(Var a, std::size_t count) {
  const DenseArray& av = node_at(a).value;
  if (av.rank() != 1 || count == 0) {
    throw DimensionError("tile_columns: expects a vector and count >= 1, got " + av.shape_str() +
                         " x " + std::to_string(count));
  }
  const std::size_t n = av.size();
  Node out;
  out.op = OpKind::tile_columns;
  out.a = a.id;
  out.value = DenseArray::zeros({n, count});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < count; ++j) out.value.values[i * count + j] = av.values[i];
  }
  return push(std::move(out));
}

Var Graph::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t d = node_at(rows[0]).value.size();
  Node out;
  out.op = OpKind::stack_rows;
  out.value = DenseArray::zeros({rows.size(), d});
  out.inputs.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const DenseArray& rv = node_at(rows[i]).value;
    if (rv.rank() != 1 || rv.size() != d) {
      throw DimensionError("stack_rows: row " + std::to_string(i) + " has shape " +
                           rv.shape_str() + ", expected [" + std::to_string(d) + "]");
    }
    out.inputs.push_back(rows[i].id);
    for (std::size_t j = 0; j < d; ++j) out.value.values[i * d + j] = rv.values[j];
  }
  return push(std::move(out));
}

Var Graph::clamp_max(Var a, double cap) {
  const DenseArray& av = node_at(a).value;
  Node out;
  out.op = OpKind::clamp_max;
  out.a = a.id;
  out.c = cap;
  out.value = av;
  for (double& x : out.value.values) x = std::min(x, cap);
  return push(std::move(out));
}

const DenseArray& Graph::value(Var v) const { return node_at(v).value; }

const DenseArray& Graph::grad(Var v) const {
  if (!has_grads_) throw UsageError("graph: grad() before backward()");
  return node_at(v).grad;
}

void Graph::backward(Var scalar_output) {
  const Node& out = node_at(scalar_output);
  if (out.value.size() != 1) {
    throw UsageError("backward: output must be scalar, got shape " + out.value.shape_str());
  }
  for (Node& n : nodes_) {
    n.grad = DenseArray::zeros(n.value.shape);
  }
  nodes_[scalar_output.id].grad.values[0] = 1.0;
  for (std::size_t id = scalar_output.id + 1; id-- > 0;) {
    backprop_node(id);
  }
  has_grads_ = true;
}

void Graph::backprop_node(std::size_t id) {
  Node& n = nodes_[id];
  const double f = corruption(n.op);
  const DenseArray& g = n.grad;
  switch (n.op) {
    case OpKind::constant:
    case OpKind::leaf:
      break;
    case OpKind::matmul: {
      const DenseArray& av = nodes_[n.a].value;
      const DenseArray& bv = nodes_[n.b].value;
      DenseArray& ga = nodes_[n.a].grad;
      DenseArray& gb = nodes_[n.b].grad;
      const std::size_t rows = av.rows(), m = av.cols();
      if (bv.rank() == 2) {
        const std::size_t p = bv.cols();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t k = 0; k < m; ++k) {
            double s = 0.0;
            const double* grow = &g.values[i * p];
            const double* brow = &bv.values[k * p];
            for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
            ga.values[i * m + k] += f * s;
          }
        }
        for (std::size_t k = 0; k < m; ++k) {
          for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < rows; ++i) s += av.values[i * m + k] * g.values[i * p + j];
            gb.values[k * p + j] += f * s;
          }
        }
      } else {
        for (std::size_t i = 0; i < rows; ++i) {
          const double gi = g.values[i];
          for (std::size_t k = 0; k < m; ++k) {
            ga.values[i * m + k] += f * gi * bv.values[k];
            gb.values[k] += f * gi * av.values[i * m + k];
          }
        }
      }
      break;
    }
    case OpKind::transpose: {
      DenseArray& ga = nodes_[n.a].grad;
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          ga.values[j * rows + i] += f * g.values[i * cols + j];
        }
      }
      break;
    }
    case OpKind::add: {
      DenseArray& ga = nodes_[n.a].grad;
      DenseArray& gb = nodes_[n.b].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += f * g.values[i];
      if (gb.size() == g.size()) {
        for (std::size_t i = 0; i < g.size(); ++i) gb.values[i] += f * g.values[i];
      } else {
        // broadcast bias: gradient is the column sum
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gb.values[j] += f * g.values[i * cols + j];
        }
      }
      break;
    }
    case OpKind::subtract: {
      DenseArray& ga = nodes_[n.a].grad;
      DenseArray& gb = nodes_[n.b].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.values[i] += f * g.values[i];
        gb.values[i] -= f * g.values[i];
      }
      break;
    }
    case OpKind::hadamard: {
      const DenseArray& av = nodes_[n.a].value;
      const DenseArray& bv = nodes_[n.b].value;
      DenseArray& ga = nodes_[n.a].grad;
      DenseArray& gb = nodes_[n.b].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.values[i] += f * g.values[i] * bv.values[i];
        gb.values[i] += f * g.values[i] * av.values[i];
      }
      break;
    }
    case OpKind::scale: {
      DenseArray& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += f * n.c * g.values[i];
      break;
    }
    case OpKind::log: {
      const DenseArray& av = nodes_[n.a].value;
      DenseArray& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga.values[i] += f * g.values[i] / av.values[i];
      break;
    }
    case OpKind::log1m: {
      const DenseArray& av = nodes_[n.a].value;
      DenseArray& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.values[i] -= f * g.values[i] / (1.0 - av.values[i]);
      }
      break;
    }
    case OpKind::pow: {
      const DenseArray& av = nodes_[n.a].value;
      DenseArray& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.values[i] += f * g.values[i] * n.c * std::pow(av.values[i], n.c - 1.0);
      }
      break;
    }
    case OpKind::softmax: {
      DenseArray& ga = nodes_[n.a].grad;
      auto slice_backward = [&](const double* s, const double* gy, double* gx, std::size_t len,
                                std::size_t stride) {
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += gy[i * stride] * s[i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          gx[i * stride] += f * s[i * stride] * (gy[i * stride] - dot);
        }
      };
      if (n.value.rank() == 1) {
        slice_backward(n.value.values.data(), g.values.data(), ga.values.data(), n.value.size(), 1);
      } else {
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        if (n.axis == 1) {
          for (std::size_t i = 0; i < rows; ++i) {
            slice_backward(&n.value.values[i * cols], &g.values[i * cols], &ga.values[i * cols],
                           cols, 1);
          }
        } else {
          for (std::size_t j = 0; j < cols; ++j) {
            slice_backward(&n.value.values[j], &g.values[j], &ga.values[j], rows, cols);
          }
        }
      }
      break;
    }
    case OpKind::mean_over_tokens: {
      const DenseArray& av = nodes_[n.a].value;
      DenseArray& ga = nodes_[n.a].grad;
      const std::size_t rows = av.rows(), cols = av.cols();
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) ga.values[i * cols + j] += f * inv * g.values[j];
      }
      break;
    }
    case OpKind::sum: {
      DenseArray& ga = nodes_[n.a].grad;
      const double gy = g.values[0];
      for (double& x : ga.values) x += f * gy;
      break;
    }
    case OpKind::l2_normalize: {
      const DenseArray& av = nodes_[n.a].value;
      DenseArray& ga = nodes_[n.a].grad;
      const double norm = l2_norm(av.values);
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g.values[i] * n.value.values[i];
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.values[i] += f * (g.values[i] - n.value.values[i] * dot) / norm;
      }
      break;
    }
    case OpKind::tile_columns: {
      DenseArray& ga = nodes_[n.a].grad;
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += g.values[i * cols + j];
        ga.values[i] += f * s;
      }
      break;
    }
    case OpKind::stack_rows: {
      const std::size_t cols = n.value.cols();
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        DenseArray& gr = nodes_[n.inputs[i]].grad;
        for (std::size_t j = 0; j < cols; ++j) gr.values[j] += f * g.values[i * cols + j];
      }
      break;
    }
    case OpKind::clamp_max: {
      const DenseArray& av = nodes_[n.a].value;
      DenseArray& ga = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av.values[i] <= n.c) ga.values[i] += f * g.values[i];
      }
      break;
    }
  }
}

}  // namespace ptmatch
