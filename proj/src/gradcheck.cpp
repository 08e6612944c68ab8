#include "ptmatch/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <random>

#include "ptmatch/dap.hpp"
#include "ptmatch/errors.hpp"
#include "ptmatch/fdcheck.hpp"
#include "ptmatch/rncl.hpp"

namespace ptmatch {

namespace {

constexpr double kTolerance = 1e-4;
// absorbs finite-difference rounding noise on structurally-zero gradient
// directions in the composed graphs (see fdcheck.hpp)
constexpr double kComposedFloor = 1e-9;

DenseArray random_array(std::mt19937_64& rng, const std::vector<std::size_t>& shape, double lo,
                        double hi) {
  DenseArray out = DenseArray::zeros(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : out.values) x = dist(rng);
  return out;
}

// Deterministic readout so the scalar objective exercises the full Jacobian.
Var weighted_sum(Graph& g, Var v) {
  DenseArray w = g.value(v);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.values[i] = 0.25 + std::sin(1.7 * static_cast<double>(i) + 0.3);
  }
  return g.sum(g.hadamard(v, g.constant(w)));
}

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

double check_once(const Builder& build, const std::vector<DenseArray>& params,
                  std::optional<OpKind> corrupt, double abs_floor) {
  auto run = [&](const std::vector<DenseArray>& p, std::vector<DenseArray>* grads) {
    Graph g;
    if (corrupt) g.corrupt_gradient_for_testing(*corrupt, 1.05);
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
  return finite_difference_check(fn, params, analytic, 1e-5, FdMode::central, abs_floor)
      .max_rel_err;
}

std::optional<OpKind> op_from_name(const std::string& name) {
  if (name.empty()) return std::nullopt;
  for (int k = 0; k <= static_cast<int>(OpKind::clamp_max); ++k) {
    if (name == op_name(static_cast<OpKind>(k))) return static_cast<OpKind>(k);
  }
  throw ConfigError("gradcheck: unknown op '" + name + "'");
}

struct ComposedSetup {
  TokenFeatures scene;
  TokenFeatures text;
  std::vector<DenseArray> leaves;
  std::size_t batch = 0;
};

ComposedSetup random_composed(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> n_dist(1, 6);
  std::uniform_int_distribution<std::size_t> d_f_dist(2, 6);
  std::uniform_int_distribution<std::size_t> d_c_dist(1, 8);
  std::uniform_int_distribution<std::size_t> k_dist(2, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ComposedSetup setup;
  const std::size_t d_f = d_f_dist(rng);
  const std::size_t d_c = 2 * d_c_dist(rng);  // even, <= 16
  setup.batch = k_dist(rng);

  setup.scene.modality = Modality::pointcloud;
  setup.scene.tokens = random_array(rng, {n_dist(rng), d_f}, -1.0, 1.0);
  for (std::size_t i = 0; i < setup.scene.token_count(); ++i) {
    setup.scene.centroids.push_back({unit(rng), unit(rng)});
  }
  setup.text.modality = Modality::text;
  setup.text.tokens = random_array(rng, {n_dist(rng), d_f}, -1.0, 1.0);

  const DapParams params = init_dap_params(d_f, d_c, rng());
  for (const DenseArray* a : params.arrays()) setup.leaves.push_back(*a);
  return setup;
}

DapParamVars vars_from_leaves(const std::vector<Var>& leaves) {
  DapParamVars vars;
  vars.pointcloud = {leaves[0], leaves[1], leaves[2], leaves[3], leaves[4], leaves[5]};
  vars.text = {leaves[6], leaves[7], leaves[8], leaves[9], leaves[10], leaves[11]};
  return vars;
}

}  // namespace

GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t op_configs,
                              std::size_t composed_configs, const std::string& corrupt_op) {
  const std::optional<OpKind> corrupt = op_from_name(corrupt_op);
  GradCheckReport report;
  report.tolerance = kTolerance;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dim(1, 5);

  auto sweep = [&](const std::string& name, std::size_t configs, double abs_floor,
                   const std::function<double(std::mt19937_64&)>& one) {
    GradCheckLine line;
    line.name = name;
    line.configs = configs;
    for (std::size_t i = 0; i < configs; ++i) {
      line.worst_rel_err = std::max(line.worst_rel_err, one(rng));
    }
    line.pass = line.worst_rel_err <= kTolerance;
    report.lines.push_back(line);
    (void)abs_floor;
  };

  sweep("matmul", op_configs, 0.0, [&](std::mt19937_64& r) {
    const std::size_t n = dim(r), m = dim(r), p = dim(r);
    const bool matvec = (r() & 1u) != 0;
    std::vector<DenseArray> params{random_array(r, {n, m}, -1.0, 1.0),
                                   matvec ? random_array(r, {m}, -1.0, 1.0)
                                          : random_array(r, {m, p}, -1.0, 1.0)};
    return check_once(
        [](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.matmul(v[0], v[1])); },
        params, corrupt, 0.0);
  });

  sweep("transpose", op_configs, 0.0, [&](std::mt19937_64& r) {
    return check_once(
        [](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.transpose(v[0])); },
        {random_array(r, {dim(r), dim(r)}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("add", op_configs, 0.0, [&](std::mt19937_64& r) {
    const std::size_t n = dim(r), m = dim(r);
    const bool broadcast = (r() & 1u) != 0;
    std::vector<DenseArray> params{random_array(r, {n, m}, -1.0, 1.0),
                                   broadcast ? random_array(r, {m}, -1.0, 1.0)
                                             : random_array(r, {n, m}, -1.0, 1.0)};
    return check_once(
        [](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.add(v[0], v[1])); },
        params, corrupt, 0.0);
  });

  sweep("subtract", op_configs, 0.0, [&](std::mt19937_64& r) {
    const std::size_t n = dim(r), m = dim(r);
    return check_once(
        [](Graph& g, const std::vector<Var>& v) {
          return weighted_sum(g, g.subtract(v[0], v[1]));
        },
        {random_array(r, {n, m}, -1.0, 1.0), random_array(r, {n, m}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("hadamard", op_configs, 0.0, [&](std::mt19937_64& r) {
    const std::size_t n = dim(r);
    return check_once(
        [](Graph& g, const std::vector<Var>& v) {
          return weighted_sum(g, g.hadamard(v[0], v[1]));
        },
        {random_array(r, {n}, -1.0, 1.0), random_array(r, {n}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("scale", op_configs, 0.0, [&](std::mt19937_64& r) {
    std::uniform_real_distribution<double> factor(-3.0, 3.0);
    const double c = factor(r);
    return check_once(
        [c](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.scale(v[0], c)); },
        {random_array(r, {dim(r), dim(r)}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("log", op_configs, 0.0, [&](std::mt19937_64& r) {
    return check_once(
        [](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.log(v[0])); },
        {random_array(r, {dim(r)}, 0.2, 2.0)}, corrupt, 0.0);
  });

  sweep("log1m", op_configs, 0.0, [&](std::mt19937_64& r) {
    return check_once(
        [](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.log1m(v[0])); },
        {random_array(r, {dim(r)}, -1.0, 0.8)}, corrupt, 0.0);
  });

  sweep("pow", op_configs, 0.0, [&](std::mt19937_64& r) {
    std::uniform_real_distribution<double> expo(0.3, 3.0);
    const double c = expo(r);
    return check_once(
        [c](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.pow(v[0], c)); },
        {random_array(r, {dim(r)}, 0.2, 2.0)}, corrupt, 0.0);
  });

  sweep("softmax", op_configs, 0.0, [&](std::mt19937_64& r) {
    const std::size_t n = dim(r), m = dim(r);
    const std::size_t axis = (r() & 1u);
    return check_once(
        [axis](Graph& g, const std::vector<Var>& v) {
          return weighted_sum(g, g.softmax(v[0], axis));
        },
        {random_array(r, {n, m}, -3.0, 3.0)}, corrupt, 0.0);
  });

  sweep("mean_over_tokens", op_configs, 0.0, [&](std::mt19937_64& r) {
    return check_once(
        [](Graph& g, const std::vector<Var>& v) {
          return weighted_sum(g, g.mean_over_tokens(v[0]));
        },
        {random_array(r, {dim(r), dim(r)}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("sum", op_configs, 0.0, [&](std::mt19937_64& r) {
    return check_once([](Graph& g, const std::vector<Var>& v) { return g.sum(v[0]); },
                      {random_array(r, {dim(r), dim(r)}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("l2_normalize", op_configs, 0.0, [&](std::mt19937_64& r) {
    return check_once(
        [](Graph& g, const std::vector<Var>& v) { return weighted_sum(g, g.l2_normalize(v[0])); },
        {random_array(r, {dim(r)}, 0.5, 2.0)}, corrupt, 0.0);
  });

  sweep("tile_columns", op_configs, 0.0, [&](std::mt19937_64& r) {
    const std::size_t count = dim(r);
    return check_once(
        [count](Graph& g, const std::vector<Var>& v) {
          return weighted_sum(g, g.tile_columns(v[0], count));
        },
        {random_array(r, {dim(r)}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("stack_rows", op_configs, 0.0, [&](std::mt19937_64& r) {
    const std::size_t m = dim(r);
    return check_once(
        [](Graph& g, const std::vector<Var>& v) {
          return weighted_sum(g, g.stack_rows({v[0], v[1]}));
        },
        {random_array(r, {m}, -1.0, 1.0), random_array(r, {m}, -1.0, 1.0)}, corrupt, 0.0);
  });

  sweep("clamp_max", op_configs, 0.0, [&](std::mt19937_64& r) {
    return check_once(
        [](Graph& g, const std::vector<Var>& v) {
          return weighted_sum(g, g.clamp_max(v[0], 10.0));
        },
        {random_array(r, {dim(r), dim(r)}, -1.0, 1.0)}, corrupt, 0.0);
  });

  // composed DAP graph: dot of a point-cloud and a text embedding
  sweep("dap_embedding", composed_configs, kComposedFloor, [&](std::mt19937_64& r) {
    const ComposedSetup setup = random_composed(r);
    return check_once(
        [&setup](Graph& g, const std::vector<Var>& leaves) {
          const DapParamVars vars = vars_from_leaves(leaves);
          const Var p = embed_in_graph(g, setup.scene, vars, {}).embedding;
          const Var t = embed_in_graph(g, setup.text, vars, {}).embedding;
          return g.sum(g.hadamard(p, t));
        },
        setup.leaves, corrupt, kComposedFloor);
  });

  // composed DAP + each loss over a K-pair batch built from jittered copies
  for (LossKind kind : {LossKind::contrastive, LossKind::complementary, LossKind::rnc}) {
    sweep(std::string("dap_") + loss_name(kind) + "_loss", composed_configs, kComposedFloor,
          [&, kind](std::mt19937_64& r) {
            const ComposedSetup base = random_composed(r);
            std::vector<TokenFeatures> scenes, texts;
            // moderate spread and temperature keep S away from saturation,
            // where log1m curvature dominates the finite-difference error
            std::normal_distribution<double> jitter(0.0, 0.25);
            for (std::size_t i = 0; i < base.batch; ++i) {
              TokenFeatures s = base.scene;
              TokenFeatures t = base.text;
              for (double& x : s.tokens.values) x += jitter(r);
              for (double& x : t.tokens.values) x += jitter(r);
              scenes.push_back(std::move(s));
              texts.push_back(std::move(t));
            }
            DenseArray y = DenseArray::zeros({base.batch, base.batch});
            for (std::size_t i = 0; i < base.batch; ++i) y.at(i, i) = 1.0;
            LossConfig config;
            config.kind = kind;
            config.alpha = 2.0;
            config.tau = 0.2;

            return check_once(
                [&](Graph& g, const std::vector<Var>& leaves) {
                  const DapParamVars vars = vars_from_leaves(leaves);
                  std::vector<Var> p_rows, t_rows;
                  for (std::size_t i = 0; i < base.batch; ++i) {
                    p_rows.push_back(embed_in_graph(g, scenes[i], vars, {}).embedding);
                    t_rows.push_back(embed_in_graph(g, texts[i], vars, {}).embedding);
                  }
                  const Var p = g.stack_rows(p_rows);
                  const Var t = g.stack_rows(t_rows);
                  const Var s_pt = similarity_graph(g, p, t, config.tau, true);
                  const Var s_tp = similarity_graph(g, t, p, config.tau, true);
                  return loss_graph(g, s_pt, s_tp, y, config);
                },
                base.leaves, corrupt, kComposedFloor);
          });
  }

  report.all_pass = true;
  for (const GradCheckLine& line : report.lines) {
    if (!line.pass) report.all_pass = false;
  }
  return report;
}

}  // namespace ptmatch
