#include "ptmatch/dap.hpp"

#include <cmath>
#include <random>

#include "ptmatch/errors.hpp"

namespace ptmatch {

const char* modality_name(Modality m) {
  return m == Modality::pointcloud ? "pointcloud" : "text";
}

void TokenFeatures::validate() const {
  if (tokens.rank() != 2) {
    throw DimensionError("TokenFeatures: tokens must be n x d_f, got " + tokens.shape_str());
  }
  tokens.require_finite("TokenFeatures");
  if (modality == Modality::pointcloud) {
    if (centroids.size() != tokens.rows()) {
      throw DimensionError("TokenFeatures: " + std::to_string(centroids.size()) +
                           " centroids for " + std::to_string(tokens.rows()) + " patches");
    }
  } else if (!centroids.empty()) {
    throw DimensionError("TokenFeatures: text samples must not carry centroids");
  }
}

std::array<const DenseArray*, DapParams::kArrayCount> DapParams::arrays() const {
  return {&pointcloud.w_q, &pointcloud.b_q, &pointcloud.w_v, &pointcloud.b_v,
          &pointcloud.token_key, &pointcloud.feature_key,
          &text.w_q, &text.b_q, &text.w_v, &text.b_v, &text.token_key, &text.feature_key};
}

std::array<DenseArray*, DapParams::kArrayCount> DapParams::arrays() {
  return {&pointcloud.w_q, &pointcloud.b_q, &pointcloud.w_v, &pointcloud.b_v,
          &pointcloud.token_key, &pointcloud.feature_key,
          &text.w_q, &text.b_q, &text.w_v, &text.b_v, &text.token_key, &text.feature_key};
}

std::array<std::string, DapParams::kArrayCount> DapParams::array_names() {
  return {"pointcloud.w_q", "pointcloud.b_q", "pointcloud.w_v", "pointcloud.b_v",
          "pointcloud.token_key", "pointcloud.feature_key",
          "text.w_q", "text.b_q", "text.w_v", "text.b_v", "text.token_key", "text.feature_key"};
}

DapParams init_dap_params(std::size_t d_f, std::size_t d_c, std::uint64_t seed) {
  if (d_f == 0 || d_c == 0) {
    throw ConfigError("init_dap_params: dimensions must be nonzero");
  }
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(d_f + d_c));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  std::normal_distribution<double> gauss(0.0, 0.02);

  auto weight = [&] {
    DenseArray w = DenseArray::zeros({d_f, d_c});
    for (double& x : w.values) x = uniform(rng);
    return w;
  };
  auto make_modality = [&] {
    ModalityParams p;
    p.w_q = weight();
    p.b_q = DenseArray::zeros({d_c});
    p.w_v = weight();
    p.b_v = DenseArray::zeros({d_c});
    p.token_key = DenseArray::zeros({d_c});
    for (double& x : p.token_key.values) x = gauss(rng);
    p.feature_key = DenseArray::zeros({d_c, d_c});
    for (double& x : p.feature_key.values) x = gauss(rng);
    return p;
  };
  DapParams params;
  params.pointcloud = make_modality();
  params.text = make_modality();
  return params;
}

std::array<Var, DapParams::kArrayCount> DapParamVars::all() const {
  return {pointcloud.w_q, pointcloud.b_q, pointcloud.w_v, pointcloud.b_v,
          pointcloud.token_key, pointcloud.feature_key,
          text.w_q, text.b_q, text.w_v, text.b_v, text.token_key, text.feature_key};
}

DapParamVars register_dap_params(Graph& g, const DapParams& params) {
  auto reg = [&](const ModalityParams& p) {
    ModalityParamVars v;
    v.w_q = g.leaf(p.w_q);
    v.b_q = g.leaf(p.b_q);
    v.w_v = g.leaf(p.w_v);
    v.b_v = g.leaf(p.b_v);
    v.token_key = g.leaf(p.token_key);
    v.feature_key = g.leaf(p.feature_key);
    return v;
  };
  DapParamVars vars;
  vars.pointcloud = reg(params.pointcloud);
  vars.text = reg(params.text);
  return vars;
}

EmbedNodes embed_in_graph(Graph& g, const TokenFeatures& sample, const DapParamVars& vars,
                          const DapConfig& config) {
  sample.validate();
  const ModalityParamVars& mp = vars.modality(sample.modality);
  const std::size_t n = sample.token_count();
  const std::size_t d_c = g.value(mp.w_q).cols();
  if (sample.feature_dim() != g.value(mp.w_q).rows()) {
    throw ConfigError("embed: sample feature dim " + std::to_string(sample.feature_dim()) +
                      " does not match parameter d_f " +
                      std::to_string(g.value(mp.w_q).rows()));
  }

  const Var z = g.constant(sample.tokens);
  const Var q = g.add(g.matmul(z, mp.w_q), mp.b_q);
  const Var v = g.add(g.matmul(z, mp.w_v), mp.b_v);

  Var q_token = q;
  if (sample.modality == Modality::pointcloud && config.use_position_embedding) {
    q_token = g.add(q, g.constant(patch_position_embedding(sample.centroids, n, d_c)));
  }

  EmbedNodes out;
  if (config.use_token_attention) {
    out.token_attention = g.softmax(g.matmul(q_token, mp.token_key), 0);
    out.token_attention_tiled = g.tile_columns(out.token_attention, d_c);
  }
  if (config.use_feature_attention) {
    const std::size_t axis = config.feature_softmax_axis == SoftmaxAxis::token ? 0 : 1;
    out.feature_attention = g.softmax(g.matmul(q, g.transpose(mp.feature_key)), axis);
  }

  if (out.token_attention_tiled.valid() && out.feature_attention.valid()) {
    out.dual_attention = g.hadamard(out.token_attention_tiled, out.feature_attention);
  } else if (out.token_attention_tiled.valid()) {
    out.dual_attention = out.token_attention_tiled;
  } else if (out.feature_attention.valid()) {
    out.dual_attention = out.feature_attention;
  }

  const Var weighted = out.dual_attention.valid() ? g.hadamard(out.dual_attention, v) : v;
  out.embedding = g.l2_normalize(g.mean_over_tokens(weighted));
  return out;
}

DenseArray embed(const TokenFeatures& sample, const DapParams& params, const DapConfig& config) {
  Graph g;
  const DapParamVars vars = register_dap_params(g, params);
  return g.value(embed_in_graph(g, sample, vars, config).embedding);
}

Projection project(const TokenFeatures& sample, const DapParams& params) {
  sample.validate();
  const ModalityParams& mp = params.modality(sample.modality);
  if (sample.feature_dim() != mp.w_q.rows()) {
    throw ConfigError("project: sample feature dim " + std::to_string(sample.feature_dim()) +
                      " does not match parameter d_f " + std::to_string(mp.w_q.rows()));
  }
  Graph g;
  const Var z = g.constant(sample.tokens);
  const Var q = g.add(g.matmul(z, g.constant(mp.w_q)), g.constant(mp.b_q));
  const Var v = g.add(g.matmul(z, g.constant(mp.w_v)), g.constant(mp.b_v));
  return {g.value(q), g.value(v)};
}

DenseArray token_attention(const DenseArray& q, const DenseArray* position,
                           const DenseArray& token_key) {
  Graph g;
  Var logits_in = g.constant(q);
  if (position != nullptr) logits_in = g.add(logits_in, g.constant(*position));
  return g.value(g.softmax(g.matmul(logits_in, g.constant(token_key)), 0));
}

DenseArray feature_attention(const DenseArray& q, const DenseArray& feature_key,
                             SoftmaxAxis axis) {
  Graph g;
  const Var logits = g.matmul(g.constant(q), g.transpose(g.constant(feature_key)));
  return g.value(g.softmax(logits, axis == SoftmaxAxis::token ? 0 : 1));
}

DenseArray dual_aggregate(const DenseArray& token_map, const DenseArray& feature_map,
                          const DenseArray& v) {
  Graph g;
  const Var a = g.hadamard(g.constant(token_map), g.constant(feature_map));
  return g.value(g.l2_normalize(g.mean_over_tokens(g.hadamard(a, g.constant(v)))));
}

AttentionMaps attention_maps(const TokenFeatures& sample, const DapParams& params,
                             const DapConfig& config) {
  Graph g;
  const DapParamVars vars = register_dap_params(g, params);
  const EmbedNodes nodes = embed_in_graph(g, sample, vars, config);
  const std::size_t n = sample.token_count();
  const std::size_t d_c = params.common_dim();

  AttentionMaps maps;
  maps.token_vec = nodes.token_attention.valid()
                       ? g.value(nodes.token_attention)
                       : DenseArray::full({n}, 1.0 / static_cast<double>(n));
  maps.token_mat = nodes.token_attention_tiled.valid() ? g.value(nodes.token_attention_tiled)
                                                       : DenseArray::full({n, d_c}, 1.0);
  maps.feature_mat = nodes.feature_attention.valid() ? g.value(nodes.feature_attention)
                                                     : DenseArray::full({n, d_c}, 1.0);
  maps.dual_mat = nodes.dual_attention.valid() ? g.value(nodes.dual_attention)
                                               : DenseArray::full({n, d_c}, 1.0);
  return maps;
}

}  // namespace ptmatch
