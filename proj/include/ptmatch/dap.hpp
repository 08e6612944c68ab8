#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ptmatch/array.hpp"
#include "ptmatch/graph.hpp"
#include "ptmatch/posenc.hpp"

namespace ptmatch {

enum class Modality { pointcloud, text };

const char* modality_name(Modality m);

// One sample's token-feature matrix: point-cloud patches or text words.
// Centroids are present exactly for the point-cloud modality.
struct TokenFeatures {
  DenseArray tokens;  // n x d_f
  Modality modality = Modality::text;
  std::vector<Centroid> centroids;

  std::size_t token_count() const { return tokens.rows(); }
  std::size_t feature_dim() const { return tokens.cols(); }
  void validate() const;
};

// Per-modality projection weights plus the learnable token-level and
// feature-level generic keys shared across the whole dataset.
struct ModalityParams {
  DenseArray w_q;          // d_f x d_c
  DenseArray b_q;          // d_c
  DenseArray w_v;          // d_f x d_c
  DenseArray b_v;          // d_c
  DenseArray token_key;    // d_c
  DenseArray feature_key;  // d_c x d_c
};

struct DapParams {
  ModalityParams pointcloud;
  ModalityParams text;

  static constexpr std::size_t kArrayCount = 12;
  std::array<const DenseArray*, kArrayCount> arrays() const;
  std::array<DenseArray*, kArrayCount> arrays();
  static std::array<std::string, kArrayCount> array_names();

  std::size_t feature_dim() const { return pointcloud.w_q.rows(); }
  std::size_t common_dim() const { return pointcloud.w_q.cols(); }
  const ModalityParams& modality(Modality m) const {
    return m == Modality::pointcloud ? pointcloud : text;
  }
};

// Projection weights uniform in +-sqrt(6/(d_f+d_c)), keys Gaussian with
// sigma 0.02 (attention starts near uniform), biases zero.
DapParams init_dap_params(std::size_t d_f, std::size_t d_c, std::uint64_t seed);

enum class SoftmaxAxis { token, feature };

struct DapConfig {
  bool use_token_attention = true;
  bool use_feature_attention = true;
  bool use_position_embedding = true;
  SoftmaxAxis feature_softmax_axis = SoftmaxAxis::token;
};

// Trained model bundle: parameters plus the structural options they were
// trained with.
struct Model {
  DapParams params;
  DapConfig config;
  std::size_t d_f = 0;
  std::size_t d_c = 0;
};

// Graph-side handles for the registered parameter leaves, in the canonical
// array order (pointcloud block first, then text).
struct ModalityParamVars {
  Var w_q, b_q, w_v, b_v, token_key, feature_key;
};
struct DapParamVars {
  ModalityParamVars pointcloud;
  ModalityParamVars text;
  std::array<Var, DapParams::kArrayCount> all() const;
  const ModalityParamVars& modality(Modality m) const {
    return m == Modality::pointcloud ? pointcloud : text;
  }
};

DapParamVars register_dap_params(Graph& g, const DapParams& params);

// Nodes produced while embedding one sample. Attention handles are invalid
// when the corresponding mechanism is disabled in the config.
struct EmbedNodes {
  Var embedding;               // unit-norm d_c vector
  Var token_attention;         // n vector, sums to 1
  Var token_attention_tiled;   // n x d_c, every column equals token_attention
  Var feature_attention;       // n x d_c
  Var dual_attention;          // n x d_c weight applied to V
};

EmbedNodes embed_in_graph(Graph& g, const TokenFeatures& sample, const DapParamVars& vars,
                          const DapConfig& config);

// Value-level composite of project -> position embedding -> dual attention ->
// aggregate; builds a throwaway graph internally.
DenseArray embed(const TokenFeatures& sample, const DapParams& params,
                 const DapConfig& config = {});

struct Projection {
  DenseArray q;
  DenseArray v;
};
Projection project(const TokenFeatures& sample, const DapParams& params);

// Token-level attention over n tokens; `position` may be null (text side).
DenseArray token_attention(const DenseArray& q, const DenseArray* position,
                           const DenseArray& token_key);

DenseArray feature_attention(const DenseArray& q, const DenseArray& feature_key,
                             SoftmaxAxis axis = SoftmaxAxis::token);

// A = token_map (.) feature_map applied to V, pooled over tokens, normalized.
DenseArray dual_aggregate(const DenseArray& token_map, const DenseArray& feature_map,
                          const DenseArray& v);

// Forward attention maps of one sample. With token attention disabled the
// token vector is reported uniform and the tiled map is all ones (the
// multiplier the pipeline actually applies); same idea for the feature map.
struct AttentionMaps {
  DenseArray token_vec;    // n
  DenseArray token_mat;    // n x d_c
  DenseArray feature_mat;  // n x d_c
  DenseArray dual_mat;     // n x d_c
};
AttentionMaps attention_maps(const TokenFeatures& sample, const DapParams& params,
                             const DapConfig& config = {});

}  // namespace ptmatch
