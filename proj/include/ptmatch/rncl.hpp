#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ptmatch/array.hpp"
#include "ptmatch/graph.hpp"

namespace ptmatch {

// Softmax saturation guard applied before any log(1 - S) term.
inline constexpr double kSimilarityCap = 1.0 - 1e-12;

enum class Direction { p2t, t2p };

const char* direction_name(Direction d);

// Row-stochastic batch similarity matrix at temperature tau. For p2t, rows
// are indexed by point clouds; for t2p, by texts.
struct SimilarityMatrix {
  DenseArray s;  // K x K, entries in (0, 1), rows sum to 1
  Direction direction = Direction::p2t;
  double tau = 0.05;
};

enum class LossKind { contrastive, complementary, rnc };

const char* loss_name(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::rnc;
  double alpha = 2.0;  // controls where the per-pair gradient changes sign
  double tau = 0.05;

  void validate() const;
};

// Row-softmax of the pairwise dot products divided by tau. Inputs must be
// unit-norm embeddings of equal count; entries are clamped to the similarity
// cap so downstream log(1 - S) terms stay finite.
SimilarityMatrix softmax_similarity(const std::vector<DenseArray>& p_embeddings,
                                    const std::vector<DenseArray>& t_embeddings, double tau,
                                    Direction direction);

// Symmetric positive-pair cross-entropy; requires exactly one positive per
// row and per column of y.
double contrastive_loss(const SimilarityMatrix& s_pt, const SimilarityMatrix& s_tp,
                        const DenseArray& y);

// Negative-pair-only loss: -(1/K) sum (1-y) log(1-S), both directions.
double complementary_loss(const SimilarityMatrix& s_pt, const SimilarityMatrix& s_tp,
                          const DenseArray& y);

// Complementary loss reweighted by (1-S)^(1/alpha), both directions.
double rnc_loss(const SimilarityMatrix& s_pt, const SimilarityMatrix& s_tp, const DenseArray& y,
                double alpha);

struct PerPairLoss {
  double loss;  // -(1-S)^(1/alpha) log(1-S)
  double grad;  // d loss / dS = (1/alpha) (1-S)^((1-alpha)/alpha) (log(1-S) + alpha)
};
// Per-pair robust negative term with its analytic derivative. Defined on
// S in [0, 1); the derivative is positive below the sign-change threshold
// (clean negatives pushed apart) and negative above it (reverse direction).
PerPairLoss rnc_per_pair(double s, double alpha);

struct ThresholdReport {
  double alpha = 0.0;
  double s_star = 0.0;               // bisected sign change of the FD gradient
  double cand_1m_exp_neg_alpha = 0.0;   // 1 - e^{-alpha}
  double cand_1m_exp_1m_alpha = 0.0;    // 1 - e^{1-alpha}
  enum class Match { exp_neg_alpha, exp_one_minus_alpha, neither } match = Match::neither;
};

// Locates the similarity where the per-pair gradient changes sign, using
// finite differences of the loss values as the oracle (independent of the
// analytic derivative), then reports which closed-form candidate it matches
// within 1e-6. Throws AnalysisError when no sign change exists on (0, 1).
ThresholdReport find_threshold(double alpha, double tol);

// Bisection on a bracketing interval; fn(lo) and fn(hi) must differ in sign.
double bisect_sign_change(const std::function<double(double)>& fn, double lo, double hi,
                          double tol);

// Graph builders shared by the trainer and the composed gradient checks.
// Row-softmax similarity of stacked embeddings; clamps when requested.
Var similarity_graph(Graph& g, Var row_embeddings, Var col_embeddings, double tau, bool clamp);
// Scalar loss node; `y` is the K x K pair-label matrix for the p2t direction.
Var loss_graph(Graph& g, Var s_pt, Var s_tp, const DenseArray& y, const LossConfig& config);

}  // namespace ptmatch
