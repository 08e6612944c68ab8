#include "ptmatch/rncl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ptmatch/errors.hpp"

namespace ptmatch {

namespace {

void validate_similarity(const SimilarityMatrix& sm, const char* what) {
  const DenseArray& s = sm.s;
  if (s.rank() != 2 || s.rows() != s.cols()) {
    throw DimensionError(std::string(what) + ": similarity must be K x K, got " + s.shape_str());
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(s.values[i] > 0.0) || s.values[i] >= 1.0) {
      throw DomainError(std::string(what) + ": similarity outside (0, 1) at index " +
                        std::to_string(i));
    }
  }
}

void validate_labels(const DenseArray& y, std::size_t k, const char* what) {
  if (y.rank() != 2 || y.rows() != k || y.cols() != k) {
    throw DimensionError(std::string(what) + ": labels must be " + std::to_string(k) + " x " +
                         std::to_string(k) + ", got " + y.shape_str());
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.values[i] != 0.0 && y.values[i] != 1.0) {
      throw LabelError(std::string(what) + ": labels must be binary, found " +
                       std::to_string(y.values[i]));
    }
  }
}

DenseArray transpose_labels(const DenseArray& y) {
  const std::size_t k = y.rows();
  DenseArray t = DenseArray::zeros({k, k});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) t.at(j, i) = y.at(i, j);
  }
  return t;
}

double scalar_loss(const SimilarityMatrix& s_pt, const SimilarityMatrix& s_tp,
                   const DenseArray& y, const LossConfig& config, const char* what) {
  validate_similarity(s_pt, what);
  validate_similarity(s_tp, what);
  if (!s_pt.s.same_shape(s_tp.s)) {
    throw DimensionError(std::string(what) + ": direction shapes disagree " +
                         s_pt.s.shape_str() + " vs " + s_tp.s.shape_str());
  }
  validate_labels(y, s_pt.s.rows(), what);
  Graph g;
  return g.value(loss_graph(g, g.constant(s_pt.s), g.constant(s_tp.s), y, config)).values[0];
}

// Loss value alone, used as the finite-difference oracle for the threshold.
double rnc_loss_value(double s, double alpha) {
  return -std::pow(1.0 - s, 1.0 / alpha) * std::log1p(-s);
}

}  // namespace

const char* direction_name(Direction d) { return d == Direction::p2t ? "p2t" : "t2p"; }

const char* loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::contrastive: return "contrastive";
    case LossKind::complementary: return "complementary";
    case LossKind::rnc: return "rnc";
  }
  return "?";
}

void LossConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("loss: alpha must be > 0");
  if (!(tau > 0.0)) throw ConfigError("loss: tau must be > 0");
}

SimilarityMatrix softmax_similarity(const std::vector<DenseArray>& p_embeddings,
                                    const std::vector<DenseArray>& t_embeddings, double tau,
                                    Direction direction) {
  if (!(tau > 0.0)) throw ConfigError("softmax_similarity: tau must be > 0");
  if (p_embeddings.size() != t_embeddings.size() || p_embeddings.empty()) {
    throw DimensionError("softmax_similarity: batch sizes disagree or empty");
  }
  auto check_unit = [](const std::vector<DenseArray>& embs, const char* side) {
    for (std::size_t i = 0; i < embs.size(); ++i) {
      if (embs[i].rank() != 1) {
        throw DimensionError(std::string("softmax_similarity: ") + side + " embedding " +
                             std::to_string(i) + " is not a vector");
      }
      if (std::abs(l2_norm(embs[i].values) - 1.0) > 1e-6) {
        throw DomainError(std::string("softmax_similarity: ") + side + " embedding " +
                          std::to_string(i) + " is not unit-norm");
      }
    }
  };
  check_unit(p_embeddings, "pointcloud");
  check_unit(t_embeddings, "text");

  const std::vector<DenseArray>& rows =
      direction == Direction::p2t ? p_embeddings : t_embeddings;
  const std::vector<DenseArray>& cols =
      direction == Direction::p2t ? t_embeddings : p_embeddings;

  Graph g;
  std::vector<Var> row_vars, col_vars;
  for (const DenseArray& e : rows) row_vars.push_back(g.constant(e));
  for (const DenseArray& e : cols) col_vars.push_back(g.constant(e));
  const Var s = similarity_graph(g, g.stack_rows(row_vars), g.stack_rows(col_vars), tau, true);

  SimilarityMatrix out;
  out.s = g.value(s);
  out.direction = direction;
  out.tau = tau;
  return out;
}

Var similarity_graph(Graph& g, Var row_embeddings, Var col_embeddings, double tau, bool clamp) {
  if (!(tau > 0.0)) throw ConfigError("similarity_graph: tau must be > 0");
  const Var logits = g.scale(g.matmul(row_embeddings, g.transpose(col_embeddings)), 1.0 / tau);
  const Var s = g.softmax(logits, 1);
  return clamp ? g.clamp_max(s, kSimilarityCap) : s;
}

Var loss_graph(Graph& g, Var s_pt, Var s_tp, const DenseArray& y, const LossConfig& config) {
  config.validate();
  const std::size_t k = g.value(s_pt).rows();
  const double inv_k = -1.0 / static_cast<double>(k);
  const DenseArray y_t = transpose_labels(y);

  auto one_minus = [&](const DenseArray& m) {
    DenseArray out = m;
    for (double& x : out.values) x = 1.0 - x;
    return out;
  };

  // Positive entries are zeroed before any log so that they contribute an
  // exact 0 and never touch the log domain checks.
  auto direction_term = [&](Var s, const DenseArray& labels) -> Var {
    const Var mask_neg = g.constant(one_minus(labels));
    switch (config.kind) {
      case LossKind::contrastive: {
        // log of S on positives, log 1 = 0 elsewhere
        const Var picked = g.add(g.hadamard(s, g.constant(labels)), mask_neg);
        return g.scale(g.sum(g.log(picked)), inv_k);
      }
      case LossKind::complementary: {
        const Var masked = g.hadamard(s, mask_neg);
        return g.scale(g.sum(g.log1m(masked)), inv_k);
      }
      case LossKind::rnc: {
        const Var masked = g.hadamard(s, mask_neg);
        const Var ones = g.constant(DenseArray::full(g.value(masked).shape, 1.0));
        const Var weight = g.pow(g.subtract(ones, masked), 1.0 / config.alpha);
        return g.scale(g.sum(g.hadamard(weight, g.log1m(masked))), inv_k);
      }
    }
    throw ConfigError("loss_graph: unknown loss kind");
  };

  if (config.kind == LossKind::contrastive) {
    // in-batch pairing requires exactly one positive per row and per column
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t row_pos = 0, col_pos = 0;
      for (std::size_t j = 0; j < k; ++j) {
        if (y.at(i, j) == 1.0) ++row_pos;
        if (y.at(j, i) == 1.0) ++col_pos;
      }
      if (row_pos != 1 || col_pos != 1) {
        throw LabelError("contrastive_loss: row/column " + std::to_string(i) +
                         " must have exactly one positive");
      }
    }
  }
  return g.add(direction_term(s_pt, y), direction_term(s_tp, y_t));
}

double contrastive_loss(const SimilarityMatrix& s_pt, const SimilarityMatrix& s_tp,
                        const DenseArray& y) {
  LossConfig config;
  config.kind = LossKind::contrastive;
  return scalar_loss(s_pt, s_tp, y, config, "contrastive_loss");
}

double complementary_loss(const SimilarityMatrix& s_pt, const SimilarityMatrix& s_tp,
                          const DenseArray& y) {
  LossConfig config;
  config.kind = LossKind::complementary;
  return scalar_loss(s_pt, s_tp, y, config, "complementary_loss");
}

double rnc_loss(const SimilarityMatrix& s_pt, const SimilarityMatrix& s_tp, const DenseArray& y,
                double alpha) {
  LossConfig config;
  config.kind = LossKind::rnc;
  config.alpha = alpha;
  return scalar_loss(s_pt, s_tp, y, config, "rnc_loss");
}

PerPairLoss rnc_per_pair(double s, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("rnc_per_pair: alpha must be > 0");
  if (!(s >= 0.0) || s >= 1.0) {
    throw DomainError("rnc_per_pair: similarity " + std::to_string(s) + " outside [0, 1)");
  }
  const double log1ms = std::log1p(-s);
  PerPairLoss out;
  out.loss = -std::pow(1.0 - s, 1.0 / alpha) * log1ms;
  out.grad = (1.0 / alpha) * std::pow(1.0 - s, (1.0 - alpha) / alpha) * (log1ms + alpha);
  return out;
}

double bisect_sign_change(const std::function<double(double)>& fn, double lo, double hi,
                          double tol) {
  if (!(tol > 0.0)) throw ConfigError("bisect_sign_change: tol must be > 0");
  double f_lo = fn(lo);
  double f_hi = fn(hi);
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if ((f_lo > 0.0) == (f_hi > 0.0)) {
    throw AnalysisError("bisect_sign_change: no sign change on [" + std::to_string(lo) + ", " +
                        std::to_string(hi) + "]");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = fn(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid > 0.0) == (f_lo > 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

ThresholdReport find_threshold(double alpha, double tol) {
  if (!(alpha > 0.0)) throw ConfigError("find_threshold: alpha must be > 0");
  if (!(tol > 0.0)) throw ConfigError("find_threshold: tol must be > 0");

  // Central differences of the loss values; step shrinks near the endpoints
  // so the evaluations stay inside [0, 1).
  auto fd_grad = [alpha](double s) {
    const double h = std::min({1e-6, 0.25 * (1.0 - s), 0.25 * std::max(s, 1e-8)});
    return (rnc_loss_value(s + h, alpha) - rnc_loss_value(s - h, alpha)) / (2.0 * h);
  };

  const double lo_edge = 1e-6;
  const double hi_edge = 1.0 - 1e-8;
  const int grid = 512;
  double bracket_lo = lo_edge;
  double bracket_hi = 0.0;
  double prev_s = lo_edge;
  double prev_g = fd_grad(lo_edge);
  bool found = false;
  for (int i = 1; i <= grid; ++i) {
    const double s = lo_edge + (hi_edge - lo_edge) * static_cast<double>(i) / grid;
    const double gcur = fd_grad(s);
    if ((prev_g > 0.0) != (gcur > 0.0)) {
      bracket_lo = prev_s;
      bracket_hi = s;
      found = true;
      break;
    }
    prev_s = s;
    prev_g = gcur;
  }
  if (!found) {
    throw AnalysisError("find_threshold: gradient has no sign change on (0, 1) for alpha " +
                        std::to_string(alpha));
  }

  ThresholdReport report;
  report.alpha = alpha;
  report.s_star = bisect_sign_change(fd_grad, bracket_lo, bracket_hi, tol);
  report.cand_1m_exp_neg_alpha = 1.0 - std::exp(-alpha);
  report.cand_1m_exp_1m_alpha = 1.0 - std::exp(1.0 - alpha);

  const double da = std::abs(report.s_star - report.cand_1m_exp_neg_alpha);
  const double db = std::abs(report.s_star - report.cand_1m_exp_1m_alpha);
  const double window = std::max(1e-6, 2.0 * tol);
  if (da <= window && da <= db) {
    report.match = ThresholdReport::Match::exp_neg_alpha;
  } else if (db <= window) {
    report.match = ThresholdReport::Match::exp_one_minus_alpha;
  }
  return report;
}

}  // namespace ptmatch
