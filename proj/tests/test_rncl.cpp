#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "ptmatch/errors.hpp"
#include "ptmatch/rncl.hpp"
#include "test_util.hpp"

using namespace ptmatch;
using testutil::fd_check_graph;
using testutil::random_array;

namespace {

DenseArray identity_labels(std::size_t k) {
  DenseArray y = DenseArray::zeros({k, k});
  for (std::size_t i = 0; i < k; ++i) y.at(i, i) = 1.0;
  return y;
}

std::vector<DenseArray> random_unit_embeddings(std::mt19937_64& rng, std::size_t count,
                                               std::size_t dim) {
  std::vector<DenseArray> out;
  for (std::size_t i = 0; i < count; ++i) {
    DenseArray v = random_array(rng, {dim}, -1.0, 1.0);
    const double norm = l2_norm(v.values);
    REQUIRE(norm > 1e-3);
    for (double& x : v.values) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

SimilarityMatrix make_similarity(const DenseArray& s, Direction d) {
  SimilarityMatrix out;
  out.s = s;
  out.direction = d;
  out.tau = 1.0;
  return out;
}

}  // namespace

TEST_CASE("softmax similarity") {
  SUBCASE("equal dot products give uniform rows") {
    const DenseArray e = DenseArray::from_vector({1.0, 0.0});
    const std::vector<DenseArray> p{e, e, e, e};
    const SimilarityMatrix s = softmax_similarity(p, p, 0.07, Direction::p2t);
    for (double v : s.s.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("orthogonal pair at tau = 1") {
    const std::vector<DenseArray> p{DenseArray::from_vector({1.0, 0.0}),
                                    DenseArray::from_vector({0.0, 1.0})};
    const SimilarityMatrix s = softmax_similarity(p, p, 1.0, Direction::p2t);
    const double expected = std::exp(1.0) / (std::exp(1.0) + 1.0);
    CHECK(expected == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(s.s.at(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(s.s.at(1, 1) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("rows sum to one on random batches") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = random_unit_embeddings(rng, 6, 8);
      const auto t = random_unit_embeddings(rng, 6, 8);
      for (Direction d : {Direction::p2t, Direction::t2p}) {
        const SimilarityMatrix s = softmax_similarity(p, t, 0.05, d);
        for (std::size_t i = 0; i < 6; ++i) {
          double total = 0.0;
          for (std::size_t j = 0; j < 6; ++j) {
            const double v = s.s.at(i, j);
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            total += v;
          }
          CHECK(std::abs(total - 1.0) <= 1e-9);
        }
      }
    }
  }
  SUBCASE("temperature must be positive") {
    const std::vector<DenseArray> p{DenseArray::from_vector({1.0, 0.0})};
    CHECK_THROWS_AS(softmax_similarity(p, p, 0.0, Direction::p2t), ConfigError);
  }
  SUBCASE("non-unit embeddings rejected") {
    const std::vector<DenseArray> p{DenseArray::from_vector({2.0, 0.0})};
    CHECK_THROWS_AS(softmax_similarity(p, p, 1.0, Direction::p2t), DomainError);
  }
}

TEST_CASE("contrastive loss") {
  SUBCASE("orthogonal two-pair batch") {
    const std::vector<DenseArray> e{DenseArray::from_vector({1.0, 0.0}),
                                    DenseArray::from_vector({0.0, 1.0})};
    const SimilarityMatrix s_pt = softmax_similarity(e, e, 1.0, Direction::p2t);
    const SimilarityMatrix s_tp = softmax_similarity(e, e, 1.0, Direction::t2p);
    const double loss = contrastive_loss(s_pt, s_tp, identity_labels(2));
    CHECK(loss == doctest::Approx(0.6266).epsilon(1e-4));
    CHECK(loss ==
          doctest::Approx(-2.0 * std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-12));
  }
  SUBCASE("perfect alignment drives the loss to zero") {
    DenseArray s = DenseArray::from_matrix(2, 2, {1.0 - 1e-9, 1e-9, 1e-9, 1.0 - 1e-9});
    const double loss = contrastive_loss(make_similarity(s, Direction::p2t),
                                         make_similarity(s, Direction::t2p), identity_labels(2));
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(loss < 1e-7);
  }
  SUBCASE("loss decreases as the positive similarity grows") {
    auto loss_at = [](double diag) {
      DenseArray s = DenseArray::from_matrix(2, 2, {diag, 1.0 - diag, 1.0 - diag, diag});
      return contrastive_loss(make_similarity(s, Direction::p2t),
                              make_similarity(s, Direction::t2p), identity_labels(2));
    };
    CHECK(loss_at(0.8) < loss_at(0.7));
    CHECK(loss_at(0.7) < loss_at(0.6));
  }
  SUBCASE("row without a positive is a label error") {
    DenseArray y = DenseArray::zeros({2, 2});
    y.at(0, 0) = 1.0;  // second row has no positive
    DenseArray s = DenseArray::from_matrix(2, 2, {0.5, 0.5, 0.5, 0.5});
    CHECK_THROWS_AS(contrastive_loss(make_similarity(s, Direction::p2t),
                                     make_similarity(s, Direction::t2p), y),
                    LabelError);
  }
}

TEST_CASE("complementary loss") {
  SUBCASE("all-positive labels annihilate every term exactly") {
    DenseArray s = DenseArray::from_matrix(2, 2, {0.9, 0.1, 0.2, 0.8});
    const double loss = complementary_loss(make_similarity(s, Direction::p2t),
                                           make_similarity(s, Direction::t2p),
                                           DenseArray::full({2, 2}, 1.0));
    CHECK(loss == 0.0);
  }
  SUBCASE("frozen two-pair value") {
    DenseArray s = DenseArray::from_matrix(2, 2, {0.75, 0.25, 0.25, 0.75});
    const double loss = complementary_loss(make_similarity(s, Direction::p2t),
                                           make_similarity(s, Direction::t2p), identity_labels(2));
    CHECK(loss == doctest::Approx(0.5754).epsilon(1e-4));
    CHECK(loss == doctest::Approx(-2.0 * std::log(0.75)).epsilon(1e-12));
  }
  SUBCASE("similarity exactly one on a pair is a domain error") {
    DenseArray s = DenseArray::from_matrix(2, 2, {0.0, 1.0, 0.25, 0.75});
    s.at(0, 0) = 1e-12;
    CHECK_THROWS_AS(complementary_loss(make_similarity(s, Direction::p2t),
                                       make_similarity(s, Direction::t2p), identity_labels(2)),
                    DomainError);
  }
}

TEST_CASE("rnc per-pair loss and gradient") {
  SUBCASE("zero similarity gives zero loss for any alpha") {
    for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
      CHECK(rnc_per_pair(0.0, alpha).loss == 0.0);
    }
  }
  SUBCASE("alpha = 1 maximum located by numeric scan") {
    double best_s = 0.0, best_loss = -1.0;
    for (int i = 1; i < 200000; ++i) {
      const double s = static_cast<double>(i) / 200000.0;
      const double loss = rnc_per_pair(s, 1.0).loss;
      if (loss > best_loss) {
        best_loss = loss;
        best_s = s;
      }
    }
    CHECK(best_s == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-4));
    CHECK(best_loss == doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
  }
  SUBCASE("high similarity is in the reverse-optimization regime") {
    CHECK(rnc_per_pair(0.99, 2.0).grad < 0.0);
    const double h = 1e-7;
    const double fd =
        (rnc_per_pair(0.99 + h, 2.0).loss - rnc_per_pair(0.99 - h, 2.0).loss) / (2.0 * h);
    CHECK(fd < 0.0);
  }
  SUBCASE("analytic gradient matches finite differences across the domain") {
    for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
      for (double s = 0.05; s < 0.95; s += 0.05) {
        const double h = 1e-6;
        const double fd =
            (rnc_per_pair(s + h, alpha).loss - rnc_per_pair(s - h, alpha).loss) / (2.0 * h);
        const double an = rnc_per_pair(s, alpha).grad;
        CHECK(std::abs(fd - an) / (std::abs(fd) + std::abs(an) + 1e-12) <= 1e-6);
      }
    }
  }
  SUBCASE("domain validation") {
    CHECK_THROWS_AS(rnc_per_pair(1.0, 1.0), DomainError);
    CHECK_THROWS_AS(rnc_per_pair(-0.1, 1.0), DomainError);
    CHECK_THROWS_AS(rnc_per_pair(0.5, 0.0), ConfigError);
  }
}

TEST_CASE("rnc batch loss") {
  SUBCASE("all-positive labels give exactly zero") {
    DenseArray s = DenseArray::from_matrix(2, 2, {0.9, 0.1, 0.2, 0.8});
    CHECK(rnc_loss(make_similarity(s, Direction::p2t), make_similarity(s, Direction::t2p),
                   DenseArray::full({2, 2}, 1.0), 2.0) == 0.0);
  }
  SUBCASE("frozen two-pair value at alpha = 1") {
    DenseArray s = DenseArray::from_matrix(2, 2, {0.75, 0.25, 0.25, 0.75});
    const double loss = rnc_loss(make_similarity(s, Direction::p2t),
                                 make_similarity(s, Direction::t2p), identity_labels(2), 1.0);
    CHECK(loss == doctest::Approx(0.4315).epsilon(1e-4));
    CHECK(loss == doctest::Approx(-2.0 * 0.75 * std::log(0.75)).epsilon(1e-12));
  }
  SUBCASE("huge alpha recovers the complementary loss") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
      const auto p = random_unit_embeddings(rng, 5, 6);
      const auto t = random_unit_embeddings(rng, 5, 6);
      const SimilarityMatrix s_pt = softmax_similarity(p, t, 0.1, Direction::p2t);
      const SimilarityMatrix s_tp = softmax_similarity(p, t, 0.1, Direction::t2p);
      const DenseArray y = identity_labels(5);
      const double robust = rnc_loss(s_pt, s_tp, y, 1e6);
      const double complementary = complementary_loss(s_pt, s_tp, y);
      CHECK(std::abs(robust - complementary) <= 1e-4);
    }
  }
}

TEST_CASE("loss gradients through the similarity graph match finite differences") {
  std::mt19937_64 rng(29);
  const std::size_t k = 4, d = 6;
  const DenseArray y = identity_labels(k);
  for (LossKind kind : {LossKind::contrastive, LossKind::complementary, LossKind::rnc}) {
    std::vector<DenseArray> leaves;
    for (std::size_t i = 0; i < 2 * k; ++i) leaves.push_back(random_array(rng, {d}, -0.8, 0.8));
    auto build = [&](Graph& g, const std::vector<Var>& vars) {
      std::vector<Var> p_rows, t_rows;
      for (std::size_t i = 0; i < k; ++i) {
        p_rows.push_back(g.l2_normalize(vars[i]));
        t_rows.push_back(g.l2_normalize(vars[k + i]));
      }
      const Var p = g.stack_rows(p_rows);
      const Var t = g.stack_rows(t_rows);
      const Var s_pt = similarity_graph(g, p, t, 0.2, true);
      const Var s_tp = similarity_graph(g, t, p, 0.2, true);
      LossConfig config;
      config.kind = kind;
      config.alpha = 2.0;
      config.tau = 0.2;
      return loss_graph(g, s_pt, s_tp, y, config);
    };
    const FdResult r = fd_check_graph(build, leaves);
    CHECK(r.max_rel_err <= 1e-4);
    MESSAGE(loss_name(kind), " loss gradient worst rel err: ", r.max_rel_err);
  }
}

TEST_CASE("threshold analysis") {
  SUBCASE("alpha = 1 threshold and candidates") {
    const ThresholdReport report = find_threshold(1.0, 1e-9);
    CHECK(report.s_star == doctest::Approx(0.6321205588).epsilon(1e-6));
    CHECK(std::abs(report.s_star - report.cand_1m_exp_neg_alpha) <= 1e-6);
    CHECK(report.match == ThresholdReport::Match::exp_neg_alpha);
  }
  SUBCASE("gradient changes sign exactly once for each alpha") {
    for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
      const ThresholdReport report = find_threshold(alpha, 1e-9);
      int changes = 0;
      double prev = rnc_per_pair(1e-4, alpha).grad;
      for (int i = 1; i <= 2000; ++i) {
        const double s = static_cast<double>(i) / 2001.0;
        const double cur = rnc_per_pair(s, alpha).grad;
        if ((prev > 0.0) != (cur > 0.0)) ++changes;
        prev = cur;
      }
      CHECK(changes == 1);
      CHECK(std::abs(report.s_star - report.cand_1m_exp_neg_alpha) <= 1e-6);
      CHECK(report.match == ThresholdReport::Match::exp_neg_alpha);
      // sign pattern: positive below the threshold, negative above
      CHECK(rnc_per_pair(report.s_star * 0.5, alpha).grad > 0.0);
      CHECK(rnc_per_pair(report.s_star + 0.5 * (1.0 - report.s_star), alpha).grad < 0.0);
    }
  }
  SUBCASE("monotone function has no sign change") {
    CHECK_THROWS_AS(bisect_sign_change([](double x) { return x + 2.0; }, 0.0, 1.0, 1e-9),
                    AnalysisError);
  }
  SUBCASE("bisection recovers a known root") {
    const double root =
        bisect_sign_change([](double x) { return x * x - 2.0; }, 0.0, 2.0, 1e-12);
    CHECK(root == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
  }
}

TEST_CASE("ranking by similarity equals ranking by raw dot products") {
  std::mt19937_64 rng(31);
  const std::size_t k = 6;
  const auto p = random_unit_embeddings(rng, k, 8);
  const auto t = random_unit_embeddings(rng, k, 8);
  const SimilarityMatrix s = softmax_similarity(p, t, 0.05, Direction::p2t);
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::size_t> by_s(k), by_dot(k);
    for (std::size_t j = 0; j < k; ++j) by_s[j] = by_dot[j] = j;
    std::vector<double> dots(k);
    for (std::size_t j = 0; j < k; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < 8; ++c) d += p[i].values[c] * t[j].values[c];
      dots[j] = d;
    }
    std::sort(by_s.begin(), by_s.end(),
              [&](std::size_t a, std::size_t b) { return s.s.at(i, a) > s.s.at(i, b); });
    std::sort(by_dot.begin(), by_dot.end(),
              [&](std::size_t a, std::size_t b) { return dots[a] > dots[b]; });
    CHECK(by_s == by_dot);
  }
}
