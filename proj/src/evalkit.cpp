#include "ptmatch/evalkit.hpp"

#include <algorithm>
#include <numeric>

#include "ptmatch/errors.hpp"

namespace ptmatch {

namespace {

double dot(const DenseArray& a, const DenseArray& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

}  // namespace

EncodedCorpus encode_corpus(const Dataset& ds, const Model& model) {
  EncodedCorpus out;
  out.scene_ids.reserve(ds.scenes.size());
  out.scene_embeddings.reserve(ds.scenes.size());
  for (const SceneSample& s : ds.scenes) {
    out.scene_ids.push_back(s.id);
    out.scene_embeddings.push_back(embed(s.features, model.params, model.config));
  }
  out.text_ids.reserve(ds.texts.size());
  out.text_embeddings.reserve(ds.texts.size());
  for (const TextSample& t : ds.texts) {
    out.text_ids.push_back(t.id);
    out.text_embeddings.push_back(embed(t.features, model.params, model.config));
  }
  return out;
}

std::vector<int> rank_query(const DenseArray& query, const std::vector<DenseArray>& embeddings,
                            const std::vector<int>& ids) {
  if (embeddings.empty() || embeddings.size() != ids.size()) {
    throw UsageError("rank_query: empty corpus or id/embedding count mismatch");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) scores[i] = dot(query, embeddings[i]);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<int> ranked(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) ranked[i] = ids[order[i]];
  return ranked;
}

RetrievalMetrics recall_at_k(const EncodedCorpus& corpus,
                             const std::map<int, int>& ground_truth) {
  if (corpus.scene_ids.empty() || corpus.text_ids.empty()) {
    throw UsageError("recall_at_k: empty corpus");
  }
  for (int text_id : corpus.text_ids) {
    if (ground_truth.find(text_id) == ground_truth.end()) {
      throw UsageError("recall_at_k: text " + std::to_string(text_id) +
                       " missing from ground truth");
    }
  }

  const std::size_t ks[3] = {1, 5, 10};
  // t2p: text queries over the scene corpus; hit when the clean scene ranks
  // in the top K
  std::size_t t2p_hits[3] = {0, 0, 0};
  for (std::size_t qi = 0; qi < corpus.text_ids.size(); ++qi) {
    const std::vector<int> ranked =
        rank_query(corpus.text_embeddings[qi], corpus.scene_embeddings, corpus.scene_ids);
    const int want = ground_truth.at(corpus.text_ids[qi]);
    for (int b = 0; b < 3; ++b) {
      const std::size_t limit = std::min(ks[b], ranked.size());
      for (std::size_t r = 0; r < limit; ++r) {
        if (ranked[r] == want) {
          ++t2p_hits[b];
          break;
        }
      }
    }
  }

  // p2t: scene queries over the text corpus; hit when any ground-truth text
  // ranks in the top K
  std::size_t p2t_hits[3] = {0, 0, 0};
  for (std::size_t qi = 0; qi < corpus.scene_ids.size(); ++qi) {
    const std::vector<int> ranked =
        rank_query(corpus.scene_embeddings[qi], corpus.text_embeddings, corpus.text_ids);
    const int scene = corpus.scene_ids[qi];
    for (int b = 0; b < 3; ++b) {
      const std::size_t limit = std::min(ks[b], ranked.size());
      bool hit = false;
      for (std::size_t r = 0; r < limit && !hit; ++r) {
        auto it = ground_truth.find(ranked[r]);
        hit = it != ground_truth.end() && it->second == scene;
      }
      if (hit) ++p2t_hits[b];
    }
  }

  RetrievalMetrics m;
  const double n_text = static_cast<double>(corpus.text_ids.size());
  const double n_scene = static_cast<double>(corpus.scene_ids.size());
  m.t2p.r1 = 100.0 * static_cast<double>(t2p_hits[0]) / n_text;
  m.t2p.r5 = 100.0 * static_cast<double>(t2p_hits[1]) / n_text;
  m.t2p.r10 = 100.0 * static_cast<double>(t2p_hits[2]) / n_text;
  m.p2t.r1 = 100.0 * static_cast<double>(p2t_hits[0]) / n_scene;
  m.p2t.r5 = 100.0 * static_cast<double>(p2t_hits[1]) / n_scene;
  m.p2t.r10 = 100.0 * static_cast<double>(p2t_hits[2]) / n_scene;
  m.rsum = m.p2t.r1 + m.p2t.r5 + m.p2t.r10 + m.t2p.r1 + m.t2p.r5 + m.t2p.r10;
  return m;
}

AttentionDumpRecord attention_dump(const TokenFeatures& sample, int id, const Model& model) {
  const AttentionMaps maps = attention_maps(sample, model.params, model.config);
  AttentionDumpRecord record;
  record.id = id;
  record.modality = sample.modality;
  record.token_weights = maps.token_vec.values;
  const std::size_t n = maps.dual_mat.rows();
  const std::size_t d = maps.dual_mat.cols();
  record.dual_mean.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += maps.dual_mat.at(i, j);
    record.dual_mean[i] = s / static_cast<double>(d);
  }
  return record;
}

}  // namespace ptmatch
