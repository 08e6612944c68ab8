#pragma once

#include <map>
#include <string>
#include <vector>

#include "ptmatch/dap.hpp"
#include "ptmatch/synthgen.hpp"

namespace ptmatch {

struct DirectionMetrics {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;  // percentages in [0, 100]
};

struct RetrievalMetrics {
  DirectionMetrics p2t;
  DirectionMetrics t2p;
  double rsum = 0.0;  // exact sum of the six recalls
};

struct EncodedCorpus {
  std::vector<int> scene_ids;
  std::vector<DenseArray> scene_embeddings;
  std::vector<int> text_ids;
  std::vector<DenseArray> text_embeddings;
};

// Embeds every scene and text of the split once; deterministic in
// (dataset, model).
EncodedCorpus encode_corpus(const Dataset& ds, const Model& model);

// Bidirectional Recall@{1,5,10}. ground_truth maps text id -> scene id; a
// text query hits when its scene ranks in the top K, a scene query hits when
// any of its ground-truth texts does. Ties broken by lower index, evaluation
// always against the clean assignment.
RetrievalMetrics recall_at_k(const EncodedCorpus& corpus, const std::map<int, int>& ground_truth);

// Corpus ids sorted by descending dot product with the query, ties by
// ascending id.
std::vector<int> rank_query(const DenseArray& query, const std::vector<DenseArray>& embeddings,
                            const std::vector<int>& ids);

// Per-token attention weights of one sample, for external visualization.
struct AttentionDumpRecord {
  int id = 0;
  Modality modality = Modality::text;
  std::vector<double> token_weights;  // token-level attention, sums to 1
  std::vector<double> dual_mean;      // per-token mean of the dual attention map
};
AttentionDumpRecord attention_dump(const TokenFeatures& sample, int id, const Model& model);

}  // namespace ptmatch
