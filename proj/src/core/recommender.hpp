#pragma once

#include <optional>
#include <string>
#include <vector>

#include "model.hpp"

namespace convrec {

// Shared binding for the recommendation/response paths.
struct RecContext {
  const Model& model;
  const MetadataDb& db;
  FieldFilter filter;
  ContextOptions ctx_opts;
  TruncationLog* trunc = nullptr;  // optional overflow accounting
};

// Ground truth plus M sampled negatives; the ground-truth position is
// randomized inside `items`.
struct CandidateSet {
  int ground_truth_index = 0;
  std::vector<int> items;
};

// M distinct non-ground-truth ids, uniform over the database.
CandidateSet sample_negatives(const MetadataDb& db, int ground_truth, int m,
                              Rng& rng);

// P(i) = exp(c_i . d_r) / sum_n exp(c_n . d_r), numerically stabilized.
Tensor selection_scores(const Tensor& d_r, const Tensor& cand_embs);

// Differentiable context realization through the context encoder.
ItemEmbedFn live_context_embedder(const RecContext& rc);

// Output state of the decoder at the trailing [REC] position.
Tensor rec_summary_vector(const RecContext& rc,
                          const MixedSequence& ctx_with_rec,
                          const ItemEmbedFn& embed);

Tensor selection_loss(const RecContext& rc, const MixedSequence& ctx_with_rec,
                      const CandidateSet& cands);

// Probabilities aligned with cand_items order (1 x n). Candidate ITEs come
// from the context encoder; every candidate slot shares one position row and
// a bidirectional candidate block.
Tensor ranking_scores(const RecContext& rc, const MixedSequence& ctx_with_rec,
                      const std::vector<int>& cand_items,
                      ItemEmbedCache* cache = nullptr);

Tensor ranking_loss(const RecContext& rc, const MixedSequence& ctx_with_rec,
                    const CandidateSet& cands);

// One fused decoder pass under the ranking mask yields both the selection
// summary vector (context rows are causal and blocked from candidates, so it
// equals the causal-pass value) and the candidate ranking losses.
struct RecLosses {
  Tensor select;
  Tensor rank;
};
RecLosses selection_and_ranking_loss(const RecContext& rc,
                                     const MixedSequence& ctx_with_rec,
                                     const CandidateSet& cands);

struct ScoredItem {
  int item_id = 0;
  double r_score = 0.0;  // ranking probability
  double p_score = 0.0;  // selection probability over the candidate list
};

// Embedding set over the item database with top-K inner-product search.
// Exact mode stores the full matrix; approximate mode adds centroid buckets
// with a measured recall contract (>= target on the build corpus).
struct NNIndex {
  enum class Mode { Exact, Approx };

  Mode mode = Mode::Exact;
  int d = 0;
  std::vector<int> ids;
  std::vector<double> emb;  // n x d, row i embeds ids[i]
  uint64_t encoder_checksum = 0;
  // approximate structures
  int n_probe = 0;
  std::vector<double> centroids;          // n_clusters x d
  std::vector<std::vector<int>> buckets;  // row indices per centroid
  double measured_recall = 1.0;

  size_t size() const { return ids.size(); }
  const double* row(size_t i) const { return emb.data() + i * static_cast<size_t>(d); }

  // K item ids by descending inner product, ties broken by ascending id.
  std::vector<int> query(const std::vector<double>& q, int k) const;

  static NNIndex from_matrix(std::vector<int> ids, std::vector<double> emb,
                             int d, Mode mode, uint64_t seed,
                             double recall_target = 0.95);
  void save(const std::string& path) const;
  static NNIndex load(const std::string& path);
};

NNIndex build_index(const RecContext& rc, NNIndex::Mode mode, uint64_t seed);

std::vector<double> query_vector(const RecContext& rc,
                                 const MixedSequence& ctx_with_rec,
                                 ItemEmbedCache& cache);

// Deterministic rerank of a candidate id list: the list is canonicalized
// before the decoder pass, so any shuffle of the input yields bit-identical
// output. Result is sorted by ranking score descending, item id ascending.
std::vector<ScoredItem> rank_candidates(const RecContext& rc,
                                        const MixedSequence& ctx_with_rec,
                                        std::vector<int> cand_items,
                                        ItemEmbedCache& cache,
                                        const std::vector<double>* d_r = nullptr);

struct TwoPhaseTrace {
  std::vector<int> retrieved;      // pre-rank candidate list, query order
  std::vector<ScoredItem> ranked;  // post-rank scores
};

std::vector<int> two_phase_recommend(const RecContext& rc,
                                     const MixedSequence& ctx_with_rec,
                                     const NNIndex& index, int k,
                                     ItemEmbedCache& cache,
                                     TwoPhaseTrace* trace = nullptr);

}  // namespace convrec
