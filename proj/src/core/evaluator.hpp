#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "responder.hpp"

namespace convrec {

// Fraction of turns whose ground truth appears in the top k of its ranked list.
double recall_at_k(const std::vector<std::vector<int>>& ranked,
                   const std::vector<int>& ground_truths, int k);

struct Decomposition {
  double recall_acc = 0.0;   // gt inside the pre-rank candidate list
  double ranking_acc = 0.0;  // among recalled turns, gt ranked in top k
  double final_acc = 0.0;    // product of the two
};

// Each ranked list must be a permutation of its candidate list.
Decomposition decompose_accuracy(
    const std::vector<std::vector<int>>& candidates,
    const std::vector<std::vector<int>>& ranked,
    const std::vector<int>& ground_truths, int k);

// Case-folded containment of the tokenized title in the tokenized response.
bool response_contains_title(const std::vector<std::string>& response_tokens,
                             const std::string& title);
double response_recall(
    const std::vector<std::vector<std::string>>& response_tokens,
    const std::vector<std::string>& ground_truth_titles);

// Per-response (#distinct n-grams / #tokens), averaged over responses;
// responses shorter than n contribute 0.
double distinct_n(const std::vector<std::vector<std::string>>& responses,
                  int n);
// Corpus-level variant: distinct n-grams across all responses over all tokens.
double distinct_n_corpus(
    const std::vector<std::vector<std::string>>& responses, int n);

// Corpus BLEU with uniform weights up to max_n, brevity penalty, and add-one
// smoothing on zero-count higher-order precisions (never on unigrams).
double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references,
            int max_n);

struct EvalReport {
  std::vector<int> k_values{1, 10, 50};
  std::vector<double> recall_at;     // direct top-k rate of the system output
  double recall_acc = 0.0;
  std::vector<double> ranking_acc;   // per k
  std::vector<double> final_acc;     // recall_acc * ranking_acc, per k
  double rer = 0.0;
  double distinct2 = 0.0, distinct3 = 0.0, distinct4 = 0.0;
  double bleu2 = 0.0, bleu4 = 0.0;
  double ppl = 0.0;
  int rec_samples = 0;
  int generated = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;  // aligned text table
};

struct EvalRawLists {
  std::vector<int> ground_truths;
  std::vector<std::vector<int>> candidates;  // pre-rank, query order
  std::vector<std::vector<int>> ranked;      // two-phase output
};

// Runs the full metric suite over the recommendation-labeled turns of the
// given dialogs (one sample per ground-truth item).
EvalReport run_eval(const RecContext& rc, const std::vector<Dialog>& dialogs,
                    const NNIndex& index, int k_candidates,
                    const GenerationConfig& gen_cfg,
                    EvalRawLists* raw = nullptr,
                    std::vector<GenResult>* generations = nullptr);

struct ClusterReport {
  std::vector<int> k_values;
  int repeats = 20;
  std::vector<double> purity;  // mean majority-genre purity per K
  std::string encoder;
  int item_count = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// K-means purity over candidate-encoder (or context-encoder) embeddings of
// single-genre items: random-point init, <=100 iterations, `repeats` runs per
// K with fresh seeds, purity = sum of majority-genre counts / item count.
ClusterReport cluster_purity(const MetadataDb& db, const Model& model,
                             EncoderInstance instance,
                             const FieldFilter& filter,
                             const std::vector<int>& k_values, int repeats,
                             uint64_t seed);

}  // namespace convrec
