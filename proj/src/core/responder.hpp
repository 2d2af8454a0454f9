#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "recommender.hpp"

namespace convrec {

struct JointLossWeights {
  double a = 0.3;  // selection
  double b = 1.0;  // ranking
  double c = 0.5;  // response generation

  void validate() const {
    if (a < 0 || b < 0 || c < 0)
      throw ConfigError("joint loss weights must be nonnegative");
    if (a == 0 && b == 0 && c == 0)
      throw ConfigError("joint loss weights must not all be zero");
  }
};

// Teacher-forced language-modeling sample. For a recommendation turn the
// input follows the serving order: context, <rec> prompt, [REC], the
// ground-truth ITEs, then the placeholder-substituted utterance. The [REC]
// token and the end-of-sentence token are targets; ITE rows are inputs only.
struct LmSample {
  MixedSequence seq;
  std::vector<int> pred_rows;  // rows predicting the next word target
  std::vector<int> targets;    // vocab ids aligned with pred_rows
};

LmSample build_lm_sample(const RecContext& rc, const std::vector<Turn>& prefix,
                         const Turn& target_turn);

// Mean negative log-likelihood over the sample's target tokens.
Tensor lm_loss(const RecContext& rc, const LmSample& sample);

// Context for the selection/ranking phases: built prefix + <rec> prompt +
// the appended [REC] token whose output state is the summary vector.
MixedSequence build_rec_query(const RecContext& rc,
                              const std::vector<Turn>& prefix,
                              TruncationLog* log = nullptr);

struct JointLossParts {
  double select = 0.0;
  double rank = 0.0;
  double res = 0.0;
  bool has_rec = false;
};

// Weighted sum over a system turn: recommendation turns carry all three
// terms (selection/ranking averaged over ground-truth items, fresh negatives
// per item); other turns carry only the response term.
Tensor joint_loss(const RecContext& rc, const std::vector<Turn>& prefix,
                  const Turn& target_turn, const JointLossWeights& w,
                  int m_negatives, Rng& neg_rng,
                  JointLossParts* parts = nullptr);

struct GenerationConfig {
  int max_new_tokens = 48;
  enum class Decode { Greedy, Sample } decode = Decode::Greedy;
  double temperature = 1.0;
  uint64_t seed = 0;

  void validate() const {
    if (max_new_tokens < 1)
      throw ConfigError("max_new_tokens must be at least 1");
    if (decode == Decode::Sample && temperature <= 0.0)
      throw ConfigError("sampling temperature must be positive");
  }
};

struct RecEvent {
  int step = 0;
  int chosen = 0;
  std::vector<ScoredItem> candidates;
};

struct GenResult {
  std::vector<std::string> emitted;       // raw emission incl [REC]/[PH]
  std::vector<std::string> final_tokens;  // after placeholder substitution
  std::string final_text;
  std::vector<int> recommended;  // recommendation order
  std::vector<RecEvent> rec_events;
  int unfilled_placeholders = 0;
  bool hit_token_cap = false;
  nlohmann::json trace;
};

// Autoregressive decoding from the built context. Emitting [REC] triggers the
// two-phase recommendation; the winning item's ITE is appended and decoding
// continues until end-of-sentence or the token cap. Afterwards each [PH] in
// the emission is replaced left-to-right by the recommended titles; surplus
// placeholders become a diagnostic marker and a trace flag, never a crash.
GenResult generate_response(const RecContext& rc,
                            const std::vector<Turn>& prefix,
                            const NNIndex& index, int k,
                            const GenerationConfig& cfg, ItemEmbedCache& cache);

// exp(mean per-token NLL) over the system-utterance targets of the corpus.
double perplexity(const RecContext& rc, const std::vector<Dialog>& dialogs);

}  // namespace convrec
