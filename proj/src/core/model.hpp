#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "checkpoint.hpp"
#include "context.hpp"
#include "item_encoder.hpp"
#include "optim.hpp"
#include "transformer.hpp"
#include "vocab.hpp"

namespace convrec {

// Produces the context-encoder embedding for an item id when a mixed
// sequence gets realized. Training uses a live (differentiable) embedder;
// inference uses a frozen cache.
using ItemEmbedFn = std::function<Tensor(int item_id)>;

// All trainable state: the decoder, the two item-encoder instances, the
// ranking head and the vocabulary embedding matrix (which also serves as the
// tied LM output head).
struct Model {
  DecoderConfig cfg;
  bool tie_encoders = false;
  Vocabulary vocab;

  Tensor wte;  // vocab x d_model
  Tensor pos;  // max_positions x d_model
  TransformerStack decoder;
  ItemEncoderParams ctx_enc;
  ItemEncoderParams cand_enc;  // aliases ctx_enc tensors when tied
  Tensor rank_w, rank_b;       // d_model -> 1

  void init(const DecoderConfig& config, Vocabulary vocabulary,
            bool tie_encoder_instances, uint64_t seed);

  ParamSet params() const;

  // Word rows come from the vocabulary matrix, item rows from embed_item
  // (context-encoder provenance).
  Tensor realize(const MixedSequence& seq, const ItemEmbedFn& embed_item) const;

  Tensor decode_states(const Tensor& emb, const std::vector<int>& pos_ids,
                       const AttentionMask& mask, Rng* dropout_rng = nullptr) const;
  // Causal positions 0..L-1.
  Tensor decode_states_causal(const Tensor& emb, Rng* dropout_rng = nullptr) const;
  // Vocabulary logits for selected state rows (tied output head).
  Tensor logits_for_rows(const Tensor& states, const std::vector<int>& rows) const;

  uint64_t candidate_encoder_checksum() const;
};

// Frozen-parameter embedding cache for evaluation and serving.
class ItemEmbedCache {
 public:
  ItemEmbedCache(const Model& model, const MetadataDb& db,
                 const FieldFilter& filter)
      : model_(model), db_(db), filter_(filter) {}

  const Tensor& context_embedding(int item_id);
  const Tensor& candidate_embedding(int item_id);
  ItemEmbedFn context_fn();

 private:
  const Model& model_;
  const MetadataDb& db_;
  FieldFilter filter_;
  std::unordered_map<int, Tensor> ctx_cache_, cand_cache_;
};

// Model + optimizer persistence in the tensor-container format, with a JSON
// sidecar carrying the vocabulary, model dims and run metadata.
void save_model(const Model& model, const AdamW* opt, const std::string& path,
                const nlohmann::json& extra_meta);
Model load_model(const std::string& path, AdamW* opt_out = nullptr,
                 nlohmann::json* meta_out = nullptr);

}  // namespace convrec
