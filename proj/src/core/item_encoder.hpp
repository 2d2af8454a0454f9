#pragma once

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "transformer.hpp"
#include "vocab.hpp"

namespace convrec {

// One database record. Only the title is mandatory; empty fields are legal so
// ablations can blank them out.
struct ItemMetadata {
  int item_id = 0;
  std::string title;
  std::vector<std::string> genre;
  std::vector<std::string> actors;
  std::vector<std::string> directors;
  std::string plot;
};

class MetadataDb {
 public:
  MetadataDb() = default;
  explicit MetadataDb(std::vector<ItemMetadata> items);

  const std::vector<ItemMetadata>& items() const { return items_; }
  size_t size() const { return items_.size(); }
  bool has(int item_id) const { return by_id_.count(item_id) > 0; }
  const ItemMetadata& by_id(int item_id) const;
  const ItemMetadata& at(size_t idx) const { return items_[idx]; }

 private:
  std::vector<ItemMetadata> items_;
  std::unordered_map<int, size_t> by_id_;
};

// Metadata fields in serialization order.
extern const std::vector<std::string> kMetadataFields;

// Fields to include; defaults to all five.
struct FieldFilter {
  std::set<std::string> included{kMetadataFields.begin(),
                                 kMetadataFields.end()};
  bool includes(const std::string& f) const { return included.count(f) > 0; }
  static FieldFilter all() { return FieldFilter{}; }
  static FieldFilter of(std::initializer_list<std::string> fields);
  std::string to_string() const;
};

// Field texts in fixed order with a [SEP] token between fields; list-valued
// fields join their elements with spaces inside one segment.
std::vector<std::string> serialize_metadata(const ItemMetadata& meta,
                                            const FieldFilter& filter);

enum class EncoderInstance { Context, Candidate };
std::string encoder_instance_name(EncoderInstance e);

// One item-encoder instance: own token/position embeddings, a bidirectional
// stack, mean pooling and an affine output head. The two instances never
// share parameters unless the model is configured to tie them.
struct ItemEncoderParams {
  Tensor wte;  // vocab x d_model
  Tensor pos;  // max_positions x d_model
  TransformerStack stack;
  Tensor ff_w, ff_b;  // d_model -> d_model output head
  int max_positions = 0;

  void init(const DecoderConfig& cfg, Rng& rng);
  void register_params(ParamSet& ps, const std::string& prefix) const;

  Tensor encode_states(const std::vector<int>& token_ids) const;  // L x d
  Tensor encode_tokens(const std::vector<int>& token_ids) const;  // 1 x d
};

std::vector<int> metadata_token_ids(const ItemMetadata& meta,
                                    const FieldFilter& filter,
                                    const Vocabulary& vocab);

Tensor encode_item(const ItemEncoderParams& enc, const ItemMetadata& meta,
                   const FieldFilter& filter, const Vocabulary& vocab);

// Row i embeds db.items()[i]; equals the per-item loop by construction.
Tensor encode_database(const ItemEncoderParams& enc, const MetadataDb& db,
                       const FieldFilter& filter, const Vocabulary& vocab);

}  // namespace convrec
