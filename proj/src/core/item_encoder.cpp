#include "item_encoder.hpp"

#include <numeric>

namespace convrec {

const std::vector<std::string> kMetadataFields = {"title", "genre", "actors",
                                                  "directors", "plot"};

MetadataDb::MetadataDb(std::vector<ItemMetadata> items)
    : items_(std::move(items)) {
  for (size_t i = 0; i < items_.size(); ++i) {
    auto [it, inserted] = by_id_.emplace(items_[i].item_id, i);
    if (!inserted)
      throw DataError("metadata db: duplicate item id " +
                      std::to_string(items_[i].item_id));
    if (items_[i].title.empty())
      throw DataError("metadata db: item " +
                      std::to_string(items_[i].item_id) + " has empty title");
  }
}

const ItemMetadata& MetadataDb::by_id(int item_id) const {
  auto it = by_id_.find(item_id);
  if (it == by_id_.end())
    throw DataError("metadata db: unknown item id " + std::to_string(item_id));
  return items_[it->second];
}

FieldFilter FieldFilter::of(std::initializer_list<std::string> fields) {
  FieldFilter f;
  f.included.clear();
  for (const auto& s : fields) f.included.insert(s);
  return f;
}

std::string FieldFilter::to_string() const {
  std::string out;
  for (const auto& f : kMetadataFields) {
    if (!includes(f)) continue;
    if (!out.empty()) out += ",";
    out += f;
  }
  return out;
}

namespace {

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

}  // namespace

std::vector<std::string> serialize_metadata(const ItemMetadata& meta,
                                            const FieldFilter& filter) {
  for (const auto& f : filter.included)
    if (std::find(kMetadataFields.begin(), kMetadataFields.end(), f) ==
        kMetadataFields.end())
      throw DataError("serialize_metadata: unknown field '" + f + "'");
  std::vector<std::string> out;
  bool first = true;
  for (const auto& field : kMetadataFields) {
    if (!filter.includes(field)) continue;
    if (!first) out.push_back(Vocabulary::kSep);
    first = false;
    std::string text;
    if (field == "title")
      text = meta.title;
    else if (field == "genre")
      text = join(meta.genre);
    else if (field == "actors")
      text = join(meta.actors);
    else if (field == "directors")
      text = join(meta.directors);
    else
      text = meta.plot;
    for (auto& tok : tokenize(text)) out.push_back(std::move(tok));
  }
  if (out.empty())
    throw DataError("serialize_metadata: empty serialization for item " +
                    std::to_string(meta.item_id) +
                    " (all fields filtered out)");
  return out;
}

std::string encoder_instance_name(EncoderInstance e) {
  return e == EncoderInstance::Context ? "context" : "candidate";
}

void ItemEncoderParams::init(const DecoderConfig& cfg, Rng& rng) {
  wte = Tensor::randn({cfg.vocab_size, cfg.d_model}, rng, 0.02, true);
  pos = Tensor::randn({cfg.max_positions, cfg.d_model}, rng, 0.02, true);
  stack.init(cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.d_ff, rng);
  ff_w = Tensor::randn({cfg.d_model, cfg.d_model}, rng, 0.02, true);
  ff_b = Tensor::zeros({1, cfg.d_model}, true);
  max_positions = cfg.max_positions;
}

void ItemEncoderParams::register_params(ParamSet& ps,
                                        const std::string& prefix) const {
  ps.add(prefix + ".wte", wte);
  ps.add(prefix + ".pos", pos);
  stack.register_params(ps, prefix + ".stack");
  ps.add(prefix + ".ff.w", ff_w);
  ps.add(prefix + ".ff.b", ff_b);
}

Tensor ItemEncoderParams::encode_states(const std::vector<int>& token_ids) const {
  if (token_ids.empty()) throw ShapeError("item encoder: empty token sequence");
  const int L = static_cast<int>(token_ids.size());
  if (L > max_positions)
    throw ShapeError("item encoder: sequence of " + std::to_string(L) +
                     " tokens exceeds max positions " +
                     std::to_string(max_positions));
  std::vector<int> pos_ids(token_ids.size());
  std::iota(pos_ids.begin(), pos_ids.end(), 0);
  Tensor x = add(gather_rows(wte, token_ids), gather_rows(pos, pos_ids));
  return stack.forward(x, build_mask(MaskRegime::Full, L));
}

Tensor ItemEncoderParams::encode_tokens(const std::vector<int>& token_ids) const {
  Tensor pooled = mean_rows(encode_states(token_ids));
  return add(matmul(pooled, ff_w), ff_b);
}

std::vector<int> metadata_token_ids(const ItemMetadata& meta,
                                    const FieldFilter& filter,
                                    const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& tok : serialize_metadata(meta, filter))
    ids.push_back(vocab.id(tok));
  return ids;
}

Tensor encode_item(const ItemEncoderParams& enc, const ItemMetadata& meta,
                   const FieldFilter& filter, const Vocabulary& vocab) {
  return enc.encode_tokens(metadata_token_ids(meta, filter, vocab));
}

Tensor encode_database(const ItemEncoderParams& enc, const MetadataDb& db,
                       const FieldFilter& filter, const Vocabulary& vocab) {
  if (db.size() == 0) throw DataError("encode_database: empty database");
  std::vector<Tensor> rows;
  rows.reserve(db.size());
  for (const auto& meta : db.items())
    rows.push_back(encode_item(enc, meta, filter, vocab));
  return concat_rows(rows);
}

}  // namespace convrec
