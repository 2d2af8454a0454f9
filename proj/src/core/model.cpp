#include "model.hpp"

#include <fstream>
#include <numeric>

namespace convrec {

void Model::init(const DecoderConfig& config, Vocabulary vocabulary,
                 bool tie_encoder_instances, uint64_t seed) {
  cfg = config;
  cfg.vocab_size = vocabulary.size();
  cfg.validate();
  vocab = std::move(vocabulary);
  tie_encoders = tie_encoder_instances;

  Rng rng(derive_seed(seed, "model-init"));
  wte = Tensor::randn({cfg.vocab_size, cfg.d_model}, rng, 0.02, true);
  pos = Tensor::randn({cfg.max_positions, cfg.d_model}, rng, 0.02, true);
  decoder.init(cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.d_ff, rng);
  ctx_enc.init(cfg, rng);
  if (tie_encoders)
    cand_enc = ctx_enc;
  else
    cand_enc.init(cfg, rng);
  rank_w = Tensor::randn({cfg.d_model, 1}, rng, 0.02, true);
  rank_b = Tensor::zeros({1, 1}, true);
}

ParamSet Model::params() const {
  ParamSet ps;
  ps.add("decoder.wte", wte);
  ps.add("decoder.pos", pos);
  decoder.register_params(ps, "decoder");
  ctx_enc.register_params(ps, "enc.context");
  if (!tie_encoders) cand_enc.register_params(ps, "enc.candidate");
  ps.add("rank.w", rank_w);
  ps.add("rank.b", rank_b);
  return ps;
}

Tensor Model::realize(const MixedSequence& seq,
                      const ItemEmbedFn& embed_item) const {
  if (seq.entries.empty()) throw ShapeError("realize: empty sequence");
  // contiguous word runs become one gather; item rows interleave
  std::vector<Tensor> parts;
  std::vector<int> run;
  auto flush = [&] {
    if (!run.empty()) {
      parts.push_back(gather_rows(wte, run));
      run.clear();
    }
  };
  for (const auto& e : seq.entries) {
    if (e.kind == MixedEntry::Kind::Word) {
      run.push_back(e.id);
    } else {
      flush();
      parts.push_back(embed_item(e.id));
    }
  }
  flush();
  return parts.size() == 1 ? parts[0] : concat_rows(parts);
}

Tensor Model::decode_states(const Tensor& emb, const std::vector<int>& pos_ids,
                            const AttentionMask& mask, Rng* dropout_rng) const {
  const int L = emb.rows();
  if (L > cfg.max_positions)
    throw ShapeError("decoder: sequence of " + std::to_string(L) +
                     " tokens exceeds max positions " +
                     std::to_string(cfg.max_positions));
  if (static_cast<int>(pos_ids.size()) != L)
    throw ShapeError("decoder: " + std::to_string(pos_ids.size()) +
                     " position ids for " + std::to_string(L) + " rows");
  Tensor x = add(emb, gather_rows(pos, pos_ids));
  return decoder.forward(x, mask, cfg.dropout, dropout_rng);
}

Tensor Model::decode_states_causal(const Tensor& emb, Rng* dropout_rng) const {
  std::vector<int> pos_ids(static_cast<size_t>(emb.rows()));
  std::iota(pos_ids.begin(), pos_ids.end(), 0);
  return decode_states(emb, pos_ids, build_mask(MaskRegime::Causal, emb.rows()),
                       dropout_rng);
}

Tensor Model::logits_for_rows(const Tensor& states,
                              const std::vector<int>& rows) const {
  return matmul(gather_rows(states, rows), transpose(wte));
}

uint64_t Model::candidate_encoder_checksum() const {
  ParamSet ps;
  cand_enc.register_params(ps, "enc.candidate");
  uint64_t h = 1469598103934665603ull;
  for (const auto& [name, t] : ps.items()) {
    h = fnv1a64(name, h);
    h = fnv1a64(t.values().data(), t.values().size() * sizeof(double), h);
  }
  return h;
}

const Tensor& ItemEmbedCache::context_embedding(int item_id) {
  auto it = ctx_cache_.find(item_id);
  if (it != ctx_cache_.end()) return it->second;
  NoGradGuard ng;
  Tensor e = encode_item(model_.ctx_enc, db_.by_id(item_id), filter_,
                         model_.vocab);
  return ctx_cache_.emplace(item_id, std::move(e)).first->second;
}

const Tensor& ItemEmbedCache::candidate_embedding(int item_id) {
  auto it = cand_cache_.find(item_id);
  if (it != cand_cache_.end()) return it->second;
  NoGradGuard ng;
  Tensor e = encode_item(model_.cand_enc, db_.by_id(item_id), filter_,
                         model_.vocab);
  return cand_cache_.emplace(item_id, std::move(e)).first->second;
}

ItemEmbedFn ItemEmbedCache::context_fn() {
  return [this](int item_id) { return context_embedding(item_id); };
}

void save_model(const Model& model, const AdamW* opt, const std::string& path,
                const nlohmann::json& extra_meta) {
  std::vector<TensorEntry> entries;
  ParamSet ps = model.params();
  for (const auto& [name, t] : ps.items())
    entries.push_back({name, t.shape(), Dtype::F32, t.values()});
  if (opt) {
    for (const auto& [name, t] : ps.items()) {
      auto it = opt->slots().find(name);
      if (it == opt->slots().end()) continue;
      entries.push_back({"opt.m." + name, t.shape(), Dtype::F32, it->second.m});
      entries.push_back({"opt.v." + name, t.shape(), Dtype::F32, it->second.v});
    }
    entries.push_back({"opt.step", {1}, Dtype::F64,
                       {static_cast<double>(opt->step_count())}});
  }
  save_container(path, entries);

  nlohmann::json meta = extra_meta;
  meta["format"] = "convrec-checkpoint";
  meta["model"] = {{"n_layers", model.cfg.n_layers},
                   {"n_heads", model.cfg.n_heads},
                   {"d_model", model.cfg.d_model},
                   {"d_ff", model.cfg.d_ff},
                   {"max_positions", model.cfg.max_positions},
                   {"dropout", model.cfg.dropout},
                   {"vocab_size", model.cfg.vocab_size},
                   {"tie_encoders", model.tie_encoders}};
  meta["vocab"] = model.vocab.tokens;
  std::ofstream os(path + ".meta.json");
  if (!os) throw DataError("checkpoint: cannot write " + path + ".meta.json");
  os << meta.dump(2) << "\n";
}

Model load_model(const std::string& path, AdamW* opt_out,
                 nlohmann::json* meta_out) {
  std::ifstream is(path + ".meta.json");
  if (!is)
    throw DataError("checkpoint: missing sidecar " + path + ".meta.json");
  nlohmann::json meta = nlohmann::json::parse(is, nullptr, true);
  Vocabulary vocab;
  for (const auto& tok : meta.at("vocab")) vocab.add(tok.get<std::string>());

  DecoderConfig cfg;
  const auto& m = meta.at("model");
  cfg.n_layers = m.at("n_layers").get<int>();
  cfg.n_heads = m.at("n_heads").get<int>();
  cfg.d_model = m.at("d_model").get<int>();
  cfg.d_ff = m.at("d_ff").get<int>();
  cfg.max_positions = m.at("max_positions").get<int>();
  cfg.dropout = m.at("dropout").get<double>();

  Model model;
  model.init(cfg, std::move(vocab), m.at("tie_encoders").get<bool>(), 0);

  auto entries = load_container(path);
  std::unordered_map<std::string, TensorEntry*> by_name;
  for (auto& e : entries) by_name[e.name] = &e;

  ParamSet ps = model.params();
  for (auto& [name, t] : ps.items()) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint: missing tensor " + name + " in " + path);
    const TensorEntry& e = *it->second;
    if (e.data.size() != t.values().size())
      throw ShapeError("checkpoint: tensor " + name + " has shape " +
                       shape_str(e.shape) + ", expected " +
                       shape_str(t.shape()));
    t.values() = e.data;
  }
  if (opt_out) {
    for (auto& [name, t] : ps.items()) {
      auto mit = by_name.find("opt.m." + name);
      auto vit = by_name.find("opt.v." + name);
      if (mit == by_name.end() || vit == by_name.end()) continue;
      auto& slot = opt_out->slots()[name];
      slot.m = mit->second->data;
      slot.v = vit->second->data;
    }
    auto sit = by_name.find("opt.step");
    if (sit != by_name.end())
      opt_out->set_step_count(
          static_cast<int64_t>(sit->second->data.at(0)));
  }
  if (meta_out) *meta_out = std::move(meta);
  return model;
}

}  // namespace convrec
