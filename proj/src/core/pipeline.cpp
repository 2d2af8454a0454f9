#include "pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace convrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  os << text;
}

void refuse_overwrite(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw DataError(path + " already exists (pass --force to overwrite)");
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("paths.report_dir is not set");
  fs::create_directories(dir);
}

json config_header(const RunConfig& cfg) {
  json conf = json::object();
  for (const auto& [k, v] : cfg.effective) conf[k] = v;
  return {{"fingerprint", cfg.fingerprint()},
          {"seed", cfg.seed},
          {"config", conf}};
}

}  // namespace

Vocabulary build_vocabulary(const std::vector<Dialog>& dialogs,
                            const MetadataDb& db) {
  Vocabulary vocab = Vocabulary::with_specials();
  for (const auto& d : dialogs) {
    for (const auto& t : d.turns) {
      // mention tokens are substituted away before embedding, skip them
      std::vector<bool> is_mention(t.tokens.size(), false);
      for (const auto& m : t.mentions)
        for (int i = m.start; i < m.end; ++i)
          is_mention[static_cast<size_t>(i)] = true;
      for (size_t i = 0; i < t.tokens.size(); ++i)
        if (!is_mention[i]) vocab.add(t.tokens[i]);
    }
  }
  for (const auto& item : db.items())
    for (const auto& tok : serialize_metadata(item, FieldFilter::all()))
      vocab.add(tok);
  return vocab;
}

std::vector<Dialog> load_corpus_any(const RunConfig& cfg, MetadataDb& db) {
  if (cfg.corpus_format == "redial") {
    RedialImport import = load_redial(cfg.corpus);
    db = std::move(import.db);
    return std::move(import.dialogs);
  }
  db = load_metadata_db(cfg.metadata_db);
  return load_dialog_corpus(cfg.corpus, db);
}

void cmd_gen_corpus(const std::string& spec_path, const std::string& out_dir,
                    bool force) {
  KeyValues kv = load_config_file(spec_path);
  SyntheticSpec spec = synthetic_spec_from_kv(kv);
  SyntheticCorpus corpus = generate_synthetic(spec);
  ensure_dir(out_dir);
  std::string db_path = (fs::path(out_dir) / "items.jsonl").string();
  std::string corpus_path = (fs::path(out_dir) / "dialogs.jsonl").string();
  refuse_overwrite(db_path, force);
  refuse_overwrite(corpus_path, force);
  write_text(db_path, metadata_db_to_jsonl(corpus.db));
  write_text(corpus_path, dialog_corpus_to_jsonl(corpus.dialogs));
}

namespace {

struct TrainArtifacts {
  Model model;
  AdamW opt{AdamWConfig{}};
  TrainStats stats;
  std::vector<Dialog> train_split, eval_split;
};

TrainArtifacts run_training(const RunConfig& cfg, const MetadataDb& db,
                            const std::vector<Dialog>& dialogs,
                            std::ostream* log,
                            const std::string& epoch_ckpt_prefix) {
  TrainArtifacts art;
  std::tie(art.train_split, art.eval_split) =
      split_dialogs(dialogs, cfg.eval_fraction);

  int start_epoch = 0;
  if (!cfg.resume_from.empty()) {
    json meta;
    art.opt = AdamW(cfg.train.adamw);
    art.model = load_model(cfg.resume_from, &art.opt, &meta);
    start_epoch = meta.value("epochs_completed", 0);
  } else {
    Vocabulary vocab = build_vocabulary(dialogs, db);
    DecoderConfig mc = cfg.model;
    mc.vocab_size = vocab.size();
    art.model.init(mc, std::move(vocab), cfg.tie_encoders, cfg.seed);
    art.opt = AdamW(cfg.train.adamw);
  }

  auto epoch_cb = [&](int completed) {
    if (epoch_ckpt_prefix.empty()) return;
    json meta{{"epochs_completed", completed},
              {"fingerprint", cfg.fingerprint()},
              {"seed", cfg.seed}};
    save_model(art.model, &art.opt,
               epoch_ckpt_prefix + ".epoch" + std::to_string(completed), meta);
  };
  art.stats = train_model(art.model, db, art.train_split, cfg.train,
                          cfg.filter, cfg.ctx_opts, art.opt, log, start_epoch,
                          epoch_ckpt_prefix.empty()
                              ? std::function<void(int)>()
                              : epoch_cb);
  return art;
}

}  // namespace

void cmd_train(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("paths.checkpoint is not set");
  refuse_overwrite(cfg.checkpoint, cfg.force);
  ensure_dir(cfg.report_dir);
  MetadataDb db;
  std::vector<Dialog> dialogs = load_corpus_any(cfg, db);

  std::ofstream log((fs::path(cfg.report_dir) / "train_log.jsonl").string(),
                    std::ios::trunc);
  if (!log) throw DataError("cannot write train log under " + cfg.report_dir);

  TrainArtifacts art = run_training(cfg, db, dialogs, &log, cfg.checkpoint);
  json meta{{"epochs_completed", cfg.train.epochs},
            {"fingerprint", cfg.fingerprint()},
            {"seed", cfg.seed}};
  save_model(art.model, &art.opt, cfg.checkpoint, meta);
  log << json{{"done", true},
              {"steps", art.stats.steps},
              {"samples_per_epoch", art.stats.samples},
              {"truncated_turns", art.stats.truncation.dropped_turns},
              {"truncated_tokens", art.stats.truncation.dropped_tokens}}
             .dump()
      << "\n";
}

void cmd_index(const RunConfig& cfg) {
  if (cfg.index_path.empty()) throw ConfigError("paths.index is not set");
  refuse_overwrite(cfg.index_path, cfg.force);
  MetadataDb db = load_metadata_db(cfg.metadata_db);
  Model model = load_model(cfg.checkpoint);
  RecContext rc{model, db, cfg.filter, cfg.ctx_opts};
  NNIndex index = build_index(rc, cfg.index_mode, cfg.seed);
  index.save(cfg.index_path);
}

namespace {

EvalReport eval_split_report(const RecContext& rc,
                             const std::vector<Dialog>& dialogs,
                             const NNIndex& index, const RunConfig& cfg,
                             EvalRawLists* raw = nullptr) {
  return run_eval(rc, dialogs, index, cfg.k_candidates, cfg.gen, raw);
}

}  // namespace

nlohmann::json cmd_eval(const RunConfig& cfg) {
  ensure_dir(cfg.report_dir);
  MetadataDb db;
  std::vector<Dialog> dialogs = load_corpus_any(cfg, db);
  Model model = load_model(cfg.checkpoint);
  NNIndex index = NNIndex::load(cfg.index_path);
  if (index.encoder_checksum != model.candidate_encoder_checksum())
    std::cerr << "warning: index " << cfg.index_path
              << " is stale (candidate-encoder checksum mismatch); rebuild "
                 "with the `index` command\n";
  RecContext rc{model, db, cfg.filter, cfg.ctx_opts};
  auto [train_split, eval_split] = split_dialogs(dialogs, cfg.eval_fraction);

  EvalReport train_rep = eval_split_report(rc, train_split, index, cfg);
  EvalReport heldout = eval_split_report(rc, eval_split, index, cfg);
  json report = config_header(cfg);
  report["train"] = train_rep.to_json();
  report["heldout"] = heldout.to_json();

  write_text((fs::path(cfg.report_dir) / "eval_report.json").string(),
             report.dump(2) + "\n");
  write_text((fs::path(cfg.report_dir) / "eval_report.txt").string(),
             "== train split ==\n" + train_rep.to_table() +
                 "\n== held-out split ==\n" + heldout.to_table());
  return report;
}

nlohmann::json cmd_analyze(const RunConfig& cfg, const std::string& mode) {
  ensure_dir(cfg.report_dir);
  if (mode == "stats") {
    MetadataDb db;
    std::vector<Dialog> dialogs = load_corpus_any(cfg, db);
    CorpusStats s = corpus_stats(dialogs);
    json report = config_header(cfg);
    report["stats"] = {{"dialogs", s.dialogs},
                       {"utterances", s.utterances},
                       {"avg_turns", s.avg_turns},
                       {"mentions", s.mentions},
                       {"word_tokens", s.word_tokens},
                       {"tokens_per_mention", s.tokens_per_mention},
                       {"distinct1", s.distinct1},
                       {"distinct3", s.distinct3}};
    write_text((fs::path(cfg.report_dir) / "stats_report.json").string(),
               report.dump(2) + "\n");
    return report;
  }
  if (mode == "cluster") {
    MetadataDb db = load_metadata_db(cfg.metadata_db);
    Model trained = load_model(cfg.checkpoint);
    // untrained baseline with the same dims and vocabulary
    Model raw;
    raw.init(trained.cfg, trained.vocab, trained.tie_encoders,
             derive_seed(cfg.seed, "raw-baseline"));
    std::vector<int> ks{3, 4, 5};
    ClusterReport ct = cluster_purity(db, trained, EncoderInstance::Candidate,
                                      cfg.filter, ks, 20, cfg.seed);
    ct.encoder = "trained";
    ClusterReport cr = cluster_purity(db, raw, EncoderInstance::Candidate,
                                      cfg.filter, ks, 20, cfg.seed);
    cr.encoder = "raw";
    json report = config_header(cfg);
    report["cluster"] = {{"trained", ct.to_json()}, {"raw", cr.to_json()}};
    write_text((fs::path(cfg.report_dir) / "cluster_report.json").string(),
               report.dump(2) + "\n");
    write_text((fs::path(cfg.report_dir) / "cluster_report.txt").string(),
               ct.to_table() + cr.to_table());
    return report;
  }
  if (mode == "ablation") {
    MetadataDb db;
    std::vector<Dialog> dialogs = load_corpus_any(cfg, db);
    bool remove_fields = !cfg.ablation_remove_fields.empty();
    if (remove_fields && cfg.ablation_strip_mentions)
      throw ConfigError(
          "ablation: declare exactly one delta (fields or mentions), not both");

    RunConfig variant = cfg;
    if (remove_fields) {
      std::string fields;
      for (const auto& f : kMetadataFields) {
        bool removed = false;
        std::istringstream is(cfg.ablation_remove_fields);
        std::string tok;
        while (std::getline(is, tok, ','))
          if (tok == f) removed = true;
        if (!removed && cfg.filter.includes(f)) {
          if (!fields.empty()) fields += ",";
          fields += f;
        }
      }
      KeyValues kv = cfg.effective;
      kv["ablation.metadata_fields"] = fields;
      variant = RunConfig::from_kv(kv);
    } else if (cfg.ablation_strip_mentions) {
      KeyValues kv = cfg.effective;
      kv["ablation.strip_mentions"] = "true";
      variant = RunConfig::from_kv(kv);
    }

    TrainedRun base = train_and_eval(cfg, db, dialogs);
    TrainedRun var = train_and_eval(variant, db, dialogs);

    auto rel = [](double b, double v) { return b != 0.0 ? (v - b) / b : 0.0; };
    json report = config_header(cfg);
    report["base"] = {{"train", base.train_report.to_json()},
                      {"heldout", base.heldout_report.to_json()}};
    report["variant"] = {{"train", var.train_report.to_json()},
                         {"heldout", var.heldout_report.to_json()},
                         {"delta_fields", cfg.ablation_remove_fields},
                         {"delta_strip_mentions", cfg.ablation_strip_mentions}};
    report["relative_heldout"] = {
        {"recall@1",
         rel(base.heldout_report.recall_at[0], var.heldout_report.recall_at[0])},
        {"recall@10",
         rel(base.heldout_report.recall_at[1], var.heldout_report.recall_at[1])},
        {"recall@50",
         rel(base.heldout_report.recall_at[2], var.heldout_report.recall_at[2])}};
    write_text((fs::path(cfg.report_dir) / "ablation_report.json").string(),
               report.dump(2) + "\n");
    write_text((fs::path(cfg.report_dir) / "ablation_report.txt").string(),
               "== base heldout ==\n" + base.heldout_report.to_table() +
                   "\n== variant heldout ==\n" +
                   var.heldout_report.to_table());
    return report;
  }
  throw ConfigError("analyze: unknown mode '" + mode +
                    "' (expected cluster | ablation | stats)");
}

TrainedRun train_and_eval(const RunConfig& cfg, const MetadataDb& db,
                          const std::vector<Dialog>& dialogs) {
  TrainArtifacts art = run_training(cfg, db, dialogs, nullptr, "");
  TrainedRun out;
  out.model = std::move(art.model);
  RecContext rc{out.model, db, cfg.filter, cfg.ctx_opts};
  NNIndex index = build_index(rc, cfg.index_mode, cfg.seed);
  out.train_report = eval_split_report(rc, art.train_split, index, cfg);
  out.heldout_report = eval_split_report(rc, art.eval_split, index, cfg);
  return out;
}

ChatSession::ChatSession(const RunConfig& cfg) : cfg_(cfg) {
  db_ = load_metadata_db(cfg.metadata_db);
  model_ = load_model(cfg.checkpoint);
  index_ = NNIndex::load(cfg.index_path);
  if (index_.encoder_checksum != model_.candidate_encoder_checksum())
    std::cerr << "warning: index is stale relative to the checkpoint\n";
  cache_ = std::make_unique<ItemEmbedCache>(model_, db_, cfg_.filter);
}

ChatSession::Reply ChatSession::turn(const std::string& user_text) {
  Turn user;
  user.speaker = Speaker::Seeker;
  auto [tokens, mentions] = parse_turn_text(user_text);
  user.tokens = std::move(tokens);
  user.mentions = std::move(mentions);
  for (const auto& m : user.mentions)
    if (!db_.has(m.item_id))
      throw DataError("unknown item id @" + std::to_string(m.item_id));
  history_.push_back(user);

  RecContext rc{model_, db_, cfg_.filter, cfg_.ctx_opts};
  GenerationConfig gen = cfg_.gen;
  gen.seed = derive_seed(cfg_.seed, "chat-" + std::to_string(turn_counter_++));
  GenResult res = generate_response(rc, history_, index_, cfg_.k_candidates,
                                    gen, *cache_);

  // fold the reply back into the dialog history, keeping [PH] spans bound to
  // the recommended items
  Turn reply;
  reply.speaker = Speaker::Recommender;
  size_t rec_used = 0;
  for (const auto& tok : res.emitted) {
    if (tok == Vocabulary::kRec) continue;
    if (tok == Vocabulary::kPh && rec_used < res.recommended.size()) {
      int pos = static_cast<int>(reply.tokens.size());
      reply.tokens.push_back(Vocabulary::kPh);
      reply.mentions.push_back({pos, pos + 1, res.recommended[rec_used]});
      ++rec_used;
    } else {
      reply.tokens.push_back(tok);
    }
  }
  reply.rec_ids = res.recommended;
  history_.push_back(std::move(reply));

  return {res.final_text, res.trace};
}

void ChatSession::reset() {
  history_.clear();
  turn_counter_ = 0;
}

}  // namespace convrec
