#include "responder.hpp"

#include <algorithm>
#include <cmath>

namespace convrec {

MixedSequence build_rec_query(const RecContext& rc,
                              const std::vector<Turn>& prefix,
                              TruncationLog* log) {
  ContextOptions opts = rc.ctx_opts;
  opts.max_tokens = std::max(1, opts.max_tokens - 2);  // room for prompt+[REC]
  MixedSequence ctx =
      build_context(prefix, rc.model.vocab, opts, log ? log : rc.trunc);
  ctx = append_word(std::move(ctx), Vocabulary::RECSPK);
  return append_rec_token(std::move(ctx));
}

LmSample build_lm_sample(const RecContext& rc, const std::vector<Turn>& prefix,
                         const Turn& target_turn) {
  if (target_turn.speaker != Speaker::Recommender)
    throw DataError("lm sample: target must be a system utterance");
  SubstitutedTurn sub = substitute_placeholders(target_turn);
  if (sub.tokens.empty()) throw DataError("lm sample: empty target utterance");

  const bool rec = target_turn.is_rec_turn();
  const int target_budget = static_cast<int>(sub.tokens.size()) + 3 +
                            (rec ? 1 + static_cast<int>(target_turn.rec_ids.size())
                                 : 0);
  ContextOptions opts = rc.ctx_opts;
  opts.max_tokens = std::max(1, opts.max_tokens - target_budget);

  LmSample s;
  s.seq = build_context(prefix, rc.model.vocab, opts, rc.trunc);
  s.seq = append_word(std::move(s.seq), Vocabulary::RECSPK);

  auto push_target = [&s](int vocab_id) {
    // predict this token from the current last row, then append it
    s.pred_rows.push_back(static_cast<int>(s.seq.length()) - 1);
    s.targets.push_back(vocab_id);
    s.seq.entries.push_back(MixedEntry::word(vocab_id));
  };

  if (rec) {
    push_target(Vocabulary::REC);
    // teacher forcing: ground-truth ITEs follow the [REC] they explain
    for (int gt : target_turn.rec_ids)
      s.seq.entries.push_back(MixedEntry::item(gt));
  }
  for (const auto& tok : sub.tokens)
    push_target(rc.model.vocab.id(tok));
  push_target(Vocabulary::EOS);
  return s;
}

Tensor lm_loss(const RecContext& rc, const LmSample& sample) {
  if (sample.targets.empty()) throw DataError("lm_loss: empty target");
  Tensor emb = rc.model.realize(sample.seq, live_context_embedder(rc));
  Tensor states = rc.model.decode_states_causal(emb);
  Tensor logits = rc.model.logits_for_rows(states, sample.pred_rows);
  return cross_entropy_logits(logits, sample.targets);
}

Tensor joint_loss(const RecContext& rc, const std::vector<Turn>& prefix,
                  const Turn& target_turn, const JointLossWeights& w,
                  int m_negatives, Rng& neg_rng, JointLossParts* parts) {
  w.validate();
  if (target_turn.speaker != Speaker::Recommender)
    throw DataError("joint_loss: target must be a system utterance");
  std::vector<Tensor> terms;
  JointLossParts p;
  p.has_rec = target_turn.is_rec_turn();

  if (p.has_rec && (w.a > 0.0 || w.b > 0.0)) {
    MixedSequence query = build_rec_query(rc, prefix);
    Tensor sel_sum, rank_sum;
    for (int gt : target_turn.rec_ids) {
      CandidateSet cands = sample_negatives(rc.db, gt, m_negatives, neg_rng);
      RecLosses losses = selection_and_ranking_loss(rc, query, cands);
      sel_sum = sel_sum.defined() ? add(sel_sum, losses.select) : losses.select;
      rank_sum = rank_sum.defined() ? add(rank_sum, losses.rank) : losses.rank;
    }
    const double inv = 1.0 / static_cast<double>(target_turn.rec_ids.size());
    Tensor sel = scale(sel_sum, inv);
    Tensor rank = scale(rank_sum, inv);
    p.select = sel.item();
    p.rank = rank.item();
    if (w.a > 0.0) terms.push_back(scale(sel, w.a));
    if (w.b > 0.0) terms.push_back(scale(rank, w.b));
  }
  if (w.c > 0.0) {
    Tensor res = lm_loss(rc, build_lm_sample(rc, prefix, target_turn));
    p.res = res.item();
    terms.push_back(scale(res, w.c));
  }
  if (parts) *parts = p;
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

namespace {

int pick_token(const Tensor& logits, const GenerationConfig& cfg, Rng& rng) {
  const auto& v = logits.values();
  if (cfg.decode == GenerationConfig::Decode::Greedy) {
    int best = 0;
    for (size_t j = 1; j < v.size(); ++j)
      if (v[j] > v[static_cast<size_t>(best)]) best = static_cast<int>(j);
    return best;
  }
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  std::vector<double> p(v.size());
  double z = 0.0;
  for (size_t j = 0; j < v.size(); ++j) {
    p[j] = std::exp((v[j] - mx) / cfg.temperature);
    z += p[j];
  }
  double u = rng.uniform() * z;
  double acc = 0.0;
  for (size_t j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

GenResult generate_response(const RecContext& rc,
                            const std::vector<Turn>& prefix,
                            const NNIndex& index, int k,
                            const GenerationConfig& cfg,
                            ItemEmbedCache& cache) {
  cfg.validate();
  NoGradGuard ng;
  GenResult out;
  Rng sample_rng(derive_seed(cfg.seed, "generate"));

  ContextOptions opts = rc.ctx_opts;
  opts.max_tokens = std::max(1, opts.max_tokens - (cfg.max_new_tokens + 2));
  MixedSequence seq = build_context(prefix, rc.model.vocab, opts);
  seq = append_word(std::move(seq), Vocabulary::RECSPK);

  const int room = rc.model.cfg.max_positions;
  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    if (static_cast<int>(seq.length()) + 1 > room) {
      out.hit_token_cap = true;
      break;
    }
    Tensor emb = rc.model.realize(seq, cache.context_fn());
    Tensor states = rc.model.decode_states_causal(emb);
    Tensor logits = rc.model.logits_for_rows(
        states, {static_cast<int>(seq.length()) - 1});
    int tok = pick_token(logits, cfg, sample_rng);
    if (tok == Vocabulary::EOS) break;
    if (tok == Vocabulary::REC) {
      seq = append_rec_token(std::move(seq));
      out.emitted.push_back(Vocabulary::kRec);
      if (static_cast<int>(seq.length()) + 1 > room) {
        out.hit_token_cap = true;
        break;
      }
      TwoPhaseTrace trace;
      std::vector<int> ranked =
          two_phase_recommend(rc, seq, index, k, cache, &trace);
      RecEvent ev;
      ev.step = step;
      ev.chosen = ranked.front();
      ev.candidates = trace.ranked;
      out.rec_events.push_back(std::move(ev));
      out.recommended.push_back(ranked.front());
      seq.entries.push_back(MixedEntry::item(ranked.front()));
    } else {
      seq = append_word(std::move(seq), tok);
      out.emitted.push_back(rc.model.vocab.token(tok));
    }
  }
  if (static_cast<int>(out.emitted.size()) >= cfg.max_new_tokens)
    out.hit_token_cap = true;

  // left-to-right placeholder substitution with the recommended titles
  nlohmann::json substitutions = nlohmann::json::array();
  size_t next_rec = 0;
  for (const auto& tok : out.emitted) {
    if (tok == Vocabulary::kRec) continue;  // structural, not surface text
    if (tok == Vocabulary::kPh) {
      if (next_rec < out.recommended.size()) {
        int id = out.recommended[next_rec];
        const std::string& title = rc.db.by_id(id).title;
        for (auto& piece : tokenize(title)) out.final_tokens.push_back(piece);
        substitutions.push_back({{"ph_index", next_rec},
                                 {"item_id", id},
                                 {"title", title}});
        ++next_rec;
      } else {
        out.final_tokens.push_back("[PH?]");
        ++out.unfilled_placeholders;
      }
    } else {
      out.final_tokens.push_back(tok);
    }
  }
  out.final_text = detokenize(out.final_tokens);

  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : out.rec_events) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& s : ev.candidates)
      cands.push_back({{"id", s.item_id}, {"p", s.p_score}, {"r", s.r_score}});
    events.push_back(
        {{"step", ev.step}, {"chosen", ev.chosen}, {"candidates", cands}});
  }
  out.trace = {{"emitted", out.emitted},
               {"final_text", out.final_text},
               {"recommended", out.recommended},
               {"rec_events", events},
               {"substitutions", substitutions},
               {"unfilled_placeholders", out.unfilled_placeholders},
               {"hit_token_cap", out.hit_token_cap}};
  return out;
}

double perplexity(const RecContext& rc, const std::vector<Dialog>& dialogs) {
  NoGradGuard ng;
  double total_nll = 0.0;
  int64_t total_tokens = 0;
  for (const auto& d : dialogs) {
    for (size_t t = 0; t < d.turns.size(); ++t) {
      if (d.turns[t].speaker != Speaker::Recommender) continue;
      std::vector<Turn> prefix(d.turns.begin(),
                               d.turns.begin() + static_cast<long>(t));
      LmSample sample = build_lm_sample(rc, prefix, d.turns[t]);
      Tensor loss = lm_loss(rc, sample);
      total_nll += loss.item() * static_cast<double>(sample.targets.size());
      total_tokens += static_cast<int64_t>(sample.targets.size());
    }
  }
  if (total_tokens == 0)
    throw DataError("perplexity: no system utterances in corpus");
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

}  // namespace convrec
