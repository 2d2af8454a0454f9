#include "evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace convrec {

double recall_at_k(const std::vector<std::vector<int>>& ranked,
                   const std::vector<int>& ground_truths, int k) {
  if (ranked.empty() || ranked.size() != ground_truths.size())
    throw DataError("recall_at_k: empty or misaligned evaluation set");
  if (k < 1) throw DataError("recall_at_k: k must be at least 1");
  int hits = 0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    const auto& list = ranked[i];
    const int upto = std::min<int>(k, static_cast<int>(list.size()));
    for (int j = 0; j < upto; ++j)
      if (list[static_cast<size_t>(j)] == ground_truths[i]) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

Decomposition decompose_accuracy(
    const std::vector<std::vector<int>>& candidates,
    const std::vector<std::vector<int>>& ranked,
    const std::vector<int>& ground_truths, int k) {
  if (candidates.empty() || candidates.size() != ranked.size() ||
      candidates.size() != ground_truths.size())
    throw DataError("decompose_accuracy: misaligned inputs");
  int recalled = 0, topk = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    std::vector<int> a = candidates[i], b = ranked[i];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b)
      throw DataError("decompose_accuracy: ranked list " + std::to_string(i) +
                      " is not a permutation of its candidate list");
    bool in_cands =
        std::find(candidates[i].begin(), candidates[i].end(),
                  ground_truths[i]) != candidates[i].end();
    if (!in_cands) continue;
    ++recalled;
    const int upto = std::min<int>(k, static_cast<int>(ranked[i].size()));
    for (int j = 0; j < upto; ++j)
      if (ranked[i][static_cast<size_t>(j)] == ground_truths[i]) {
        ++topk;
        break;
      }
  }
  Decomposition d;
  d.recall_acc = static_cast<double>(recalled) /
                 static_cast<double>(candidates.size());
  d.ranking_acc =
      recalled > 0 ? static_cast<double>(topk) / static_cast<double>(recalled)
                   : 0.0;
  d.final_acc = d.recall_acc * d.ranking_acc;
  return d;
}

bool response_contains_title(const std::vector<std::string>& response_tokens,
                             const std::string& title) {
  std::vector<std::string> t = tokenize(title);
  if (t.empty() || response_tokens.size() < t.size()) return false;
  for (size_t i = 0; i + t.size() <= response_tokens.size(); ++i) {
    bool all = true;
    for (size_t j = 0; j < t.size(); ++j)
      if (response_tokens[i + j] != t[j]) {
        all = false;
        break;
      }
    if (all) return true;
  }
  return false;
}

double response_recall(
    const std::vector<std::vector<std::string>>& response_tokens,
    const std::vector<std::string>& ground_truth_titles) {
  if (response_tokens.size() != ground_truth_titles.size())
    throw DataError("response_recall: misaligned inputs");
  if (response_tokens.empty()) return 0.0;
  int hits = 0;
  for (size_t i = 0; i < response_tokens.size(); ++i)
    if (response_contains_title(response_tokens[i], ground_truth_titles[i]))
      ++hits;
  return static_cast<double>(hits) /
         static_cast<double>(response_tokens.size());
}

namespace {

std::string gram_key(const std::vector<std::string>& tokens, size_t i, int n) {
  std::string g;
  for (int k = 0; k < n; ++k) {
    g += tokens[i + static_cast<size_t>(k)];
    g += '\x1f';
  }
  return g;
}

}  // namespace

double distinct_n(const std::vector<std::vector<std::string>>& responses,
                  int n) {
  if (n < 1) throw DataError("distinct_n: n must be at least 1");
  if (responses.empty()) throw DataError("distinct_n: empty response set");
  double total = 0.0;
  for (const auto& r : responses) {
    if (static_cast<int>(r.size()) < n || r.empty()) continue;
    std::set<std::string> grams;
    for (size_t i = 0; i + static_cast<size_t>(n) <= r.size(); ++i)
      grams.insert(gram_key(r, i, n));
    total += static_cast<double>(grams.size()) / static_cast<double>(r.size());
  }
  return total / static_cast<double>(responses.size());
}

double distinct_n_corpus(
    const std::vector<std::vector<std::string>>& responses, int n) {
  if (n < 1) throw DataError("distinct_n: n must be at least 1");
  if (responses.empty()) throw DataError("distinct_n: empty response set");
  std::set<std::string> grams;
  int64_t tokens = 0;
  for (const auto& r : responses) {
    tokens += static_cast<int64_t>(r.size());
    if (static_cast<int>(r.size()) < n) continue;
    for (size_t i = 0; i + static_cast<size_t>(n) <= r.size(); ++i)
      grams.insert(gram_key(r, i, n));
  }
  return tokens == 0 ? 0.0
                     : static_cast<double>(grams.size()) /
                           static_cast<double>(tokens);
}

double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references,
            int max_n) {
  if (candidates.empty() || candidates.size() != references.size())
    throw DataError("bleu: empty or misaligned candidate/reference pairs");
  if (max_n < 1) throw DataError("bleu: order must be at least 1");
  std::vector<int64_t> match(static_cast<size_t>(max_n), 0);
  std::vector<int64_t> total(static_cast<size_t>(max_n), 0);
  int64_t cand_len = 0, ref_len = 0;
  for (size_t s = 0; s < candidates.size(); ++s) {
    const auto& c = candidates[s];
    const auto& r = references[s];
    cand_len += static_cast<int64_t>(c.size());
    ref_len += static_cast<int64_t>(r.size());
    for (int n = 1; n <= max_n; ++n) {
      if (static_cast<int>(c.size()) < n) continue;
      std::map<std::string, int64_t> ref_counts;
      if (static_cast<int>(r.size()) >= n)
        for (size_t i = 0; i + static_cast<size_t>(n) <= r.size(); ++i)
          ++ref_counts[gram_key(r, i, n)];
      std::map<std::string, int64_t> cand_counts;
      for (size_t i = 0; i + static_cast<size_t>(n) <= c.size(); ++i)
        ++cand_counts[gram_key(c, i, n)];
      for (const auto& [g, cnt] : cand_counts) {
        total[static_cast<size_t>(n - 1)] += cnt;
        auto it = ref_counts.find(g);
        if (it != ref_counts.end())
          match[static_cast<size_t>(n - 1)] += std::min(cnt, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    int64_t m = match[static_cast<size_t>(n - 1)];
    int64_t t = total[static_cast<size_t>(n - 1)];
    if (t == 0) return 0.0;  // no n-grams of this order at all
    if (m == 0) {
      if (n == 1) return 0.0;  // zero unigram overlap scores zero
      // add-one smoothing on zero-count higher orders
      log_sum += std::log(1.0 / static_cast<double>(t + 1));
    } else {
      log_sum += std::log(static_cast<double>(m) / static_cast<double>(t));
    }
  }
  double bp = 1.0;
  if (cand_len < ref_len && cand_len > 0)
    bp = std::exp(1.0 - static_cast<double>(ref_len) /
                            static_cast<double>(cand_len));
  return bp * std::exp(log_sum / max_n);
}

// ---------------------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
  nlohmann::json k_json = nlohmann::json::object();
  for (size_t i = 0; i < k_values.size(); ++i) {
    std::string key = "@" + std::to_string(k_values[i]);
    k_json[key] = {{"recall", recall_at[i]},
                   {"ranking_acc", ranking_acc[i]},
                   {"final_acc", final_acc[i]}};
  }
  return {{"recall_acc", recall_acc},
          {"per_k", k_json},
          {"rer", rer},
          {"distinct2", distinct2},
          {"distinct3", distinct3},
          {"distinct4", distinct4},
          {"bleu2", bleu2},
          {"bleu4", bleu4},
          {"ppl", ppl},
          {"rec_samples", rec_samples},
          {"generated", generated}};
}

namespace {
std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}
std::string pad(const std::string& s, size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}
}  // namespace

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << pad("top k", 8) << pad("RankingAcc", 12) << pad("RecallAcc", 12)
     << pad("FinalAcc", 12) << "\n";
  for (size_t i = 0; i < k_values.size(); ++i)
    os << pad("@" + std::to_string(k_values[i]), 8)
       << pad(fmt(ranking_acc[i]), 12) << pad(fmt(recall_acc), 12)
       << pad(fmt(final_acc[i]), 12) << "\n";
  os << "\n"
     << pad("R@1", 8) << pad("R@10", 8) << pad("R@50", 8) << pad("ReR", 8)
     << pad("PPL", 10) << pad("Dist2", 8) << pad("Dist3", 8) << pad("Dist4", 8)
     << pad("Bleu2", 8) << pad("Bleu4", 8) << "\n";
  os << pad(fmt(recall_at[0], 3), 8) << pad(fmt(recall_at[1], 3), 8)
     << pad(fmt(recall_at[2], 3), 8) << pad(fmt(rer, 3), 8)
     << pad(fmt(ppl, 2), 10) << pad(fmt(distinct2, 3), 8)
     << pad(fmt(distinct3, 3), 8) << pad(fmt(distinct4, 3), 8)
     << pad(fmt(bleu2, 3), 8) << pad(fmt(bleu4, 3), 8) << "\n";
  return os.str();
}

EvalReport run_eval(const RecContext& rc, const std::vector<Dialog>& dialogs,
                    const NNIndex& index, int k_candidates,
                    const GenerationConfig& gen_cfg, EvalRawLists* raw,
                    std::vector<GenResult>* generations) {
  if (dialogs.empty()) throw DataError("run_eval: empty evaluation set");
  NoGradGuard ng;
  ItemEmbedCache cache(rc.model, rc.db, rc.filter);

  EvalRawLists lists;
  std::vector<std::vector<std::string>> responses, references;
  std::vector<std::string> gt_titles;

  for (const auto& d : dialogs) {
    for (size_t t = 0; t < d.turns.size(); ++t) {
      const Turn& turn = d.turns[t];
      if (turn.speaker != Speaker::Recommender || !turn.is_rec_turn())
        continue;
      std::vector<Turn> prefix(d.turns.begin(),
                               d.turns.begin() + static_cast<long>(t));
      MixedSequence query = build_rec_query(rc, prefix);
      TwoPhaseTrace trace;
      std::vector<int> ranked =
          two_phase_recommend(rc, query, index, k_candidates, cache, &trace);

      GenResult gen = generate_response(rc, prefix, index, k_candidates,
                                        gen_cfg, cache);
      // reference: the gold utterance with mention markup resolved to titles
      Turn gold = turn;
      std::vector<std::string> ref_tokens;
      {
        SubstitutedTurn sub = substitute_placeholders(gold);
        size_t next = 0;
        for (const auto& tok : sub.tokens) {
          if (tok == Vocabulary::kPh && next < sub.item_ids.size()) {
            for (auto& piece :
                 tokenize(rc.db.by_id(sub.item_ids[next]).title))
              ref_tokens.push_back(piece);
            ++next;
          } else {
            ref_tokens.push_back(tok);
          }
        }
      }
      for (int gt : turn.rec_ids) {
        lists.ground_truths.push_back(gt);
        lists.candidates.push_back(trace.retrieved);
        lists.ranked.push_back(ranked);
        responses.push_back(gen.final_tokens);
        references.push_back(ref_tokens);
        gt_titles.push_back(rc.db.by_id(gt).title);
      }
      if (generations) generations->push_back(gen);
    }
  }
  if (lists.ground_truths.empty())
    throw DataError("run_eval: no recommendation-labeled turns");

  EvalReport rep;
  rep.rec_samples = static_cast<int>(lists.ground_truths.size());
  rep.generated = static_cast<int>(responses.size());
  rep.recall_at.resize(rep.k_values.size());
  rep.ranking_acc.resize(rep.k_values.size());
  rep.final_acc.resize(rep.k_values.size());
  for (size_t i = 0; i < rep.k_values.size(); ++i) {
    rep.recall_at[i] =
        recall_at_k(lists.ranked, lists.ground_truths, rep.k_values[i]);
    Decomposition dec = decompose_accuracy(lists.candidates, lists.ranked,
                                           lists.ground_truths,
                                           rep.k_values[i]);
    rep.recall_acc = dec.recall_acc;
    rep.ranking_acc[i] = dec.ranking_acc;
    rep.final_acc[i] = dec.final_acc;
  }
  rep.rer = response_recall(responses, gt_titles);
  rep.distinct2 = distinct_n(responses, 2);
  rep.distinct3 = distinct_n(responses, 3);
  rep.distinct4 = distinct_n(responses, 4);
  rep.bleu2 = bleu(responses, references, 2);
  rep.bleu4 = bleu(responses, references, 4);
  rep.ppl = perplexity(rc, dialogs);
  if (raw) *raw = std::move(lists);
  return rep;
}

// ---------------------------------------------------------------------------
// clustering purity

namespace {

// returns assignments for one k-means run
std::vector<int> kmeans_assign(const std::vector<double>& data, size_t n,
                               int d, int k, Rng& rng) {
  std::vector<int> init = rng.sample_without_replacement(static_cast<int>(n), k);
  std::vector<double> cent(static_cast<size_t>(k) * d);
  for (int c = 0; c < k; ++c)
    std::copy_n(data.data() +
                    static_cast<size_t>(init[static_cast<size_t>(c)]) * d,
                d, cent.data() + static_cast<size_t>(c) * d);
  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      const double* x = data.data() + i * static_cast<size_t>(d);
      int best = 0;
      double best_d = 0.0;
      for (int c = 0; c < k; ++c) {
        const double* m = cent.data() + static_cast<size_t>(c) * d;
        double dist = 0.0;
        for (int j = 0; j < d; ++j) dist += (x[j] - m[j]) * (x[j] - m[j]);
        if (c == 0 || dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sums(static_cast<size_t>(k) * d, 0.0);
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (size_t i = 0; i < n; ++i) {
      const double* x = data.data() + i * static_cast<size_t>(d);
      double* s = sums.data() + static_cast<size_t>(assign[i]) * d;
      for (int j = 0; j < d; ++j) s[j] += x[j];
      ++counts[static_cast<size_t>(assign[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] == 0) {
        int pick = rng.uniform_int(0, static_cast<int>(n) - 1);
        std::copy_n(data.data() + static_cast<size_t>(pick) * d, d,
                    cent.data() + static_cast<size_t>(c) * d);
        continue;
      }
      double inv = 1.0 / counts[static_cast<size_t>(c)];
      for (int j = 0; j < d; ++j)
        cent[static_cast<size_t>(c) * d + j] =
            sums[static_cast<size_t>(c) * d + j] * inv;
    }
  }
  return assign;
}

}  // namespace

nlohmann::json ClusterReport::to_json() const {
  nlohmann::json per_k = nlohmann::json::object();
  for (size_t i = 0; i < k_values.size(); ++i)
    per_k["K=" + std::to_string(k_values[i])] = purity[i];
  return {{"encoder", encoder},
          {"repeats", repeats},
          {"items", item_count},
          {"purity", per_k}};
}

std::string ClusterReport::to_table() const {
  std::ostringstream os;
  os << pad("Encoder", 12);
  for (int k : k_values) os << pad("K=" + std::to_string(k), 10);
  os << "\n" << pad(encoder, 12);
  for (size_t i = 0; i < k_values.size(); ++i) os << pad(fmt(purity[i], 3), 10);
  os << "\n";
  return os.str();
}

ClusterReport cluster_purity(const MetadataDb& db, const Model& model,
                             EncoderInstance instance,
                             const FieldFilter& filter,
                             const std::vector<int>& k_values, int repeats,
                             uint64_t seed) {
  NoGradGuard ng;
  // single-genre items only
  std::vector<const ItemMetadata*> items;
  for (const auto& m : db.items())
    if (m.genre.size() == 1) items.push_back(&m);
  int max_k = 0;
  for (int k : k_values) max_k = std::max(max_k, k);
  if (static_cast<int>(items.size()) < std::max(max_k, 1))
    throw DataError("cluster_purity: only " + std::to_string(items.size()) +
                    " single-genre items for K up to " +
                    std::to_string(max_k));

  const ItemEncoderParams& enc = instance == EncoderInstance::Context
                                     ? model.ctx_enc
                                     : model.cand_enc;
  const int d = model.cfg.d_model;
  std::vector<double> data;
  data.reserve(items.size() * static_cast<size_t>(d));
  std::vector<std::string> genres;
  for (const auto* m : items) {
    Tensor e = encode_item(enc, *m, filter, model.vocab);
    data.insert(data.end(), e.values().begin(), e.values().end());
    genres.push_back(m->genre[0]);
  }

  ClusterReport rep;
  rep.k_values = k_values;
  rep.repeats = repeats;
  rep.encoder = encoder_instance_name(instance);
  rep.item_count = static_cast<int>(items.size());
  for (int k : k_values) {
    double total = 0.0;
    for (int r = 0; r < repeats; ++r) {
      Rng rng(derive_seed(seed, "kmeans-" + std::to_string(k) + "-" +
                                    std::to_string(r)));
      std::vector<int> assign = kmeans_assign(data, items.size(), d, k, rng);
      // majority-genre count per cluster
      std::vector<std::map<std::string, int>> counts(static_cast<size_t>(k));
      for (size_t i = 0; i < items.size(); ++i)
        ++counts[static_cast<size_t>(assign[i])][genres[i]];
      int majority = 0;
      for (const auto& c : counts) {
        int best = 0;
        for (const auto& [g, n] : c) best = std::max(best, n);
        majority += best;
      }
      total += static_cast<double>(majority) /
               static_cast<double>(items.size());
    }
    rep.purity.push_back(total / repeats);
  }
  return rep;
}

}  // namespace convrec
