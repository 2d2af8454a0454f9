#include "recommender.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace convrec {

CandidateSet sample_negatives(const MetadataDb& db, int ground_truth, int m,
                              Rng& rng) {
  const int n = static_cast<int>(db.size());
  if (!db.has(ground_truth))
    throw DataError("sample_negatives: unknown ground truth " +
                    std::to_string(ground_truth));
  if (n < m + 1)
    throw DataError("sample_negatives: database of " + std::to_string(n) +
                    " items cannot supply " + std::to_string(m) +
                    " negatives");
  // pool of non-ground-truth ids in database order
  std::vector<int> pool;
  pool.reserve(static_cast<size_t>(n) - 1);
  for (const auto& it : db.items())
    if (it.item_id != ground_truth) pool.push_back(it.item_id);
  std::vector<int> picks = rng.sample_without_replacement(
      static_cast<int>(pool.size()), m);
  CandidateSet out;
  out.items.reserve(static_cast<size_t>(m) + 1);
  for (int p : picks) out.items.push_back(pool[static_cast<size_t>(p)]);
  out.ground_truth_index = rng.uniform_int(0, m);
  out.items.insert(out.items.begin() + out.ground_truth_index, ground_truth);
  return out;
}

Tensor selection_scores(const Tensor& d_r, const Tensor& cand_embs) {
  if (d_r.cols() != cand_embs.cols() || d_r.rows() != 1)
    throw ShapeError("selection_scores: shape mismatch " +
                     shape_str(d_r.shape()) + " vs " +
                     shape_str(cand_embs.shape()));
  return softmax_rows(matmul(d_r, transpose(cand_embs)));
}

ItemEmbedFn live_context_embedder(const RecContext& rc) {
  return [&rc](int item_id) {
    return encode_item(rc.model.ctx_enc, rc.db.by_id(item_id), rc.filter,
                       rc.model.vocab);
  };
}

Tensor rec_summary_vector(const RecContext& rc,
                          const MixedSequence& ctx_with_rec,
                          const ItemEmbedFn& embed) {
  Tensor emb = rc.model.realize(ctx_with_rec, embed);
  Tensor states = rc.model.decode_states_causal(emb);
  return slice_rows(states, states.rows() - 1, 1);
}

namespace {

Tensor candidate_embedding_matrix(const RecContext& rc,
                                  const std::vector<int>& items) {
  std::vector<Tensor> rows;
  rows.reserve(items.size());
  for (int id : items)
    rows.push_back(encode_item(rc.model.cand_enc, rc.db.by_id(id), rc.filter,
                               rc.model.vocab));
  return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

// Decoder pass over [context | candidate block]: contexts rows keep causal
// positions, every candidate slot shares position index context_len.
Tensor ranking_states(const RecContext& rc, const MixedSequence& ctx_with_rec,
                      const std::vector<int>& cand_items,
                      const ItemEmbedFn& ctx_embed,
                      const ItemEmbedFn& ite_embed) {
  if (cand_items.empty())
    throw ShapeError("ranking: candidate count must be positive");
  Tensor ctx_emb = rc.model.realize(ctx_with_rec, ctx_embed);
  const int L = ctx_emb.rows();
  const int M1 = static_cast<int>(cand_items.size());
  std::vector<Tensor> ite_rows;
  ite_rows.reserve(cand_items.size());
  for (int id : cand_items) ite_rows.push_back(ite_embed(id));
  Tensor full = concat_rows({ctx_emb, M1 == 1 ? ite_rows[0]
                                               : concat_rows(ite_rows)});
  std::vector<int> pos_ids(static_cast<size_t>(L + M1));
  std::iota(pos_ids.begin(), pos_ids.begin() + L, 0);
  std::fill(pos_ids.begin() + L, pos_ids.end(), L);
  return rc.model.decode_states(full, pos_ids,
                                build_mask(MaskRegime::Ranking, L, M1));
}

Tensor ranking_probs_from_states(const RecContext& rc, const Tensor& states,
                                 int context_len, int n_cands) {
  Tensor cand_states = slice_rows(states, context_len, n_cands);
  Tensor q = add(matmul(cand_states, rc.model.rank_w), rc.model.rank_b);
  return softmax_rows(transpose(q));  // 1 x n
}

}  // namespace

Tensor selection_loss(const RecContext& rc, const MixedSequence& ctx_with_rec,
                      const CandidateSet& cands) {
  Tensor d_r = rec_summary_vector(rc, ctx_with_rec, live_context_embedder(rc));
  Tensor cand_embs = candidate_embedding_matrix(rc, cands.items);
  Tensor logits = matmul(d_r, transpose(cand_embs));
  return cross_entropy_logits(logits, {cands.ground_truth_index});
}

Tensor ranking_scores(const RecContext& rc, const MixedSequence& ctx_with_rec,
                      const std::vector<int>& cand_items,
                      ItemEmbedCache* cache) {
  ItemEmbedFn embed = cache ? cache->context_fn() : live_context_embedder(rc);
  Tensor states = ranking_states(rc, ctx_with_rec, cand_items, embed, embed);
  return ranking_probs_from_states(rc, states,
                                   static_cast<int>(ctx_with_rec.length()),
                                   static_cast<int>(cand_items.size()));
}

Tensor ranking_loss(const RecContext& rc, const MixedSequence& ctx_with_rec,
                    const CandidateSet& cands) {
  ItemEmbedFn embed = live_context_embedder(rc);
  Tensor states =
      ranking_states(rc, ctx_with_rec, cands.items, embed, embed);
  const int L = static_cast<int>(ctx_with_rec.length());
  Tensor cand_states = slice_rows(states, L, static_cast<int>(cands.items.size()));
  Tensor q = add(matmul(cand_states, rc.model.rank_w), rc.model.rank_b);
  return cross_entropy_logits(transpose(q), {cands.ground_truth_index});
}

RecLosses selection_and_ranking_loss(const RecContext& rc,
                                     const MixedSequence& ctx_with_rec,
                                     const CandidateSet& cands) {
  ItemEmbedFn embed = live_context_embedder(rc);
  Tensor states = ranking_states(rc, ctx_with_rec, cands.items, embed, embed);
  const int L = static_cast<int>(ctx_with_rec.length());
  Tensor d_r = slice_rows(states, L - 1, 1);
  Tensor cand_embs = candidate_embedding_matrix(rc, cands.items);
  RecLosses out;
  out.select = cross_entropy_logits(matmul(d_r, transpose(cand_embs)),
                                    {cands.ground_truth_index});
  Tensor cand_states = slice_rows(states, L, static_cast<int>(cands.items.size()));
  Tensor q = add(matmul(cand_states, rc.model.rank_w), rc.model.rank_b);
  out.rank = cross_entropy_logits(transpose(q), {cands.ground_truth_index});
  return out;
}

// ---------------------------------------------------------------------------
// nearest-neighbor index

namespace {

struct Scored {
  double score;
  int id;
  int row;
};

void sort_scored(std::vector<Scored>& v) {
  std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

std::vector<double> kmeans_rows(const std::vector<double>& data, size_t n,
                                int d, int k, Rng& rng,
                                std::vector<int>* assign_out) {
  // random data points as initial centroids
  std::vector<int> init = rng.sample_without_replacement(static_cast<int>(n), k);
  std::vector<double> cent(static_cast<size_t>(k) * d);
  for (int c = 0; c < k; ++c)
    std::copy_n(data.data() + static_cast<size_t>(init[static_cast<size_t>(c)]) * d,
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
    if (!changed && iter > 0) break;
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
        // re-seed an empty cluster from a random point
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
  if (assign_out) *assign_out = std::move(assign);
  return cent;
}

}  // namespace

std::vector<int> NNIndex::query(const std::vector<double>& q, int k) const {
  const size_t n = ids.size();
  if (k < 1 || static_cast<size_t>(k) > n)
    throw DataError("query_index: K=" + std::to_string(k) +
                    " out of range for index of " + std::to_string(n) +
                    " items");
  if (static_cast<int>(q.size()) != d)
    throw ShapeError("query_index: query width " + std::to_string(q.size()) +
                     " vs index dim " + std::to_string(d));
  std::vector<Scored> scored;
  if (mode == Mode::Exact) {
    scored.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      const double* r = row(i);
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += r[j] * q[static_cast<size_t>(j)];
      scored.push_back({s, ids[i], static_cast<int>(i)});
    }
  } else {
    std::vector<Scored> cents;
    const int nc = static_cast<int>(buckets.size());
    cents.reserve(static_cast<size_t>(nc));
    for (int c = 0; c < nc; ++c) {
      const double* m = centroids.data() + static_cast<size_t>(c) * d;
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += m[j] * q[static_cast<size_t>(j)];
      cents.push_back({s, c, c});
    }
    sort_scored(cents);
    int probes = std::max(n_probe, 1);
    for (int c = 0; c < nc && (c < probes || scored.size() < static_cast<size_t>(k));
         ++c) {
      for (int ri : buckets[static_cast<size_t>(cents[static_cast<size_t>(c)].row)]) {
        const double* r = row(static_cast<size_t>(ri));
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += r[j] * q[static_cast<size_t>(j)];
        scored.push_back({s, ids[static_cast<size_t>(ri)], ri});
      }
    }
  }
  sort_scored(scored);
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k && i < static_cast<int>(scored.size()); ++i)
    out.push_back(scored[static_cast<size_t>(i)].id);
  return out;
}

NNIndex NNIndex::from_matrix(std::vector<int> ids_in,
                             std::vector<double> emb_in, int d, Mode mode,
                             uint64_t seed, double recall_target) {
  if (ids_in.empty()) throw DataError("index: empty database");
  if (emb_in.size() != ids_in.size() * static_cast<size_t>(d))
    throw ShapeError("index: embedding matrix size mismatch");
  NNIndex idx;
  idx.mode = mode;
  idx.d = d;
  idx.ids = std::move(ids_in);
  idx.emb = std::move(emb_in);
  if (mode == Mode::Exact) return idx;

  const size_t n = idx.ids.size();
  const int k = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n))));
  Rng rng(derive_seed(seed, "index-buckets"));
  std::vector<int> assign;
  idx.centroids = kmeans_rows(idx.emb, n, d, k, rng, &assign);
  idx.buckets.assign(static_cast<size_t>(k), {});
  for (size_t i = 0; i < n; ++i)
    idx.buckets[static_cast<size_t>(assign[i])].push_back(static_cast<int>(i));

  // tune n_probe until measured recall on the build corpus meets the target
  NNIndex exact = idx;
  exact.mode = Mode::Exact;
  const int probe_k = std::min<int>(10, static_cast<int>(n));
  for (idx.n_probe = 1; idx.n_probe <= k; ++idx.n_probe) {
    size_t hits = 0, total = 0;
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> q(idx.row(i), idx.row(i) + d);
      auto truth = exact.query(q, probe_k);
      auto got = idx.query(q, probe_k);
      for (int t : truth) {
        ++total;
        if (std::find(got.begin(), got.end(), t) != got.end()) ++hits;
      }
    }
    idx.measured_recall = static_cast<double>(hits) / static_cast<double>(total);
    if (idx.measured_recall >= recall_target) break;
  }
  if (idx.n_probe > k) idx.n_probe = k;
  return idx;
}

namespace {
constexpr char kIndexMagic[8] = {'C', 'V', 'R', 'I', 'D', 'X', '0', '1'};

template <typename T>
void putv(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T getv(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("index: truncated file");
  return v;
}
}  // namespace

void NNIndex::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("index: cannot open " + path + " for writing");
  os.write(kIndexMagic, sizeof(kIndexMagic));
  putv<uint32_t>(os, 1);
  putv<uint8_t>(os, mode == Mode::Exact ? 0 : 1);
  putv<uint64_t>(os, ids.size());
  putv<uint32_t>(os, static_cast<uint32_t>(d));
  putv<uint64_t>(os, encoder_checksum);
  os.write(reinterpret_cast<const char*>(emb.data()),
           static_cast<std::streamsize>(emb.size() * sizeof(double)));
  for (int id : ids) putv<int64_t>(os, id);
  if (mode == Mode::Approx) {
    putv<uint32_t>(os, static_cast<uint32_t>(buckets.size()));
    putv<uint32_t>(os, static_cast<uint32_t>(n_probe));
    putv<double>(os, measured_recall);
    os.write(reinterpret_cast<const char*>(centroids.data()),
             static_cast<std::streamsize>(centroids.size() * sizeof(double)));
    for (const auto& b : buckets) {
      putv<uint64_t>(os, b.size());
      for (int r : b) putv<int64_t>(os, r);
    }
  }
  if (!os) throw DataError("index: write failed for " + path);
}

NNIndex NNIndex::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("index: cannot open " + path +
                           " (run the `index` command first)");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kIndexMagic, sizeof(kIndexMagic)) != 0)
    throw DataError("index: " + path + " has wrong format tag");
  if (getv<uint32_t>(is) != 1) throw DataError("index: unsupported version");
  NNIndex idx;
  idx.mode = getv<uint8_t>(is) == 0 ? Mode::Exact : Mode::Approx;
  uint64_t n = getv<uint64_t>(is);
  idx.d = static_cast<int>(getv<uint32_t>(is));
  idx.encoder_checksum = getv<uint64_t>(is);
  idx.emb.resize(n * static_cast<size_t>(idx.d));
  is.read(reinterpret_cast<char*>(idx.emb.data()),
          static_cast<std::streamsize>(idx.emb.size() * sizeof(double)));
  idx.ids.resize(n);
  for (auto& id : idx.ids) id = static_cast<int>(getv<int64_t>(is));
  if (idx.mode == Mode::Approx) {
    uint32_t nc = getv<uint32_t>(is);
    idx.n_probe = static_cast<int>(getv<uint32_t>(is));
    idx.measured_recall = getv<double>(is);
    idx.centroids.resize(static_cast<size_t>(nc) * idx.d);
    is.read(reinterpret_cast<char*>(idx.centroids.data()),
            static_cast<std::streamsize>(idx.centroids.size() * sizeof(double)));
    idx.buckets.resize(nc);
    for (auto& b : idx.buckets) {
      uint64_t bn = getv<uint64_t>(is);
      b.resize(bn);
      for (auto& r : b) r = static_cast<int>(getv<int64_t>(is));
    }
  }
  if (!is) throw DataError("index: truncated file " + path);
  return idx;
}

NNIndex build_index(const RecContext& rc, NNIndex::Mode mode, uint64_t seed) {
  if (rc.db.size() == 0) throw DataError("build_index: empty database");
  NoGradGuard ng;
  std::vector<int> ids;
  std::vector<double> emb;
  emb.reserve(rc.db.size() * static_cast<size_t>(rc.model.cfg.d_model));
  for (const auto& item : rc.db.items()) {
    ids.push_back(item.item_id);
    Tensor e = encode_item(rc.model.cand_enc, item, rc.filter, rc.model.vocab);
    emb.insert(emb.end(), e.values().begin(), e.values().end());
  }
  NNIndex idx = NNIndex::from_matrix(std::move(ids), std::move(emb),
                                     rc.model.cfg.d_model, mode, seed);
  idx.encoder_checksum = rc.model.candidate_encoder_checksum();
  return idx;
}

std::vector<double> query_vector(const RecContext& rc,
                                 const MixedSequence& ctx_with_rec,
                                 ItemEmbedCache& cache) {
  NoGradGuard ng;
  Tensor d_r = rec_summary_vector(rc, ctx_with_rec, cache.context_fn());
  return d_r.values();
}

std::vector<ScoredItem> rank_candidates(const RecContext& rc,
                                        const MixedSequence& ctx_with_rec,
                                        std::vector<int> cand_items,
                                        ItemEmbedCache& cache,
                                        const std::vector<double>* d_r) {
  if (cand_items.empty())
    throw ShapeError("rank_candidates: candidate count must be positive");
  NoGradGuard ng;
  // canonical evaluation order makes the output invariant to input shuffles
  std::sort(cand_items.begin(), cand_items.end());
  cand_items.erase(std::unique(cand_items.begin(), cand_items.end()),
                   cand_items.end());
  Tensor probs = ranking_scores(rc, ctx_with_rec, cand_items, &cache);
  std::vector<ScoredItem> out(cand_items.size());
  for (size_t i = 0; i < cand_items.size(); ++i) {
    out[i].item_id = cand_items[i];
    out[i].r_score = probs.values()[i];
  }
  if (d_r) {
    // selection probabilities restricted to this candidate list (trace)
    std::vector<double> dots(cand_items.size());
    double mx = 0.0;
    for (size_t i = 0; i < cand_items.size(); ++i) {
      const Tensor& e = cache.candidate_embedding(cand_items[i]);
      double s = 0.0;
      for (int j = 0; j < rc.model.cfg.d_model; ++j)
        s += e.values()[static_cast<size_t>(j)] * (*d_r)[static_cast<size_t>(j)];
      dots[i] = s;
      if (i == 0 || s > mx) mx = s;
    }
    double z = 0.0;
    for (double& s : dots) {
      s = std::exp(s - mx);
      z += s;
    }
    for (size_t i = 0; i < cand_items.size(); ++i) out[i].p_score = dots[i] / z;
  }
  std::sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.r_score != b.r_score) return a.r_score > b.r_score;
    return a.item_id < b.item_id;
  });
  return out;
}

std::vector<int> two_phase_recommend(const RecContext& rc,
                                     const MixedSequence& ctx_with_rec,
                                     const NNIndex& index, int k,
                                     ItemEmbedCache& cache,
                                     TwoPhaseTrace* trace) {
  std::vector<double> d_r = query_vector(rc, ctx_with_rec, cache);
  int kk = std::min<int>(k, static_cast<int>(index.size()));
  std::vector<int> retrieved = index.query(d_r, kk);
  auto ranked = rank_candidates(rc, ctx_with_rec, retrieved, cache, &d_r);
  if (trace) {
    trace->retrieved = retrieved;
    trace->ranked = ranked;
  }
  std::vector<int> out;
  out.reserve(ranked.size());
  for (const auto& s : ranked) out.push_back(s.item_id);
  return out;
}

}  // namespace convrec
