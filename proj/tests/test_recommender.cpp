#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "corpus.hpp"
#include "pipeline.hpp"
#include "recommender.hpp"
#include "responder.hpp"
#include "test_util.hpp"

using namespace convrec;

namespace {

struct Fixture {
  SyntheticCorpus corpus;
  Model model;
  ContextOptions opts;

  explicit Fixture(uint64_t seed = 21, int n_items = 10, int d_model = 16) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.n_items = n_items;
    spec.n_genres = 2;
    spec.n_dialogs = 8;
    corpus = generate_synthetic(spec);
    Vocabulary vocab = build_vocabulary(corpus.dialogs, corpus.db);
    DecoderConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = d_model;
    cfg.d_ff = 2 * d_model;
    cfg.max_positions = 128;
    model.init(cfg, vocab, false, seed);
    opts.max_tokens = 96;
  }

  RecContext rc() { return {model, corpus.db, FieldFilter::all(), opts}; }

  MixedSequence query(size_t dialog = 0) {
    const Dialog& d = corpus.dialogs[dialog];
    std::vector<Turn> prefix(d.turns.begin(), d.turns.end() - 1);
    return build_rec_query(rc(), prefix);
  }

  int gt(size_t dialog = 0) {
    return corpus.dialogs[dialog].turns.back().rec_ids[0];
  }
};

}  // namespace

TEST_CASE("sample_negatives: boundaries and uniformity") {
  Fixture f;
  Rng rng(3);
  const int n = static_cast<int>(f.corpus.db.size());

  CandidateSet none = sample_negatives(f.corpus.db, f.gt(), 0, rng);
  CHECK(none.items == std::vector<int>{f.gt()});
  CHECK(none.ground_truth_index == 0);

  CandidateSet all = sample_negatives(f.corpus.db, f.gt(), n - 1, rng);
  CHECK(static_cast<int>(all.items.size()) == n);
  std::vector<int> sorted = all.items;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<size_t>(i)] == i + 1);
  CHECK(all.items[static_cast<size_t>(all.ground_truth_index)] == f.gt());

  CHECK_THROWS_AS(sample_negatives(f.corpus.db, f.gt(), n, rng), DataError);
  CHECK_THROWS_AS(sample_negatives(f.corpus.db, 9999, 1, rng), DataError);

  // chi-square against uniform over the n-1 negatives, fixed seed
  const int gt = f.gt();
  const int m = 4, draws = 10000;
  std::map<int, int> counts;
  Rng chi_rng(derive_seed(99, "chi"));
  for (int t = 0; t < draws; ++t) {
    CandidateSet cs = sample_negatives(f.corpus.db, gt, m, chi_rng);
    CHECK(cs.items[static_cast<size_t>(cs.ground_truth_index)] == gt);
    std::set<int> uniq(cs.items.begin(), cs.items.end());
    CHECK(uniq.size() == cs.items.size());  // without replacement
    for (int id : cs.items)
      if (id != gt) ++counts[id];
  }
  const double expected =
      static_cast<double>(draws) * m / static_cast<double>(n - 1);
  double chi2 = 0.0;
  for (const auto& [id, c] : counts) {
    double diff = c - expected;
    chi2 += diff * diff / expected;
  }
  CHECK(counts.size() == static_cast<size_t>(n - 1));
  // 99.9% quantile of chi-square with 8 degrees of freedom is 26.12
  CHECK(chi2 < 26.12);
}

TEST_CASE("selection_scores: normalization, symmetry, hand case") {
  Tensor one = selection_scores(Tensor::from({1, 2}, {0.3, -0.7}),
                                Tensor::from({1, 2}, {1.0, 2.0}));
  CHECK(one.values() == std::vector<double>{1.0});

  Tensor same = selection_scores(
      Tensor::from({1, 2}, {0.5, 0.25}),
      Tensor::from({3, 2}, {1.0, 2.0, 1.0, 2.0, 1.0, 2.0}));
  for (double v : same.values())
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // d_r=[1,0], c=[[1,0],[0,1]] -> softmax([1,0])
  Tensor hand = selection_scores(Tensor::from({1, 2}, {1.0, 0.0}),
                                 Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  CHECK(hand.values()[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(hand.values()[1] == doctest::Approx(0.2689).epsilon(1e-4));

  double sum = hand.values()[0] + hand.values()[1];
  CHECK(std::fabs(sum - 1.0) < 1e-9);

  CHECK_THROWS_AS(selection_scores(Tensor::from({1, 3}, {1, 2, 3}),
                                   Tensor::from({2, 2}, {1, 2, 3, 4})),
                  ShapeError);
}

TEST_CASE("selection_loss: uniform case, confident limit, gradient") {
  Fixture f;
  RecContext rc = f.rc();
  MixedSequence q = f.query();

  // two identical candidates -> uniform -> ln 2
  CandidateSet two;
  two.items = {f.gt(), f.gt()};
  two.ground_truth_index = 0;
  Tensor l2 = selection_loss(rc, q, two);
  CHECK(l2.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // the loss approaches 0 as P(gt) -> 1: push the gt embedding toward d_r
  {
    NoGradGuard ng;
    Tensor d_r = rec_summary_vector(rc, q, live_context_embedder(rc));
    Tensor gt_emb =
        encode_item(rc.model.cand_enc, rc.db.by_id(f.gt()), rc.filter, rc.model.vocab);
    Tensor other =
        encode_item(rc.model.cand_enc, rc.db.by_id(f.gt() == 1 ? 2 : 1),
                    rc.filter, rc.model.vocab);
    Tensor boosted = scale(d_r, 200.0);
    Tensor logits = matmul(d_r, transpose(concat_rows({boosted, other})));
    Tensor loss = cross_entropy_logits(logits, {0});
    CHECK(loss.item() < 1e-6);
  }

  // gradient check through decoder and candidate encoder jointly
  Fixture tiny(33, 6, 8);
  RecContext trc = tiny.rc();
  MixedSequence tq = tiny.query();
  Rng rng(1);
  CandidateSet cands = sample_negatives(trc.db, tiny.gt(), 2, rng);
  auto make_loss = [&] { return selection_loss(trc, tq, cands); };
  std::vector<std::pair<std::string, Tensor>> params{
      {"decoder.wte", tiny.model.wte},
      {"cand.wte", tiny.model.cand_enc.wte},
      {"cand.ff_w", tiny.model.cand_enc.ff_w},
      {"ctx.ff_w", tiny.model.ctx_enc.ff_w},
      {"dec.qkv", tiny.model.decoder.layers[0].w_qkv}};
  auto rep = convrec::test::fd_check(make_loss, params, 1e-5, 12);
  INFO("worst: " << rep.worst);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("ranking_scores: single candidate, permutation, duplicates") {
  Fixture f;
  RecContext rc = f.rc();
  MixedSequence q = f.query();

  Tensor one = ranking_scores(rc, q, {f.gt()});
  CHECK(one.values() == std::vector<double>{1.0});

  std::vector<int> items{1, 2, 3, 4};
  Tensor base = ranking_scores(rc, q, items);
  double sum = 0.0;
  for (double v : base.values()) sum += v;
  CHECK(std::fabs(sum - 1.0) < 1e-9);

  std::vector<int> shuffled{3, 1, 4, 2};
  Tensor perm = ranking_scores(rc, q, shuffled);
  for (size_t i = 0; i < shuffled.size(); ++i) {
    size_t base_pos = static_cast<size_t>(
        std::find(items.begin(), items.end(), shuffled[i]) - items.begin());
    CHECK(std::fabs(perm.values()[i] - base.values()[base_pos]) < 1e-6);
  }

  Tensor dup = ranking_scores(rc, q, {2, 2});
  CHECK(std::fabs(dup.values()[0] - dup.values()[1]) < 1e-6);

  CHECK_THROWS_AS(ranking_scores(rc, q, {}), ShapeError);
}

TEST_CASE("ranking_loss: uniform duplicate case, gradient, fused equivalence") {
  Fixture f(44, 8, 8);
  RecContext rc = f.rc();
  MixedSequence q = f.query();

  CandidateSet dup;
  dup.items = {f.gt(), f.gt()};
  dup.ground_truth_index = 1;
  CHECK(ranking_loss(rc, q, dup).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));

  Rng rng(9);
  CandidateSet cands = sample_negatives(rc.db, f.gt(), 2, rng);
  // fused pass reproduces both standalone losses
  RecLosses fused = selection_and_ranking_loss(rc, q, cands);
  CHECK(fused.select.item() ==
        doctest::Approx(selection_loss(rc, q, cands).item()).epsilon(1e-12));
  CHECK(fused.rank.item() ==
        doctest::Approx(ranking_loss(rc, q, cands).item()).epsilon(1e-12));

  auto make_loss = [&] { return ranking_loss(rc, q, cands); };
  std::vector<std::pair<std::string, Tensor>> params{
      {"rank.w", f.model.rank_w},
      {"rank.b", f.model.rank_b},
      {"ctx.ff_w", f.model.ctx_enc.ff_w},
      {"decoder.pos", f.model.pos},
      {"dec.qkv", f.model.decoder.layers[0].w_qkv}};
  auto rep = convrec::test::fd_check(make_loss, params, 1e-5, 12);
  INFO("worst: " << rep.worst);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("ranking overfits a single sample in 500 steps") {
  Fixture f(55, 6, 16);
  RecContext rc = f.rc();
  MixedSequence q = f.query();
  Rng rng(2);
  CandidateSet cands = sample_negatives(rc.db, f.gt(), 2, rng);

  AdamWConfig acfg;
  acfg.lr = 1e-3;
  AdamW opt(acfg);
  ParamSet ps = f.model.params();
  double loss_val = 1e9;
  for (int step = 0; step < 500 && loss_val >= 0.05; ++step) {
    ps.zero_grads();
    Tensor loss = ranking_loss(rc, q, cands);
    loss_val = loss.item();
    loss.backward();
    opt.step(ps);
  }
  CHECK(loss_val < 0.05);
}

TEST_CASE("one selection step moves probability mass toward the ground truth") {
  Fixture f(66, 8, 16);
  RecContext rc = f.rc();
  MixedSequence q = f.query();
  Rng rng(4);
  CandidateSet cands = sample_negatives(rc.db, f.gt(), 4, rng);

  auto prob_gt = [&] {
    NoGradGuard ng;
    Tensor d_r = rec_summary_vector(rc, q, live_context_embedder(rc));
    std::vector<Tensor> rows;
    for (int id : cands.items)
      rows.push_back(encode_item(rc.model.cand_enc, rc.db.by_id(id), rc.filter,
                                 rc.model.vocab));
    Tensor p = selection_scores(d_r, concat_rows(rows));
    return p.values()[static_cast<size_t>(cands.ground_truth_index)];
  };

  double before = prob_gt();
  AdamWConfig acfg;
  acfg.lr = 1e-3;
  AdamW opt(acfg);
  ParamSet ps = f.model.params();
  ps.zero_grads();
  Tensor loss = selection_loss(rc, q, cands);
  loss.backward();
  opt.step(ps);
  CHECK(prob_gt() > before);
}

TEST_CASE("exact index equals brute force; boundary ks") {
  Rng rng(8);
  const int n = 40, d = 12;
  std::vector<int> ids;
  std::vector<double> emb;
  for (int i = 0; i < n; ++i) {
    ids.push_back(100 + i);
    for (int j = 0; j < d; ++j) emb.push_back(rng.normal());
  }
  NNIndex idx = NNIndex::from_matrix(ids, emb, d, NNIndex::Mode::Exact, 0);

  auto brute = [&](const std::vector<double>& q, int k) {
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j)
        s += emb[static_cast<size_t>(i) * d + j] * q[static_cast<size_t>(j)];
      scored.push_back({s, ids[static_cast<size_t>(i)]});
    }
    std::sort(scored.begin(), scored.end(), [](auto a, auto b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::vector<int> out;
    for (int i = 0; i < k; ++i) out.push_back(scored[static_cast<size_t>(i)].second);
    return out;
  };

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> q;
    for (int j = 0; j < d; ++j) q.push_back(rng.normal());
    for (int k : {1, 5, n}) CHECK(idx.query(q, k) == brute(q, k));
  }
  std::vector<double> q(static_cast<size_t>(d), 0.1);
  CHECK_THROWS_AS(idx.query(q, n + 1), DataError);
  CHECK_THROWS_AS(idx.query(q, 0), DataError);
  CHECK_THROWS_AS(idx.query({0.5}, 1), ShapeError);

  // ties break by ascending id: duplicate rows
  std::vector<double> emb2{1, 0, 1, 0, 0, 1};
  NNIndex tie = NNIndex::from_matrix({9, 3, 5}, emb2, 2, NNIndex::Mode::Exact, 0);
  CHECK(tie.query({1, 0}, 2) == std::vector<int>{3, 9});
}

TEST_CASE("orthonormal toy embeddings: query row j returns item j") {
  const int n = 4;
  std::vector<double> emb(n * n, 0.0);
  std::vector<int> ids;
  for (int i = 0; i < n; ++i) {
    emb[static_cast<size_t>(i) * n + i] = 1.0;
    ids.push_back(i + 1);
  }
  NNIndex idx = NNIndex::from_matrix(ids, emb, n, NNIndex::Mode::Exact, 0);
  for (int j = 0; j < n; ++j) {
    std::vector<double> q(n, 0.0);
    q[static_cast<size_t>(j)] = 1.0;
    CHECK(idx.query(q, 1) == std::vector<int>{j + 1});
  }
}

TEST_CASE("index build, persistence, staleness guard") {
  Fixture f(77, 8, 16);
  RecContext rc = f.rc();
  NNIndex idx = build_index(rc, NNIndex::Mode::Exact, 1);
  CHECK(idx.size() == f.corpus.db.size());
  CHECK(idx.encoder_checksum == f.model.candidate_encoder_checksum());

  std::string path =
      (std::filesystem::temp_directory_path() / "convrec_idx.bin").string();
  idx.save(path);
  NNIndex loaded = NNIndex::load(path);
  CHECK(loaded.ids == idx.ids);
  CHECK(loaded.emb == idx.emb);
  CHECK(loaded.encoder_checksum == idx.encoder_checksum);
  std::filesystem::remove(path);

  // perturbing candidate-encoder parameters changes rows and checksum
  for (auto& v : f.model.cand_enc.ff_b.values()) v += 0.25;
  NNIndex rebuilt = build_index(rc, NNIndex::Mode::Exact, 1);
  CHECK(rebuilt.emb != idx.emb);
  CHECK(rebuilt.encoder_checksum != idx.encoder_checksum);
}

TEST_CASE("approximate mode meets its recall contract") {
  Rng rng(17);
  const int n = 300, d = 8;
  std::vector<int> ids;
  std::vector<double> emb;
  for (int i = 0; i < n; ++i) {
    ids.push_back(i);
    for (int j = 0; j < d; ++j) emb.push_back(rng.normal());
  }
  NNIndex approx = NNIndex::from_matrix(ids, emb, d, NNIndex::Mode::Approx, 5);
  CHECK(approx.measured_recall >= 0.95);
  NNIndex exact = NNIndex::from_matrix(ids, emb, d, NNIndex::Mode::Exact, 5);
  // measured recall against the exact oracle on fresh queries
  int hits = 0, total = 0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> q;
    for (int j = 0; j < d; ++j) q.push_back(rng.normal());
    auto truth = exact.query(q, 10);
    auto got = approx.query(q, 10);
    for (int id : truth) {
      ++total;
      if (std::find(got.begin(), got.end(), id) != got.end()) ++hits;
    }
  }
  CHECK(static_cast<double>(hits) / total >= 0.90);  // fresh-query recall
}

TEST_CASE("two_phase_recommend: determinism under shuffles, top-1 = argmax") {
  Fixture f(88, 10, 16);
  RecContext rc = f.rc();
  MixedSequence q = f.query();
  ItemEmbedCache cache(f.model, f.corpus.db, rc.filter);
  NNIndex idx = build_index(rc, NNIndex::Mode::Exact, 2);

  TwoPhaseTrace trace;
  std::vector<int> ranked = two_phase_recommend(rc, q, idx, 6, cache, &trace);
  CHECK(ranked.size() == 6);
  CHECK(trace.retrieved.size() == 6);
  CHECK(ranked[0] == trace.ranked[0].item_id);
  // output sorted by R descending with id tie-break
  for (size_t i = 1; i < trace.ranked.size(); ++i) {
    bool ordered = trace.ranked[i - 1].r_score > trace.ranked[i].r_score ||
                   (trace.ranked[i - 1].r_score == trace.ranked[i].r_score &&
                    trace.ranked[i - 1].item_id < trace.ranked[i].item_id);
    CHECK(ordered);
  }
  double psum = 0.0, rsum = 0.0;
  for (const auto& s : trace.ranked) {
    psum += s.p_score;
    rsum += s.r_score;
  }
  CHECK(std::fabs(psum - 1.0) < 1e-9);
  CHECK(std::fabs(rsum - 1.0) < 1e-9);

  // shuffling the candidate list fed to the ranking pass changes nothing
  std::vector<double> d_r = query_vector(rc, q, cache);
  std::vector<int> cands = trace.retrieved;
  auto base = rank_candidates(rc, q, cands, cache, &d_r);
  for (int trial = 0; trial < 5; ++trial) {
    Rng shuffle_rng(static_cast<uint64_t>(trial));
    std::vector<int> mixed = cands;
    shuffle_rng.shuffle(mixed);
    auto again = rank_candidates(rc, q, mixed, cache, &d_r);
    REQUIRE(again.size() == base.size());
    for (size_t i = 0; i < base.size(); ++i) {
      CHECK(again[i].item_id == base[i].item_id);
      CHECK(again[i].r_score == base[i].r_score);  // bitwise
    }
  }

  // small db: K larger than n sees the whole database
  std::vector<int> whole = two_phase_recommend(rc, q, idx, 500, cache);
  CHECK(whole.size() == f.corpus.db.size());
  std::vector<int> sorted = whole;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i)
    CHECK(sorted[i] == static_cast<int>(i) + 1);  // permutation of the db
}
