#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "context.hpp"
#include "corpus.hpp"
#include "model.hpp"
#include "recommender.hpp"

using namespace convrec;

namespace {

Turn make_turn(Speaker sp, const std::string& text,
               std::vector<int> rec_ids = {}) {
  Turn t;
  t.speaker = sp;
  auto [tokens, mentions] = parse_turn_text(text);
  t.tokens = std::move(tokens);
  t.mentions = std::move(mentions);
  t.rec_ids = std::move(rec_ids);
  return t;
}

Vocabulary vocab_for(const std::vector<Turn>& turns) {
  Vocabulary v = Vocabulary::with_specials();
  for (const auto& t : turns)
    for (const auto& tok : t.tokens) v.add(tok);
  return v;
}

}  // namespace

TEST_CASE("substitute_placeholders collapses spans in mention order") {
  Turn t = make_turn(Speaker::Seeker, "i loved @7");
  auto sub = substitute_placeholders(t);
  CHECK(sub.tokens == std::vector<std::string>{"i", "loved", "[PH]"});
  CHECK(sub.item_ids == std::vector<int>{7});

  Turn none = make_turn(Speaker::Seeker, "no mentions here");
  auto sub2 = substitute_placeholders(none);
  CHECK(sub2.tokens == none.tokens);
  CHECK(sub2.item_ids.empty());

  Turn two = make_turn(Speaker::Seeker, "@3 beats @5 easily");
  auto sub3 = substitute_placeholders(two);
  CHECK(sub3.tokens ==
        std::vector<std::string>{"[PH]", "beats", "[PH]", "easily"});
  CHECK(sub3.item_ids == std::vector<int>{3, 5});
}

TEST_CASE("multi-token spans collapse to one placeholder") {
  Turn t;
  t.speaker = Speaker::Seeker;
  t.tokens = {"the", "long", "movie", "name", "rocks"};
  t.mentions = {{1, 4, 42}};
  auto sub = substitute_placeholders(t);
  CHECK(sub.tokens == std::vector<std::string>{"the", "[PH]", "rocks"});
  CHECK(sub.item_ids == std::vector<int>{42});
}

TEST_CASE("overlapping or out-of-bounds spans error") {
  Turn t;
  t.tokens = {"a", "b", "c"};
  t.mentions = {{0, 2, 1}, {1, 3, 2}};
  CHECK_THROWS_AS(substitute_placeholders(t), DataError);
  t.mentions = {{2, 5, 1}};
  CHECK_THROWS_AS(substitute_placeholders(t), DataError);
  t.mentions = {{2, 2, 1}};
  CHECK_THROWS_AS(substitute_placeholders(t), DataError);
}

TEST_CASE("build_context: speaker tokens, inline ITE placement, counts") {
  std::vector<Turn> turns{make_turn(Speaker::Seeker, "i loved @7 a lot"),
                          make_turn(Speaker::Recommender, "noted !")};
  Vocabulary v = vocab_for(turns);
  ContextOptions opts;
  MixedSequence seq = build_context(turns, v, opts);

  REQUIRE(seq.length() >= 3);
  CHECK(seq.entries[0].kind == MixedEntry::Kind::Word);
  CHECK(seq.entries[0].id == Vocabulary::SEEKER);
  // the ItemToken sits immediately after its [PH]
  bool found = false;
  for (size_t i = 0; i + 1 < seq.entries.size(); ++i) {
    if (seq.entries[i].kind == MixedEntry::Kind::Word &&
        seq.entries[i].id == Vocabulary::PH) {
      CHECK(seq.entries[i + 1].kind == MixedEntry::Kind::Item);
      CHECK(seq.entries[i + 1].id == 7);
      found = true;
    }
  }
  CHECK(found);
  CHECK(seq.count_word(Vocabulary::PH) == seq.count_items());
  // second turn introduces the recommender speaker token
  int rec_spk = seq.count_word(Vocabulary::RECSPK);
  CHECK(rec_spk == 1);
}

TEST_CASE("tail placement puts ITEs at the end of the turn region") {
  std::vector<Turn> turns{make_turn(Speaker::Seeker, "@3 then @5 please")};
  Vocabulary v = vocab_for(turns);
  ContextOptions opts;
  opts.placement = ItePlacement::Tail;
  MixedSequence seq = build_context(turns, v, opts);
  REQUIRE(seq.length() >= 2);
  // last two entries of the region are the ITEs, in mention order
  CHECK(seq.entries[seq.length() - 2].kind == MixedEntry::Kind::Item);
  CHECK(seq.entries[seq.length() - 2].id == 3);
  CHECK(seq.entries[seq.length() - 1].kind == MixedEntry::Kind::Item);
  CHECK(seq.entries[seq.length() - 1].id == 5);
  CHECK(seq.count_word(Vocabulary::PH) == 2);
}

TEST_CASE("strip_mentions removes placeholders and item tokens") {
  std::vector<Turn> turns{make_turn(Speaker::Seeker, "i loved @7 a lot")};
  Vocabulary v = vocab_for(turns);
  ContextOptions opts;
  opts.strip_mentions = true;
  MixedSequence seq = build_context(turns, v, opts);
  CHECK(seq.count_items() == 0);
  CHECK(seq.count_word(Vocabulary::PH) == 0);
  // surviving words keep their order
  CHECK(seq.entries[1].id == v.id("i"));
  CHECK(seq.entries[2].id == v.id("loved"));
  CHECK(seq.entries[3].id == v.id("a"));
}

TEST_CASE("truncation drops oldest turns first, newest intact") {
  std::vector<Turn> turns{
      make_turn(Speaker::Seeker, "one two three four five six"),
      make_turn(Speaker::Recommender, "seven eight nine ten"),
      make_turn(Speaker::Seeker, "keep this tail")};
  Vocabulary v = vocab_for(turns);
  ContextOptions opts;
  opts.max_tokens = 10;
  TruncationLog log;
  MixedSequence seq = build_context(turns, v, opts, &log);
  CHECK(log.dropped_turns == 1);
  CHECK(seq.length() <= 10);
  // newest turn fully present at the end
  const auto& e = seq.entries;
  size_t n = e.size();
  CHECK(e[n - 3].id == v.id("keep"));
  CHECK(e[n - 2].id == v.id("this"));
  CHECK(e[n - 1].id == v.id("tail"));
  // oldest turn gone
  for (const auto& entry : e) CHECK(entry.id != v.id("one"));
}

TEST_CASE("a single oversized turn keeps its suffix") {
  std::vector<Turn> turns{
      make_turn(Speaker::Seeker, "a b c d e f g h i j k l m n")};
  Vocabulary v = vocab_for(turns);
  ContextOptions opts;
  opts.max_tokens = 5;
  TruncationLog log;
  MixedSequence seq = build_context(turns, v, opts, &log);
  CHECK(seq.length() == 5);
  CHECK(log.dropped_tokens > 0);
  CHECK(seq.entries.back().id == v.id("n"));
}

TEST_CASE("append_rec_token appends exactly one [REC]") {
  std::vector<Turn> turns{make_turn(Speaker::Seeker, "hello there")};
  Vocabulary v = vocab_for(turns);
  MixedSequence ctx = build_context(turns, v, ContextOptions{});
  size_t n = ctx.length();
  MixedSequence with = append_rec_token(ctx);
  CHECK(with.length() == n + 1);
  CHECK(with.entries.back().kind == MixedEntry::Kind::Word);
  CHECK(with.entries.back().id == Vocabulary::REC);
  // appending twice is the caller's bug and yields two [REC]
  MixedSequence twice = append_rec_token(with);
  CHECK(twice.count_word(Vocabulary::REC) == 2);
}

TEST_CASE("round-trip: titles re-inserted at [PH] reproduce surface text") {
  MetadataDb db({[] {
    ItemMetadata m;
    m.item_id = 7;
    m.title = "antman";
    return m;
  }()});
  Turn t = make_turn(Speaker::Seeker, "i loved @7 !");
  auto sub = substitute_placeholders(t);
  std::vector<std::string> restored;
  size_t next = 0;
  for (const auto& tok : sub.tokens) {
    if (tok == Vocabulary::kPh) {
      for (const auto& piece : tokenize(db.by_id(sub.item_ids[next]).title))
        restored.push_back(piece);
      ++next;
    } else {
      restored.push_back(tok);
    }
  }
  // original surface text with the markup resolved to the title
  auto [expected, ignored] = parse_turn_text("i loved antman !");
  CHECK(restored == expected);
}

TEST_CASE("build_context is deterministic") {
  std::vector<Turn> turns{make_turn(Speaker::Seeker, "i want @3 style fun"),
                          make_turn(Speaker::Recommender, "sure")};
  Vocabulary v = vocab_for(turns);
  MixedSequence a = build_context(turns, v, ContextOptions{});
  MixedSequence b = build_context(turns, v, ContextOptions{});
  REQUIRE(a.length() == b.length());
  for (size_t i = 0; i < a.length(); ++i) {
    CHECK(a.entries[i].kind == b.entries[i].kind);
    CHECK(a.entries[i].id == b.entries[i].id);
  }
}

TEST_CASE("realized rows: words from the vocabulary matrix, items from the "
          "context encoder") {
  ItemMetadata meta;
  meta.item_id = 7;
  meta.title = "antman";
  meta.genre = {"action"};
  MetadataDb db({meta});
  std::vector<Turn> turns{make_turn(Speaker::Seeker, "i loved @7")};

  Vocabulary vocab = Vocabulary::with_specials();
  for (const auto& t : turns)
    for (const auto& tok : t.tokens) vocab.add(tok);
  for (const auto& tok : serialize_metadata(meta, FieldFilter::all()))
    vocab.add(tok);
  DecoderConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.max_positions = 32;
  Model m;
  m.init(cfg, vocab, false, 3);

  RecContext rc{m, db, FieldFilter::all(), ContextOptions{}};
  MixedSequence seq = build_context(turns, m.vocab, rc.ctx_opts);
  Tensor emb = m.realize(seq, live_context_embedder(rc));
  REQUIRE(emb.rows() == static_cast<int>(seq.length()));

  Tensor ite = encode_item(m.ctx_enc, meta, rc.filter, m.vocab);
  for (size_t i = 0; i < seq.length(); ++i) {
    if (seq.entries[i].kind == MixedEntry::Kind::Item) {
      for (int j = 0; j < cfg.d_model; ++j)
        CHECK(emb.at(static_cast<int>(i), j) == ite.at(0, j));
    } else {
      for (int j = 0; j < cfg.d_model; ++j)
        CHECK(emb.at(static_cast<int>(i), j) ==
              m.wte.at(seq.entries[i].id, j));
    }
  }
}
