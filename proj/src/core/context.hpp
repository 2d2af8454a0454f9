#pragma once

#include <string>
#include <vector>

#include "item_encoder.hpp"
#include "vocab.hpp"

namespace convrec {

enum class Speaker { Seeker, Recommender };
std::string speaker_to_string(Speaker s);
Speaker speaker_from_string(const std::string& s);

// Token-index span [start, end) marking an item mention.
struct Mention {
  int start = 0;
  int end = 0;
  int item_id = 0;
};

struct Turn {
  Speaker speaker = Speaker::Seeker;
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;  // sorted by start, disjoint
  std::vector<int> rec_ids;       // nonempty marks a recommendation turn

  bool is_rec_turn() const { return !rec_ids.empty(); }
};

struct Dialog {
  int dialog_id = 0;
  std::vector<Turn> turns;
};

// Each mention span collapses to a single [PH]; item ids come out in mention
// order.
struct SubstitutedTurn {
  std::vector<std::string> tokens;
  std::vector<int> item_ids;
};
SubstitutedTurn substitute_placeholders(const Turn& turn);

struct MixedEntry {
  enum class Kind { Word, Item } kind = Kind::Word;
  int id = 0;  // vocab id or item id
  static MixedEntry word(int vocab_id) { return {Kind::Word, vocab_id}; }
  static MixedEntry item(int item_id) { return {Kind::Item, item_id}; }
};

struct MixedSequence {
  std::vector<MixedEntry> entries;

  size_t length() const { return entries.size(); }
  int count_word(int vocab_id) const;
  int count_items() const;
  std::vector<int> item_ids() const;
};

enum class ItePlacement { Inline, Tail };

struct ContextOptions {
  int max_tokens = 192;  // cap on built context length
  ItePlacement placement = ItePlacement::Inline;
  bool strip_mentions = false;  // entity-ablation switch
};

struct TruncationLog {
  int dropped_turns = 0;
  int dropped_tokens = 0;
};

// Per turn: a speaker-role token, then placeholder-substituted word tokens
// with each ItemToken placed right after its [PH] (or at the turn tail).
// Overflow drops oldest turns first; the newest turn keeps its suffix.
MixedSequence build_context(const std::vector<Turn>& prefix,
                            const Vocabulary& vocab,
                            const ContextOptions& opts,
                            TruncationLog* log = nullptr);

MixedSequence append_rec_token(MixedSequence ctx);
MixedSequence append_word(MixedSequence ctx, int vocab_id);

}  // namespace convrec
