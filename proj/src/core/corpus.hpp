#pragma once

#include <string>
#include <vector>

#include "context.hpp"
#include "item_encoder.hpp"

namespace convrec {

// Metadata database file: one JSON record per line with keys
// id, title, genre, actors, directors, plot.
MetadataDb load_metadata_db(const std::string& path);
std::string metadata_db_to_jsonl(const MetadataDb& db);

// Dialog corpus file: one dialog per line,
// {dialog_id, turns:[{speaker, text, rec_ids}]}. Item mentions in the text
// use "@<item_id>" markup which the loader resolves to token spans.
std::vector<Dialog> load_dialog_corpus(const std::string& path,
                                       const MetadataDb& db);
std::string dialog_corpus_to_jsonl(const std::vector<Dialog>& dialogs);

// Turn text -> surface tokens plus resolved mention spans. A mention token
// keeps its "@<id>" form; everything else is lowercased and split on
// whitespace/punctuation.
std::pair<std::vector<std::string>, std::vector<Mention>> parse_turn_text(
    const std::string& text);
std::string turn_to_text(const Turn& turn);

// ReDial-format ingestion (statistics and preprocessing only): movie mentions
// come from the per-dialog movieMentions table, the initiator is the seeker,
// and items mentioned by the respondent are treated as its recommendations.
struct RedialImport {
  MetadataDb db;
  std::vector<Dialog> dialogs;
};
RedialImport load_redial(const std::string& path);

struct CorpusStats {
  int64_t dialogs = 0;
  int64_t utterances = 0;
  double avg_turns = 0.0;  // utterances per dialog
  int64_t mentions = 0;
  int64_t word_tokens = 0;          // excludes mention tokens
  double tokens_per_mention = 0.0;  // 0 when the corpus has no mentions
  double distinct1 = 0.0;           // sentence-level, averaged per utterance
  double distinct3 = 0.0;
};
CorpusStats corpus_stats(const std::vector<Dialog>& dialogs);

struct SyntheticSpec {
  uint64_t seed = 0;
  int n_items = 30;
  int n_genres = 3;
  int n_dialogs = 200;
  int turns_min = 1;  // seeker info turns per dialog
  int turns_max = 3;
  double chitchat_prob = 0.25;
  int genre_vocab = 10;  // words drawn per genre
  double distractor_prob = 0.3;

  void validate() const;
};

struct SyntheticCorpus {
  MetadataDb db;
  std::vector<Dialog> dialogs;
};

// Items carry one genre and one unique plot keyword; every dialog states a
// genre word and the target's keyword in its seeker turns and ends with the
// recommender answering "@<target>", so a keyword table lookup recovers the
// target exactly.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace convrec
