#include "context.hpp"

#include <algorithm>

namespace convrec {

std::string speaker_to_string(Speaker s) {
  return s == Speaker::Seeker ? "seeker" : "recommender";
}

Speaker speaker_from_string(const std::string& s) {
  if (s == "seeker") return Speaker::Seeker;
  if (s == "recommender") return Speaker::Recommender;
  throw DataError("unknown speaker '" + s + "'");
}

SubstitutedTurn substitute_placeholders(const Turn& turn) {
  std::vector<Mention> mentions = turn.mentions;
  std::sort(mentions.begin(), mentions.end(),
            [](const Mention& a, const Mention& b) { return a.start < b.start; });
  int prev_end = 0;
  const int n = static_cast<int>(turn.tokens.size());
  for (const Mention& m : mentions) {
    if (m.start < 0 || m.end > n || m.start >= m.end)
      throw DataError("mention span [" + std::to_string(m.start) + "," +
                      std::to_string(m.end) + ") out of bounds for turn of " +
                      std::to_string(n) + " tokens");
    if (m.start < prev_end)
      throw DataError("overlapping mention spans at token " +
                      std::to_string(m.start));
    prev_end = m.end;
  }
  SubstitutedTurn out;
  size_t mi = 0;
  for (int i = 0; i < n;) {
    if (mi < mentions.size() && mentions[mi].start == i) {
      out.tokens.push_back(Vocabulary::kPh);
      out.item_ids.push_back(mentions[mi].item_id);
      i = mentions[mi].end;
      ++mi;
    } else {
      out.tokens.push_back(turn.tokens[static_cast<size_t>(i)]);
      ++i;
    }
  }
  return out;
}

int MixedSequence::count_word(int vocab_id) const {
  int c = 0;
  for (const auto& e : entries)
    if (e.kind == MixedEntry::Kind::Word && e.id == vocab_id) ++c;
  return c;
}

int MixedSequence::count_items() const {
  int c = 0;
  for (const auto& e : entries)
    if (e.kind == MixedEntry::Kind::Item) ++c;
  return c;
}

std::vector<int> MixedSequence::item_ids() const {
  std::vector<int> out;
  for (const auto& e : entries)
    if (e.kind == MixedEntry::Kind::Item) out.push_back(e.id);
  return out;
}

namespace {

std::vector<MixedEntry> turn_region(const Turn& turn, const Vocabulary& vocab,
                                    const ContextOptions& opts) {
  std::vector<MixedEntry> region;
  region.push_back(MixedEntry::word(turn.speaker == Speaker::Seeker
                                        ? Vocabulary::SEEKER
                                        : Vocabulary::RECSPK));
  if (opts.strip_mentions) {
    // drop mention spans entirely: no [PH], no item tokens
    std::vector<Mention> mentions = turn.mentions;
    std::sort(mentions.begin(), mentions.end(),
              [](const Mention& a, const Mention& b) {
                return a.start < b.start;
              });
    size_t mi = 0;
    for (int i = 0; i < static_cast<int>(turn.tokens.size());) {
      if (mi < mentions.size() && mentions[mi].start == i) {
        i = mentions[mi].end;
        ++mi;
      } else {
        region.push_back(
            MixedEntry::word(vocab.id(turn.tokens[static_cast<size_t>(i)])));
        ++i;
      }
    }
    return region;
  }
  SubstitutedTurn sub = substitute_placeholders(turn);
  size_t next_item = 0;
  for (const auto& tok : sub.tokens) {
    if (tok == Vocabulary::kPh) {
      region.push_back(MixedEntry::word(Vocabulary::PH));
      if (opts.placement == ItePlacement::Inline)
        region.push_back(MixedEntry::item(sub.item_ids[next_item]));
      ++next_item;
    } else {
      region.push_back(MixedEntry::word(vocab.id(tok)));
    }
  }
  if (opts.placement == ItePlacement::Tail)
    for (int id : sub.item_ids) region.push_back(MixedEntry::item(id));
  return region;
}

}  // namespace

MixedSequence build_context(const std::vector<Turn>& prefix,
                            const Vocabulary& vocab,
                            const ContextOptions& opts, TruncationLog* log) {
  std::vector<std::vector<MixedEntry>> regions;
  regions.reserve(prefix.size());
  size_t total = 0;
  for (const Turn& t : prefix) {
    regions.push_back(turn_region(t, vocab, opts));
    total += regions.back().size();
  }
  size_t first = 0;
  const size_t cap = static_cast<size_t>(std::max(1, opts.max_tokens));
  while (first + 1 < regions.size() && total > cap) {
    total -= regions[first].size();
    if (log) ++log->dropped_turns;
    ++first;
  }
  MixedSequence seq;
  for (size_t r = first; r < regions.size(); ++r)
    seq.entries.insert(seq.entries.end(), regions[r].begin(), regions[r].end());
  if (seq.entries.size() > cap) {
    // a single oversized newest turn keeps its suffix
    size_t drop = seq.entries.size() - cap;
    if (log) log->dropped_tokens += static_cast<int>(drop);
    seq.entries.erase(seq.entries.begin(),
                      seq.entries.begin() + static_cast<long>(drop));
  }
  return seq;
}

MixedSequence append_rec_token(MixedSequence ctx) {
  ctx.entries.push_back(MixedEntry::word(Vocabulary::REC));
  return ctx;
}

MixedSequence append_word(MixedSequence ctx, int vocab_id) {
  ctx.entries.push_back(MixedEntry::word(vocab_id));
  return ctx;
}

}  // namespace convrec
