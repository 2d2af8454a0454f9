#include "corpus.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace convrec {

using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

json parse_line(const std::string& path, size_t line_no,
                const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded())
    throw DataError(path + ":" + std::to_string(line_no) +
                    ": malformed JSON record");
  return j;
}

std::vector<std::string> string_list(const json& j) {
  std::vector<std::string> out;
  if (j.is_null()) return out;
  if (j.is_string()) {
    if (!j.get<std::string>().empty()) out.push_back(j.get<std::string>());
    return out;
  }
  for (const auto& e : j) out.push_back(e.get<std::string>());
  return out;
}

}  // namespace

MetadataDb load_metadata_db(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<ItemMetadata> items;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j = parse_line(path, i + 1, lines[i]);
    try {
      ItemMetadata m;
      m.item_id = j.at("id").get<int>();
      m.title = j.at("title").get<std::string>();
      m.genre = string_list(j.value("genre", json::array()));
      m.actors = string_list(j.value("actors", json::array()));
      m.directors = string_list(j.value("directors", json::array()));
      m.plot = j.value("plot", std::string());
      items.push_back(std::move(m));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (items.empty()) throw DataError(path + ": empty metadata database");
  return MetadataDb(std::move(items));
}

std::string metadata_db_to_jsonl(const MetadataDb& db) {
  std::ostringstream os;
  for (const auto& m : db.items()) {
    json j{{"id", m.item_id},       {"title", m.title},
           {"genre", m.genre},     {"actors", m.actors},
           {"directors", m.directors}, {"plot", m.plot}};
    os << j.dump() << "\n";
  }
  return os.str();
}

std::pair<std::vector<std::string>, std::vector<Mention>> parse_turn_text(
    const std::string& text) {
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;
  size_t i = 0;
  const size_t n = text.size();
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      tokens.push_back(word);
      word.clear();
    }
  };
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
      ++i;
    } else if (c == '@' && i + 1 < n &&
               std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      flush();
      size_t j = i + 1;
      while (j < n && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      std::string tok = text.substr(i, j - i);
      int id = std::stoi(tok.substr(1));
      int pos = static_cast<int>(tokens.size());
      tokens.push_back(tok);
      mentions.push_back({pos, pos + 1, id});
      i = j;
    } else if (std::isalnum(c) || c >= 128) {
      word.push_back(static_cast<char>(std::tolower(c)));
      ++i;
    } else {
      flush();
      tokens.push_back(std::string(1, static_cast<char>(c)));
      ++i;
    }
  }
  flush();
  return {std::move(tokens), std::move(mentions)};
}

std::string turn_to_text(const Turn& turn) {
  return detokenize(turn.tokens);
}

std::vector<Dialog> load_dialog_corpus(const std::string& path,
                                       const MetadataDb& db) {
  auto lines = read_lines(path);
  std::vector<Dialog> dialogs;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j = parse_line(path, i + 1, lines[i]);
    Dialog d;
    try {
      d.dialog_id = j.at("dialog_id").get<int>();
      int turn_no = 0;
      for (const auto& tj : j.at("turns")) {
        ++turn_no;
        Turn t;
        t.speaker = speaker_from_string(tj.at("speaker").get<std::string>());
        auto [tokens, mentions] =
            parse_turn_text(tj.at("text").get<std::string>());
        t.tokens = std::move(tokens);
        t.mentions = std::move(mentions);
        if (tj.contains("rec_ids"))
          for (const auto& r : tj.at("rec_ids")) t.rec_ids.push_back(r.get<int>());
        if (tj.value("is_rec", false) && t.rec_ids.empty())
          throw DataError("dialog " + std::to_string(d.dialog_id) + " turn " +
                          std::to_string(turn_no) +
                          ": recommendation turn without ground-truth ids");
        for (const auto& m : t.mentions)
          if (!db.has(m.item_id))
            throw DataError("dialog " + std::to_string(d.dialog_id) +
                            " turn " + std::to_string(turn_no) +
                            ": unknown item id " + std::to_string(m.item_id));
        for (int r : t.rec_ids)
          if (!db.has(r))
            throw DataError("dialog " + std::to_string(d.dialog_id) +
                            " turn " + std::to_string(turn_no) +
                            ": unknown recommended item id " +
                            std::to_string(r));
        d.turns.push_back(std::move(t));
      }
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
    dialogs.push_back(std::move(d));
  }
  if (dialogs.empty()) throw DataError(path + ": empty dialog corpus");
  return dialogs;
}

std::string dialog_corpus_to_jsonl(const std::vector<Dialog>& dialogs) {
  std::ostringstream os;
  for (const auto& d : dialogs) {
    json turns = json::array();
    for (const auto& t : d.turns) {
      json tj{{"speaker", speaker_to_string(t.speaker)},
              {"text", turn_to_text(t)}};
      if (!t.rec_ids.empty()) tj["rec_ids"] = t.rec_ids;
      turns.push_back(std::move(tj));
    }
    os << json{{"dialog_id", d.dialog_id}, {"turns", turns}}.dump() << "\n";
  }
  return os.str();
}

RedialImport load_redial(const std::string& path) {
  auto lines = read_lines(path);
  std::vector<ItemMetadata> items;
  std::unordered_set<int> seen_items;
  std::vector<Dialog> dialogs;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j = parse_line(path, i + 1, lines[i]);
    try {
      Dialog d;
      const auto& cid = j.at("conversationId");
      d.dialog_id = cid.is_string() ? std::stoi(cid.get<std::string>())
                                    : cid.get<int>();
      if (j.contains("movieMentions") && j.at("movieMentions").is_object()) {
        for (const auto& [key, val] : j.at("movieMentions").items()) {
          int id = std::stoi(key);
          if (seen_items.insert(id).second) {
            ItemMetadata m;
            m.item_id = id;
            m.title = val.is_string() ? val.get<std::string>() : key;
            if (m.title.empty()) m.title = key;
            items.push_back(std::move(m));
          }
        }
      }
      const int initiator = j.at("initiatorWorkerId").get<int>();
      for (const auto& mj : j.at("messages")) {
        Turn t;
        t.speaker = mj.at("senderWorkerId").get<int>() == initiator
                        ? Speaker::Seeker
                        : Speaker::Recommender;
        auto [tokens, mentions] =
            parse_turn_text(mj.at("text").get<std::string>());
        t.tokens = std::move(tokens);
        t.mentions = std::move(mentions);
        if (t.speaker == Speaker::Recommender)
          for (const auto& m : t.mentions) t.rec_ids.push_back(m.item_id);
        d.turns.push_back(std::move(t));
      }
      dialogs.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (dialogs.empty()) throw DataError(path + ": empty ReDial corpus");
  RedialImport out;
  out.db = MetadataDb(std::move(items));
  // drop mentions whose id never appeared in a movieMentions table
  for (auto& d : dialogs)
    for (auto& t : d.turns) {
      std::vector<Mention> kept;
      for (const auto& m : t.mentions)
        if (out.db.has(m.item_id)) kept.push_back(m);
      t.mentions = std::move(kept);
      std::vector<int> rec;
      for (int r : t.rec_ids)
        if (out.db.has(r)) rec.push_back(r);
      t.rec_ids = std::move(rec);
    }
  out.dialogs = std::move(dialogs);
  return out;
}

namespace {

double sentence_distinct(const std::vector<std::string>& tokens, int n) {
  if (static_cast<int>(tokens.size()) < n || tokens.empty()) return 0.0;
  std::set<std::string> grams;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g;
    for (int k = 0; k < n; ++k) {
      g += tokens[i + static_cast<size_t>(k)];
      g += '\x1f';
    }
    grams.insert(std::move(g));
  }
  return static_cast<double>(grams.size()) / static_cast<double>(tokens.size());
}

}  // namespace

CorpusStats corpus_stats(const std::vector<Dialog>& dialogs) {
  if (dialogs.empty()) throw DataError("corpus_stats: empty corpus");
  CorpusStats s;
  s.dialogs = static_cast<int64_t>(dialogs.size());
  double d1 = 0.0, d3 = 0.0;
  for (const auto& d : dialogs) {
    for (const auto& t : d.turns) {
      ++s.utterances;
      int mention_tokens = 0;
      for (const auto& m : t.mentions) mention_tokens += m.end - m.start;
      s.mentions += static_cast<int64_t>(t.mentions.size());
      s.word_tokens +=
          static_cast<int64_t>(t.tokens.size()) - mention_tokens;
      d1 += sentence_distinct(t.tokens, 1);
      d3 += sentence_distinct(t.tokens, 3);
    }
  }
  if (s.utterances == 0) throw DataError("corpus_stats: corpus has no turns");
  s.avg_turns = static_cast<double>(s.utterances) /
                static_cast<double>(s.dialogs);
  s.tokens_per_mention =
      s.mentions > 0
          ? static_cast<double>(s.word_tokens) / static_cast<double>(s.mentions)
          : 0.0;
  s.distinct1 = d1 / static_cast<double>(s.utterances);
  s.distinct3 = d3 / static_cast<double>(s.utterances);
  return s;
}

// ---------------------------------------------------------------------------
// synthetic corpus

namespace {

struct GenrePool {
  const char* name;
  std::vector<const char*> words;
};

const std::vector<GenrePool>& genre_pools() {
  static const std::vector<GenrePool> pools = {
      {"action",
       {"explosive", "fast", "fight", "chase", "hero", "battle", "punch",
        "race", "war", "stunt", "mission", "danger", "rescue", "gunfire",
        "showdown", "adrenaline"}},
      {"comedy",
       {"funny", "laugh", "joke", "silly", "witty", "goofy", "prank", "humor",
        "banter", "spoof", "gag", "awkward", "clumsy", "cheerful", "quirky",
        "hilarious"}},
      {"drama",
       {"emotional", "family", "tears", "serious", "loss", "heart", "quiet",
        "truth", "bond", "hope", "struggle", "memory", "regret", "healing",
        "fate", "sacrifice"}},
      {"horror",
       {"scary", "dark", "ghost", "haunted", "creepy", "scream", "monster",
        "shadow", "curse", "nightmare", "basement", "eerie", "dread",
        "sinister", "grave", "howl"}},
      {"scifi",
       {"space", "robot", "alien", "future", "laser", "starship", "galaxy",
        "android", "portal", "quantum", "colony", "cyborg", "orbit", "clone",
        "machine", "signal"}},
      {"romance",
       {"love", "kiss", "sweet", "wedding", "crush", "tender", "longing",
        "devotion", "passion", "letters", "reunion", "promise", "dance",
        "blossom", "serenade", "forever"}},
      {"thriller",
       {"suspense", "spy", "secret", "conspiracy", "clue", "tension",
        "detective", "motive", "alibi", "pursuit", "deadline", "hostage",
        "double", "witness", "trap", "heist"}},
      {"fantasy",
       {"magic", "dragon", "quest", "sword", "kingdom", "wizard", "prophecy",
        "realm", "spell", "legend", "crown", "forest", "giant", "rune",
        "oath", "myth"}},
  };
  return pools;
}

const std::vector<const char*>& actor_pool() {
  static const std::vector<const char*> pool = {
      "arden", "blake", "casey", "devon", "ellis",  "flynn",
      "gale",  "harper", "indie", "jules", "kendal", "lane"};
  return pool;
}

const std::vector<const char*>& director_pool() {
  static const std::vector<const char*> pool = {"mori", "novak", "osei",
                                                "paley", "quinn", "reyes"};
  return pool;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_genres < 1 || n_items < n_genres)
    throw ConfigError("synthetic spec: need n_items >= n_genres >= 1");
  if (n_dialogs < 1) throw ConfigError("synthetic spec: n_dialogs must be positive");
  if (turns_min < 1 || turns_max < turns_min)
    throw ConfigError("synthetic spec: invalid turns range");
  if (chitchat_prob < 0.0 || chitchat_prob > 1.0 || distractor_prob < 0.0 ||
      distractor_prob > 1.0)
    throw ConfigError("synthetic spec: probabilities must be in [0,1]");
  if (n_genres > static_cast<int>(genre_pools().size()))
    throw ConfigError("synthetic spec: at most " +
                      std::to_string(genre_pools().size()) +
                      " genres are available");
  if (genre_vocab < 1 ||
      genre_vocab > static_cast<int>(genre_pools()[0].words.size()))
    throw ConfigError(
        "synthetic spec: genre vocabulary of " + std::to_string(genre_vocab) +
        " exceeds the available pool of " +
        std::to_string(genre_pools()[0].words.size()) + " words per genre");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synthetic"));

  std::vector<std::vector<std::string>> genre_words(
      static_cast<size_t>(spec.n_genres));
  for (int g = 0; g < spec.n_genres; ++g)
    for (int w = 0; w < spec.genre_vocab; ++w)
      genre_words[static_cast<size_t>(g)].push_back(
          genre_pools()[static_cast<size_t>(g)].words[static_cast<size_t>(w)]);

  std::vector<ItemMetadata> items;
  std::vector<std::vector<int>> by_genre(static_cast<size_t>(spec.n_genres));
  for (int i = 0; i < spec.n_items; ++i) {
    int id = i + 1;
    int g = i % spec.n_genres;
    ItemMetadata m;
    m.item_id = id;
    m.title = "movie" + std::to_string(id);
    m.genre = {genre_pools()[static_cast<size_t>(g)].name};
    m.actors = {pick(rng, actor_pool()), pick(rng, actor_pool())};
    m.directors = {pick(rng, director_pool())};
    const auto& gw = genre_words[static_cast<size_t>(g)];
    // one unique keyword plus genre flavor words
    m.plot = "about kw" + std::to_string(id) + " with " + pick(rng, gw) + " " +
             pick(rng, gw) + " " + pick(rng, gw);
    items.push_back(std::move(m));
    by_genre[static_cast<size_t>(g)].push_back(id);
  }
  MetadataDb db(std::move(items));

  static const std::vector<const char*> kGenreTemplates = {
      "i love % movies", "something % would be nice", "i am into % films",
      "give me something %", "i really enjoy % stories"};
  static const std::vector<const char*> kKeywordTemplates = {
      "i want a % movie about #", "maybe a % film with # in it",
      "looking for a % one about #", "it should be % and about #"};
  static const std::vector<const char*> kAckTemplates = {
      "what kind of movies do you like ?", "tell me more about what you want",
      "i see . anything else ?", "sure , what else do you enjoy ?"};
  static const std::vector<const char*> kChitchatSeeker = {
      "hi there , how are you ?", "i just got home from work",
      "it is a lazy evening here", "hello , nice to meet you"};
  static const std::vector<const char*> kChitchatRec = {
      "i am doing great , thanks for asking", "nice to meet you too",
      "sounds relaxing , movies help with that", "hello ! happy to help"};
  static const std::vector<const char*> kDistractor = {
      "i liked @%", "i watched @% recently", "@% was fun"};
  static const std::vector<const char*> kRecTemplates = {
      "you should watch @% !", "i think you would enjoy @%",
      "then i recommend @%", "have you seen @% ? it is a great pick"};

  auto fill = [](std::string tpl, const std::string& a,
                 const std::string& b = "") {
    size_t p = tpl.find('%');
    if (p != std::string::npos) tpl = tpl.substr(0, p) + a + tpl.substr(p + 1);
    p = tpl.find('#');
    if (p != std::string::npos) tpl = tpl.substr(0, p) + b + tpl.substr(p + 1);
    return tpl;
  };

  std::vector<Dialog> dialogs;
  for (int dlg = 0; dlg < spec.n_dialogs; ++dlg) {
    int target = rng.uniform_int(1, spec.n_items);
    int g = (target - 1) % spec.n_genres;
    const auto& gw = genre_words[static_cast<size_t>(g)];
    int n_seek = rng.uniform_int(spec.turns_min, spec.turns_max);
    int keyword_turn = rng.uniform_int(0, n_seek - 1);
    std::string keyword = "kw" + std::to_string(target);

    std::vector<std::pair<Speaker, std::string>> script;
    if (rng.uniform() < spec.chitchat_prob) {
      script.emplace_back(Speaker::Seeker, pick(rng, kChitchatSeeker));
      script.emplace_back(Speaker::Recommender, pick(rng, kChitchatRec));
    }
    for (int s = 0; s < n_seek; ++s) {
      std::string line;
      if (s == keyword_turn)
        line = fill(pick(rng, kKeywordTemplates), pick(rng, gw), keyword);
      else if (rng.uniform() < spec.chitchat_prob)
        line = pick(rng, kChitchatSeeker);
      else
        line = fill(pick(rng, kGenreTemplates), pick(rng, gw));
      if (rng.uniform() < spec.distractor_prob &&
          by_genre[static_cast<size_t>(g)].size() > 1) {
        int other = target;
        while (other == target)
          other = pick(rng, by_genre[static_cast<size_t>(g)]);
        line += " . " + fill(pick(rng, kDistractor), std::to_string(other));
      }
      script.emplace_back(Speaker::Seeker, line);
      if (s + 1 < n_seek)
        script.emplace_back(Speaker::Recommender, pick(rng, kAckTemplates));
    }
    script.emplace_back(Speaker::Recommender,
                        fill(pick(rng, kRecTemplates), std::to_string(target)));

    Dialog d;
    d.dialog_id = dlg;
    for (size_t s = 0; s < script.size(); ++s) {
      Turn t;
      t.speaker = script[s].first;
      auto [tokens, mentions] = parse_turn_text(script[s].second);
      t.tokens = std::move(tokens);
      t.mentions = std::move(mentions);
      if (s + 1 == script.size()) t.rec_ids = {target};
      d.turns.push_back(std::move(t));
    }
    dialogs.push_back(std::move(d));
  }
  return {std::move(db), std::move(dialogs)};
}

}  // namespace convrec
