#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace convrec {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

class KvReader {
 public:
  explicit KvReader(const KeyValues& kv) : kv_(kv) {}

  std::string str(const std::string& key, const std::string& def) {
    effective_[key] = get(key, def);
    return effective_[key];
  }
  int integer(const std::string& key, int def) {
    std::string v = get(key, std::to_string(def));
    effective_[key] = v;
    try {
      return std::stoi(v);
    } catch (...) {
      throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
  }
  double real(const std::string& key, double def) {
    std::ostringstream os;
    os << def;
    std::string v = get(key, os.str());
    effective_[key] = v;
    try {
      return std::stod(v);
    } catch (...) {
      throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
  }
  bool boolean(const std::string& key, bool def) {
    std::string v = get(key, def ? "true" : "false");
    effective_[key] = v;
    return to_bool(key, v);
  }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  const KeyValues& effective() const { return effective_; }

 private:
  std::string get(const std::string& key, const std::string& def) {
    auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }
  const KeyValues& kv_;
  KeyValues effective_;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace

KeyValues parse_ini(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    kv[section.empty() ? key : section + "." + key] = val;
  }
  return kv;
}

KeyValues load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return parse_ini(os.str());
}

void apply_overrides(KeyValues& kv, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + ov + "' is not of the form key=value");
    kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
}

std::string canonical_config(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::string config_fingerprint(const KeyValues& kv) {
  return hex64(fnv1a64(canonical_config(kv)));
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
  RunConfig c;
  KvReader r(kv);

  if (!r.has("run.seed"))
    throw ConfigError("run.seed is mandatory (reproducibility contract)");
  c.seed = static_cast<uint64_t>(
      std::stoull(r.str("run.seed", "0")));
  c.force = r.boolean("run.force", false);

  c.metadata_db = r.str("paths.metadata_db", "");
  c.corpus = r.str("paths.corpus", "");
  c.checkpoint = r.str("paths.checkpoint", "");
  c.index_path = r.str("paths.index", "");
  c.report_dir = r.str("paths.report_dir", "");
  c.resume_from = r.str("paths.resume_from", "");
  c.corpus_format = r.str("paths.corpus_format", "native");
  if (c.corpus_format != "native" && c.corpus_format != "redial")
    throw ConfigError("paths.corpus_format must be native or redial");

  c.model.n_layers = r.integer("model.n_layers", 2);
  c.model.n_heads = r.integer("model.n_heads", 4);
  c.model.d_model = r.integer("model.d_model", 64);
  c.model.d_ff = r.integer("model.d_ff", 256);
  c.model.max_positions = r.integer("model.max_positions", 256);
  c.model.dropout = r.real("model.dropout", 0.0);
  c.tie_encoders = r.boolean("model.tie_encoders", false);
  c.model.validate();

  c.train.epochs = r.integer("train.epochs", 8);
  c.train.seed = c.seed;
  c.train.adamw.lr = r.real("train.lr", 3e-5);
  c.train.adamw.weight_decay = r.real("train.weight_decay", 0.0);
  c.train.adamw.eps = r.real("train.adam_eps", 1e-6);
  c.train.adamw.beta1 = r.real("train.beta1", 0.9);
  c.train.adamw.beta2 = r.real("train.beta2", 0.999);
  c.train.scheduler = scheduler_from_string(r.str("train.scheduler", "constant"));
  c.train.warmup_fraction = r.real("train.warmup_fraction", 0.1);
  c.train.batch_size = r.integer("train.batch_size", 1);
  c.train.m_negatives = r.integer("train.m_negatives", 150);
  c.train.weights.a = r.real("train.loss_a", 0.3);
  c.train.weights.b = r.real("train.loss_b", 1.0);
  c.train.weights.c = r.real("train.loss_c", 0.5);
  c.train.weights.validate();
  c.eval_fraction = r.real("train.eval_fraction", 0.2);
  if (c.train.epochs < 0 || c.train.batch_size < 1 || c.train.m_negatives < 0)
    throw ConfigError("train: invalid epochs/batch_size/m_negatives");

  c.k_candidates = r.integer("rec.k", 500);
  if (c.k_candidates < 1) throw ConfigError("rec.k must be positive");
  std::string mode = r.str("rec.index_mode", "exact");
  if (mode == "exact")
    c.index_mode = NNIndex::Mode::Exact;
  else if (mode == "approx")
    c.index_mode = NNIndex::Mode::Approx;
  else
    throw ConfigError("rec.index_mode must be exact or approx");

  c.gen.max_new_tokens = r.integer("gen.max_new_tokens", 48);
  std::string decode = r.str("gen.decode", "greedy");
  if (decode == "greedy")
    c.gen.decode = GenerationConfig::Decode::Greedy;
  else if (decode == "sample")
    c.gen.decode = GenerationConfig::Decode::Sample;
  else
    throw ConfigError("gen.decode must be greedy or sample");
  c.gen.temperature = r.real("gen.temperature", 1.0);
  c.gen.seed = c.seed;
  c.gen.validate();

  std::string fields = r.str("ablation.metadata_fields",
                             "title,genre,actors,directors,plot");
  c.filter.included.clear();
  for (const auto& f : split_csv(fields)) {
    if (std::find(kMetadataFields.begin(), kMetadataFields.end(), f) ==
        kMetadataFields.end())
      throw ConfigError("ablation.metadata_fields: unknown field '" + f + "'");
    c.filter.included.insert(f);
  }
  if (c.filter.included.empty())
    throw ConfigError("ablation.metadata_fields must keep at least one field");
  c.ctx_opts.strip_mentions = r.boolean("ablation.strip_mentions", false);
  std::string placement = r.str("ablation.ite_placement", "inline");
  if (placement == "inline")
    c.ctx_opts.placement = ItePlacement::Inline;
  else if (placement == "tail")
    c.ctx_opts.placement = ItePlacement::Tail;
  else
    throw ConfigError("ablation.ite_placement must be inline or tail");
  c.ctx_opts.max_tokens = r.integer("train.ctx_max_tokens", 192);
  if (c.ctx_opts.max_tokens < 4)
    throw ConfigError("train.ctx_max_tokens is too small");

  c.ablation_remove_fields = r.str("ablation.delta_remove_fields", "");
  c.ablation_strip_mentions = r.boolean("ablation.delta_strip_mentions", false);

  c.effective = r.effective();
  return c;
}

RunConfig RunConfig::load(const std::string& path,
                          const std::vector<std::string>& overrides) {
  KeyValues kv = path.empty() ? KeyValues{} : load_config_file(path);
  apply_overrides(kv, overrides);
  return from_kv(kv);
}

SyntheticSpec synthetic_spec_from_kv(const KeyValues& kv) {
  KvReader r(kv);
  SyntheticSpec s;
  if (!r.has("synthetic.seed") && !r.has("run.seed"))
    throw ConfigError("synthetic spec: seed is mandatory");
  s.seed = static_cast<uint64_t>(std::stoull(
      r.has("synthetic.seed") ? r.str("synthetic.seed", "0")
                              : r.str("run.seed", "0")));
  s.n_items = r.integer("synthetic.n_items", 30);
  s.n_genres = r.integer("synthetic.n_genres", 3);
  s.n_dialogs = r.integer("synthetic.n_dialogs", 200);
  s.turns_min = r.integer("synthetic.turns_min", 1);
  s.turns_max = r.integer("synthetic.turns_max", 3);
  s.chitchat_prob = r.real("synthetic.chitchat_prob", 0.25);
  s.genre_vocab = r.integer("synthetic.genre_vocab", 10);
  s.distractor_prob = r.real("synthetic.distractor_prob", 0.3);
  s.validate();
  return s;
}

}  // namespace convrec
