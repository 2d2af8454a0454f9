#pragma once

#include <map>
#include <string>
#include <vector>

#include "context.hpp"
#include "corpus.hpp"
#include "item_encoder.hpp"
#include "recommender.hpp"
#include "responder.hpp"
#include "trainer.hpp"

namespace convrec {

// Flat key-value config with [section] headers; keys are "section.key".
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_ini(const std::string& text);
KeyValues load_config_file(const std::string& path);
// Overrides are "section.key=value" strings; flags win over file values.
void apply_overrides(KeyValues& kv, const std::vector<std::string>& overrides);

std::string canonical_config(const KeyValues& kv);
std::string config_fingerprint(const KeyValues& kv);

struct RunConfig {
  // paths
  std::string metadata_db;
  std::string corpus;
  std::string checkpoint;
  std::string index_path;
  std::string report_dir;
  std::string resume_from;
  std::string corpus_format = "native";  // native | redial

  DecoderConfig model;
  bool tie_encoders = false;

  TrainConfig train;
  double eval_fraction = 0.2;

  int k_candidates = 500;  // serving-time candidate count
  NNIndex::Mode index_mode = NNIndex::Mode::Exact;

  GenerationConfig gen;

  FieldFilter filter;
  ContextOptions ctx_opts;

  // ablation deltas for the paired-run driver
  std::string ablation_remove_fields;  // csv of fields removed in the variant
  bool ablation_strip_mentions = false;

  uint64_t seed = 0;
  bool force = false;

  // the effective (defaults-filled) key-value view used for fingerprinting
  KeyValues effective;

  static RunConfig from_kv(const KeyValues& kv);
  static RunConfig load(const std::string& path,
                        const std::vector<std::string>& overrides);
  std::string fingerprint() const { return config_fingerprint(effective); }
};

SyntheticSpec synthetic_spec_from_kv(const KeyValues& kv);

}  // namespace convrec
