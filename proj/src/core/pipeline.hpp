#pragma once

#include <memory>
#include <string>

#include "json.hpp"

#include "config.hpp"
#include "evaluator.hpp"

namespace convrec {

// Command implementations behind the C API and the CLI. All of them throw
// ConfigError / DataError / NumericError; the C boundary maps those to exit
// codes.

void cmd_gen_corpus(const std::string& spec_path, const std::string& out_dir,
                    bool force);

void cmd_train(const RunConfig& cfg);
void cmd_index(const RunConfig& cfg);
nlohmann::json cmd_eval(const RunConfig& cfg);
nlohmann::json cmd_analyze(const RunConfig& cfg, const std::string& mode);

class ChatSession {
 public:
  explicit ChatSession(const RunConfig& cfg);

  struct Reply {
    std::string text;
    nlohmann::json trace;
  };
  Reply turn(const std::string& user_text);
  void reset();

 private:
  RunConfig cfg_;
  Model model_;
  MetadataDb db_;
  NNIndex index_;
  std::unique_ptr<ItemEmbedCache> cache_;
  std::vector<Turn> history_;
  int turn_counter_ = 0;
};

// Shared helpers (exposed for the test and ablation drivers).
Vocabulary build_vocabulary(const std::vector<Dialog>& dialogs,
                            const MetadataDb& db);
std::vector<Dialog> load_corpus_any(const RunConfig& cfg, MetadataDb& db);

struct TrainedRun {
  Model model;
  EvalReport train_report;
  EvalReport heldout_report;
};
// Train + evaluate one configuration fully in memory (ablation driver).
TrainedRun train_and_eval(const RunConfig& cfg, const MetadataDb& db,
                          const std::vector<Dialog>& dialogs);

}  // namespace convrec
