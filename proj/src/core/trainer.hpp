#pragma once

#include <functional>
#include <ostream>
#include <vector>

#include "responder.hpp"

namespace convrec {

struct TrainConfig {
  int epochs = 8;
  uint64_t seed = 0;
  AdamWConfig adamw;
  Scheduler scheduler = Scheduler::Constant;
  double warmup_fraction = 0.1;
  int batch_size = 1;
  int m_negatives = 8;
  JointLossWeights weights;
};

struct TrainStats {
  int64_t steps = 0;
  int64_t samples = 0;
  double final_joint = 0.0;
  TruncationLog truncation;
};

// One sample per system turn; seeker turns never contribute.
struct TurnSample {
  int dialog_index = 0;
  int turn_index = 0;
};
std::vector<TurnSample> collect_samples(const std::vector<Dialog>& dialogs);

// Single-writer loop over shuffled turn samples; negatives are resampled
// fresh every step. Throws NumericError on a non-finite loss.
TrainStats train_model(
    Model& model, const MetadataDb& db, const std::vector<Dialog>& dialogs,
    const TrainConfig& cfg, const FieldFilter& filter,
    const ContextOptions& ctx_opts, AdamW& opt, std::ostream* step_log = nullptr,
    int start_epoch = 0,
    const std::function<void(int completed_epoch)>& on_epoch_end = nullptr);

// Deterministic tail split: the last round(fraction * n) dialogs are held out.
std::pair<std::vector<Dialog>, std::vector<Dialog>> split_dialogs(
    const std::vector<Dialog>& dialogs, double eval_fraction);

}  // namespace convrec
