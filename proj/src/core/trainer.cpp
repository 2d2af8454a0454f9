#include "trainer.hpp"

#include <cmath>

#include "json.hpp"

namespace convrec {

std::vector<TurnSample> collect_samples(const std::vector<Dialog>& dialogs) {
  std::vector<TurnSample> out;
  for (size_t d = 0; d < dialogs.size(); ++d)
    for (size_t t = 0; t < dialogs[d].turns.size(); ++t)
      if (dialogs[d].turns[t].speaker == Speaker::Recommender)
        out.push_back({static_cast<int>(d), static_cast<int>(t)});
  return out;
}

TrainStats train_model(Model& model, const MetadataDb& db,
                       const std::vector<Dialog>& dialogs,
                       const TrainConfig& cfg, const FieldFilter& filter,
                       const ContextOptions& ctx_opts, AdamW& opt,
                       std::ostream* step_log, int start_epoch,
                       const std::function<void(int)>& on_epoch_end) {
  if (cfg.epochs < start_epoch)
    throw ConfigError("train: target epochs below checkpoint epochs");
  TrainStats stats;
  RecContext rc{model, db, filter, ctx_opts, &stats.truncation};
  ParamSet params = model.params();
  std::vector<TurnSample> samples = collect_samples(dialogs);
  stats.samples = static_cast<int64_t>(samples.size());
  if (samples.empty()) return stats;

  const int bs = std::max(1, cfg.batch_size);
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(samples.size()) + bs - 1) / bs;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int64_t warmup_steps = cfg.scheduler == Scheduler::Constant
                                   ? 0
                                   : static_cast<int64_t>(std::llround(
                                         cfg.warmup_fraction *
                                         static_cast<double>(total_steps)));

  Rng neg_rng(derive_seed(cfg.seed, "negatives"));
  int64_t global_step = steps_per_epoch * start_epoch;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle-" + std::to_string(epoch)));
    std::vector<TurnSample> order = samples;
    shuffle_rng.shuffle(order);

    for (size_t s0 = 0; s0 < order.size(); s0 += static_cast<size_t>(bs)) {
      const size_t s1 = std::min(order.size(), s0 + static_cast<size_t>(bs));
      params.zero_grads();
      Tensor batch_loss;
      double sel = 0, rank = 0, res = 0;
      int n_rec = 0, n_res = 0;
      for (size_t s = s0; s < s1; ++s) {
        const Dialog& d = dialogs[static_cast<size_t>(order[s].dialog_index)];
        const Turn& turn = d.turns[static_cast<size_t>(order[s].turn_index)];
        std::vector<Turn> prefix(
            d.turns.begin(), d.turns.begin() + order[s].turn_index);
        JointLossParts parts;
        Tensor loss = joint_loss(rc, prefix, turn, cfg.weights,
                                 cfg.m_negatives, neg_rng, &parts);
        if (parts.has_rec) {
          sel += parts.select;
          rank += parts.rank;
          ++n_rec;
        }
        res += parts.res;
        ++n_res;
        batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(s1 - s0));
      const double joint = batch_loss.item();
      if (!std::isfinite(joint))
        throw NumericError("train: non-finite joint loss at step " +
                           std::to_string(global_step));
      batch_loss.backward();
      const double lr_scale = lr_multiplier(cfg.scheduler, global_step,
                                            total_steps, warmup_steps);
      opt.step(params, lr_scale);
      ++global_step;
      ++stats.steps;
      stats.final_joint = joint;
      if (step_log) {
        nlohmann::json line{
            {"step", global_step},
            {"epoch", epoch},
            {"lr", opt.config().lr * lr_scale},
            {"loss_select", n_rec ? sel / n_rec : 0.0},
            {"loss_rank", n_rec ? rank / n_rec : 0.0},
            {"loss_res", n_res ? res / n_res : 0.0},
            {"loss_joint", joint}};
        (*step_log) << line.dump() << "\n";
      }
    }
    if (on_epoch_end) on_epoch_end(epoch + 1);
  }
  return stats;
}

std::pair<std::vector<Dialog>, std::vector<Dialog>> split_dialogs(
    const std::vector<Dialog>& dialogs, double eval_fraction) {
  if (eval_fraction < 0.0 || eval_fraction >= 1.0)
    throw ConfigError("eval fraction must be in [0,1)");
  size_t n_eval = static_cast<size_t>(
      std::llround(eval_fraction * static_cast<double>(dialogs.size())));
  if (n_eval >= dialogs.size()) n_eval = dialogs.size() - 1;
  std::vector<Dialog> train(dialogs.begin(),
                            dialogs.end() - static_cast<long>(n_eval));
  std::vector<Dialog> eval(dialogs.end() - static_cast<long>(n_eval),
                           dialogs.end());
  return {std::move(train), std::move(eval)};
}

}  // namespace convrec
