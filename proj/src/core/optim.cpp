#include "optim.hpp"

#include <cmath>

namespace convrec {

void ParamSet::add(const std::string& name, Tensor t) {
  if (by_name_.count(name))
    throw NumericError("params: duplicate parameter name " + name);
  if (!t.requires_grad())
    throw NumericError("params: " + name + " does not require grad");
  by_name_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
}

Tensor* ParamSet::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &items_[it->second].second;
}

int64_t ParamSet::numel() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void ParamSet::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

void AdamW::step(ParamSet& params, double lr_scale) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  const double lr = cfg_.lr * lr_scale;
  for (auto& [name, p] : params.items()) {
    if (!p.has_grad())
      throw NumericError("optimizer: missing gradient for parameter " + name);
    auto& slot = slots_[name];
    const size_t n = p.values().size();
    if (slot.m.empty()) {
      slot.m.assign(n, 0.0);
      slot.v.assign(n, 0.0);
    }
    if (slot.m.size() != n)
      throw ShapeError("optimizer: moment shape mismatch for " + name);
    auto& w = p.values();
    const auto& g = p.grad();
    for (size_t k = 0; k < n; ++k) {
      slot.m[k] = cfg_.beta1 * slot.m[k] + (1.0 - cfg_.beta1) * g[k];
      slot.v[k] = cfg_.beta2 * slot.v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mhat = slot.m[k] / bc1;
      const double vhat = slot.v[k] / bc2;
      w[k] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                    cfg_.weight_decay * w[k]);
    }
  }
}

Scheduler scheduler_from_string(const std::string& s) {
  if (s == "constant") return Scheduler::Constant;
  if (s == "warmup_constant") return Scheduler::WarmupConstant;
  if (s == "warmup_linear") return Scheduler::WarmupLinear;
  throw ConfigError("unknown scheduler '" + s + "'");
}

std::string scheduler_to_string(Scheduler s) {
  switch (s) {
    case Scheduler::Constant: return "constant";
    case Scheduler::WarmupConstant: return "warmup_constant";
    case Scheduler::WarmupLinear: return "warmup_linear";
  }
  return "constant";
}

double lr_multiplier(Scheduler s, int64_t step, int64_t total_steps,
                     int64_t warmup_steps) {
  if (s == Scheduler::Constant) return 1.0;
  if (warmup_steps > 0 && step < warmup_steps)
    return static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (s == Scheduler::WarmupConstant) return 1.0;
  // linear decay to zero over the post-warmup span
  int64_t span = total_steps - warmup_steps;
  if (span <= 0) return 1.0;
  double frac = static_cast<double>(step - warmup_steps) /
                static_cast<double>(span);
  return std::max(0.0, 1.0 - frac);
}

}  // namespace convrec
