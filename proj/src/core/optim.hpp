#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace convrec {

// Ordered registry of named trainable tensors. Order is the checkpoint
// manifest order, so it must be deterministic.
class ParamSet {
 public:
  void add(const std::string& name, Tensor t);
  Tensor* find(const std::string& name);
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  size_t size() const { return items_.size(); }
  int64_t numel() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> by_name_;
};

struct AdamWConfig {
  double lr = 3e-5;  // overridable; desk-scale configs raise it
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.0;
};

// Decoupled-weight-decay adaptive-moment optimizer.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  // lr_scale multiplies the base rate (scheduler hook).
  void step(ParamSet& params, double lr_scale = 1.0);

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t t) { step_count_ = t; }
  const AdamWConfig& config() const { return cfg_; }

  struct Slot {
    std::vector<double> m, v;
  };
  std::unordered_map<std::string, Slot>& slots() { return slots_; }
  const std::unordered_map<std::string, Slot>& slots() const { return slots_; }

 private:
  AdamWConfig cfg_;
  int64_t step_count_ = 0;
  std::unordered_map<std::string, Slot> slots_;
};

enum class Scheduler { Constant, WarmupConstant, WarmupLinear };

Scheduler scheduler_from_string(const std::string& s);
std::string scheduler_to_string(Scheduler s);

// Multiplier applied to the base learning rate at a given 0-based step.
double lr_multiplier(Scheduler s, int64_t step, int64_t total_steps,
                     int64_t warmup_steps);

}  // namespace convrec
