#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace convrec::test {

// Central finite differences against reverse-mode gradients. `make_loss`
// rebuilds the graph from current parameter values on every call. Relative
// error uses a 1e-3 floor in the denominator so near-zero coordinates get an
// absolute tolerance of rtol * 1e-3.
struct FdReport {
  double max_rel_err = 0.0;
  std::string worst;
};

inline FdReport fd_check(const std::function<Tensor()>& make_loss,
                         const std::vector<std::pair<std::string, Tensor>>& params,
                         double h = 1e-5, int max_coords_per_tensor = 0) {
  FdReport rep;
  Tensor loss = make_loss();
  loss.backward();
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& [name, p] : params) grads.push_back(p.grad());

  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].second.values();
    const size_t n = vals.size();
    const size_t step =
        max_coords_per_tensor > 0 && n > static_cast<size_t>(max_coords_per_tensor)
            ? n / static_cast<size_t>(max_coords_per_tensor)
            : 1;
    for (size_t k = 0; k < n; k += step) {
      const double orig = vals[k];
      vals[k] = orig + h;
      double fp;
      {
        NoGradGuard ng;
        fp = make_loss().item();
      }
      vals[k] = orig - h;
      double fm;
      {
        NoGradGuard ng;
        fm = make_loss().item();
      }
      vals[k] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = grads[pi][k];
      const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-3});
      const double rel = std::fabs(fd - ad) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = params[pi].first + "[" + std::to_string(k) +
                    "] ad=" + std::to_string(ad) + " fd=" + std::to_string(fd);
      }
    }
  }
  return rep;
}

inline std::vector<std::pair<std::string, Tensor>> named(
    std::initializer_list<std::pair<std::string, Tensor>> ps) {
  return {ps.begin(), ps.end()};
}

}  // namespace convrec::test
