#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"

namespace convrec {

// Shapes are {n} or {rows, cols}; a scalar is {1}. Values are float64;
// float32 only appears in checkpoint storage.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct TensorNode;

// Value-semantics handle onto a graph node. Ops record a backward closure
// when gradients are enabled and some input requires them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stdev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rows() const;  // a 1-D tensor counts as one row
  int cols() const;
  int64_t size() const;
  bool is_scalar() const { return defined() && size() == 1; }
  double item() const;
  double at(int r, int c) const;

  // Handle semantics: a const handle still reaches the shared payload.
  std::vector<double>& values() const;
  bool has_grad() const;
  std::vector<double>& grad() const;  // allocates zeroed storage on demand
  void zero_grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool v);

  // Reverse-mode pass from a scalar. Grad buffers of every reached node are
  // zeroed first, then exact gradients accumulate. A recorded graph supports
  // a single backward; rebuild the graph before differentiating again.
  void backward() const;

  TensorNode* node() const { return node_.get(); }

  std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  bool backward_ran = false;
  std::vector<Tensor> parents;
  std::function<void(TensorNode&)> backward_fn;
};

// ---- forward ops ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// add/sub/mul accept equal shapes, a 1-row vector broadcast over rows, or a
// scalar broadcast everywhere (second operand only).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor gather_rows(const Tensor& m, std::vector<int> idx);  // embedding lookup
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, int start, int count);
Tensor slice_cols(const Tensor& a, int start, int count);
Tensor softmax_rows(const Tensor& a);  // max-subtracted
// Row-wise normalization; constant rows map to zeros (denominator guarded by
// eps). Affine gain/bias are applied by the caller via mul/add.
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor relu(const Tensor& a);
Tensor mean_rows(const Tensor& a);  // -> 1 x cols
Tensor sum_all(const Tensor& a);    // -> scalar
Tensor mean_all(const Tensor& a);
Tensor dropout(const Tensor& a, double rate, Rng& rng);
// Mean negative log-likelihood over rows, computed from logits via
// max-subtracted logsumexp.
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets);

bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace convrec
