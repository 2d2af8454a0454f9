#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace convrec {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

bool want_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(TensorNode&)> fn) {
  out.node_->requires_grad = true;
  out.node_->parents = std::move(parents);
  out.node_->backward_fn = std::move(fn);
}

std::vector<double>& grad_of(Tensor& t) { return t.grad(); }

[[noreturn]] void shape_fail(const std::string& op, const Shape& a,
                             const Shape& b) {
  throw ShapeError(op + ": shape mismatch " + shape_str(a) + " vs " +
                   shape_str(b));
}

// c += a(RxK) * b(KxC)
void mm_nn(const double* a, const double* b, double* c, int R, int K, int C) {
  for (int i = 0; i < R; ++i) {
    const double* ai = a + static_cast<size_t>(i) * K;
    double* ci = c + static_cast<size_t>(i) * C;
    for (int k = 0; k < K; ++k) {
      const double av = ai[k];
      const double* bk = b + static_cast<size_t>(k) * C;
      for (int j = 0; j < C; ++j) ci[j] += av * bk[j];
    }
  }
}

// c += a(RxK) * b(CxK)^T
void mm_nt(const double* a, const double* b, double* c, int R, int K, int C) {
  for (int i = 0; i < R; ++i) {
    const double* ai = a + static_cast<size_t>(i) * K;
    double* ci = c + static_cast<size_t>(i) * C;
    for (int j = 0; j < C; ++j) {
      const double* bj = b + static_cast<size_t>(j) * K;
      double acc = 0.0;
      for (int k = 0; k < K; ++k) acc += ai[k] * bj[k];
      ci[j] += acc;
    }
  }
}

// c(KxC) += a(RxK)^T * b(RxC)
void mm_tn(const double* a, const double* b, double* c, int R, int K, int C) {
  for (int i = 0; i < R; ++i) {
    const double* ai = a + static_cast<size_t>(i) * K;
    const double* bi = b + static_cast<size_t>(i) * C;
    for (int k = 0; k < K; ++k) {
      const double av = ai[k];
      double* ck = c + static_cast<size_t>(k) * C;
      for (int j = 0; j < C; ++j) ck[j] += av * bi[j];
    }
  }
}

enum class BroadcastKind { Same, Row, Scalar };

BroadcastKind broadcast_kind(const std::string& op, const Tensor& a,
                             const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return BroadcastKind::Same;
  if (b.size() == 1) return BroadcastKind::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return BroadcastKind::Row;
  shape_fail(op, a.shape(), b.shape());
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("tensor: nonpositive extent in " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = shape_numel(shape);
  Tensor t;
  t.node_ = make_node(std::move(shape),
                      std::vector<double>(static_cast<size_t>(n), 0.0));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node_->values.begin(), t.node_->values.end(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  Tensor t;
  t.node_ = make_node(std::move(shape), std::move(values));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stdev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.node_->values) v = rng.normal() * stdev;
  return t;
}

const Shape& Tensor::shape() const {
  if (!defined()) throw NumericError("tensor: undefined handle");
  return node_->shape;
}

int Tensor::rows() const {
  const Shape& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

int Tensor::cols() const {
  const Shape& s = shape();
  return s.size() == 2 ? s[1] : s[0];
}

int64_t Tensor::size() const {
  return static_cast<int64_t>(node_ ? node_->values.size() : 0);
}

double Tensor::item() const {
  if (!is_scalar())
    throw ShapeError("item: tensor of shape " + shape_str(shape()) +
                     " is not a scalar");
  return node_->values[0];
}

double Tensor::at(int r, int c) const {
  return node_->values[static_cast<size_t>(r) * cols() + c];
}

std::vector<double>& Tensor::values() const { return node_->values; }

bool Tensor::has_grad() const {
  return defined() && !node_->grad.empty();
}

std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() const {
  node_->grad.assign(node_->values.size(), 0.0);
}

bool Tensor::requires_grad() const {
  return defined() && node_->requires_grad;
}

void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }

void Tensor::backward() const {
  if (!defined() || !is_scalar())
    throw NumericError("backward: loss must be a scalar, got shape " +
                       (defined() ? shape_str(shape()) : std::string("()")));
  if (node_->backward_ran)
    throw NumericError(
        "backward: graph already differentiated; rebuild it before calling "
        "backward again");
  if (!std::isfinite(node_->values[0]))
    throw NumericError("backward: loss is not finite");

  // Post-order DFS over the requires_grad subgraph.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* n;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  if (node_->requires_grad) stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next_parent++].node();
      if (p->requires_grad && seen.insert(p).second)
        stack.push_back({p, 0});
    } else {
      topo.push_back(f.n);
      stack.pop_back();
    }
  }

  for (TensorNode* n : topo) n->grad.assign(n->values.size(), 0.0);
  if (node_->requires_grad) node_->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  node_->backward_ran = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---------------------------------------------------------------------------
// ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  const int R = a.rows(), K = a.cols(), C = b.cols();
  Tensor out = Tensor::zeros({R, C});
  mm_nn(a.values().data(), b.values().data(), out.values().data(), R, K, C);
  if (want_grad({&a, &b})) {
    attach(out, {a, b}, [R, K, C](TensorNode& self) {
      Tensor& pa = self.parents[0];
      Tensor& pb = self.parents[1];
      if (pa.requires_grad())
        mm_nt(self.grad.data(), pb.values().data(), grad_of(pa).data(), R, C, K);
      if (pb.requires_grad())
        mm_tn(pa.values().data(), self.grad.data(), grad_of(pb).data(), R, K, C);
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const int R = a.rows(), C = a.cols();
  Tensor out = Tensor::zeros({C, R});
  const auto& av = a.values();
  auto& ov = out.values();
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j)
      ov[static_cast<size_t>(j) * R + i] = av[static_cast<size_t>(i) * C + j];
  if (want_grad({&a})) {
    attach(out, {a}, [R, C](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (int j = 0; j < C; ++j)
        for (int i = 0; i < R; ++i)
          g[static_cast<size_t>(i) * C + j] +=
              self.grad[static_cast<size_t>(j) * R + i];
    });
  }
  return out;
}

namespace {

Tensor elementwise_binary(const std::string& name, const Tensor& a,
                          const Tensor& b, double sign_b, bool is_mul) {
  BroadcastKind kind = broadcast_kind(name, a, b);
  const int R = a.rows(), C = a.cols();
  Tensor out = Tensor::zeros({R, C});
  if (a.shape().size() == 1) out.node_->shape = a.shape();
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < C; ++j) {
      size_t k = static_cast<size_t>(i) * C + j;
      double bval = kind == BroadcastKind::Same  ? bv[k]
                    : kind == BroadcastKind::Row ? bv[static_cast<size_t>(j)]
                                                 : bv[0];
      ov[k] = is_mul ? av[k] * bval : av[k] + sign_b * bval;
    }
  }
  if (want_grad({&a, &b})) {
    attach(out, {a, b}, [kind, R, C, sign_b, is_mul](TensorNode& self) {
      Tensor& pa = self.parents[0];
      Tensor& pb = self.parents[1];
      const auto& av = pa.values();
      const auto& bv = pb.values();
      if (pa.requires_grad()) {
        auto& g = grad_of(pa);
        for (size_t k = 0; k < self.grad.size(); ++k) {
          if (is_mul) {
            size_t j = k % static_cast<size_t>(C);
            double bval = kind == BroadcastKind::Same  ? bv[k]
                          : kind == BroadcastKind::Row ? bv[j]
                                                       : bv[0];
            g[k] += self.grad[k] * bval;
          } else {
            g[k] += self.grad[k];
          }
        }
      }
      if (pb.requires_grad()) {
        auto& g = grad_of(pb);
        for (int i = 0; i < R; ++i) {
          for (int j = 0; j < C; ++j) {
            size_t k = static_cast<size_t>(i) * C + j;
            size_t dst = kind == BroadcastKind::Same  ? k
                         : kind == BroadcastKind::Row ? static_cast<size_t>(j)
                                                      : 0;
            double up = self.grad[k];
            g[dst] += is_mul ? up * av[k] : sign_b * up;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary("add", a, b, 1.0, false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary("sub", a, b, -1.0, false);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary("mul", a, b, 1.0, true);
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t k = 0; k < av.size(); ++k) ov[k] = av[k] * s;
  if (want_grad({&a})) {
    attach(out, {a}, [s](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (size_t k = 0; k < self.grad.size(); ++k) g[k] += self.grad[k] * s;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t k = 0; k < av.size(); ++k) ov[k] = av[k] + s;
  if (want_grad({&a})) {
    attach(out, {a}, [](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (size_t k = 0; k < self.grad.size(); ++k) g[k] += self.grad[k];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& m, std::vector<int> idx) {
  const int R = m.rows(), C = m.cols();
  if (idx.empty()) throw ShapeError("gather_rows: empty index list");
  for (int i : idx)
    if (i < 0 || i >= R)
      throw ShapeError("gather_rows: index " + std::to_string(i) +
                       " out of range for " + shape_str(m.shape()));
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), C});
  const auto& mv = m.values();
  auto& ov = out.values();
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(mv.data() + static_cast<size_t>(idx[r]) * C, C,
                ov.data() + r * static_cast<size_t>(C));
  if (want_grad({&m})) {
    attach(out, {m}, [idx = std::move(idx), C](TensorNode& self) {
      Tensor& pm = self.parents[0];
      if (!pm.requires_grad()) return;
      auto& g = grad_of(pm);
      for (size_t r = 0; r < idx.size(); ++r) {
        const double* src = self.grad.data() + r * static_cast<size_t>(C);
        double* dst = g.data() + static_cast<size_t>(idx[r]) * C;
        for (int j = 0; j < C; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const int C = parts[0].cols();
  int R = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != C) shape_fail("concat_rows", parts[0].shape(), p.shape());
    R += p.rows();
  }
  Tensor out = Tensor::zeros({R, C});
  auto& ov = out.values();
  size_t off = 0;
  bool need = false;
  for (const Tensor& p : parts) {
    std::copy(p.values().begin(), p.values().end(), ov.begin() + off);
    off += p.values().size();
    need = need || p.requires_grad();
  }
  if (g_grad_enabled && need) {
    attach(out, parts, [](TensorNode& self) {
      size_t off = 0;
      for (Tensor& p : self.parents) {
        size_t n = p.values().size();
        if (p.requires_grad()) {
          auto& g = grad_of(p);
          for (size_t k = 0; k < n; ++k) g[k] += self.grad[off + k];
        }
        off += n;
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int R = parts[0].rows();
  int C = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != R) shape_fail("concat_cols", parts[0].shape(), p.shape());
    C += p.cols();
  }
  Tensor out = Tensor::zeros({R, C});
  auto& ov = out.values();
  int coff = 0;
  bool need = false;
  for (const Tensor& p : parts) {
    const int pc = p.cols();
    const auto& pv = p.values();
    for (int i = 0; i < R; ++i)
      std::copy_n(pv.data() + static_cast<size_t>(i) * pc, pc,
                  ov.data() + static_cast<size_t>(i) * C + coff);
    coff += pc;
    need = need || p.requires_grad();
  }
  if (g_grad_enabled && need) {
    attach(out, parts, [R, C](TensorNode& self) {
      int coff = 0;
      for (Tensor& p : self.parents) {
        const int pc = p.cols();
        if (p.requires_grad()) {
          auto& g = grad_of(p);
          for (int i = 0; i < R; ++i)
            for (int j = 0; j < pc; ++j)
              g[static_cast<size_t>(i) * pc + j] +=
                  self.grad[static_cast<size_t>(i) * C + coff + j];
        }
        coff += pc;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int start, int count) {
  const int R = a.rows(), C = a.cols();
  if (start < 0 || count <= 0 || start + count > R)
    throw ShapeError("slice_rows: range [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") invalid for " +
                     shape_str(a.shape()));
  Tensor out = Tensor::zeros({count, C});
  std::copy_n(a.values().data() + static_cast<size_t>(start) * C,
              static_cast<size_t>(count) * C, out.values().data());
  if (want_grad({&a})) {
    attach(out, {a}, [start, count, C](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (size_t k = 0; k < static_cast<size_t>(count) * C; ++k)
        g[static_cast<size_t>(start) * C + k] += self.grad[k];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, int start, int count) {
  const int R = a.rows(), C = a.cols();
  if (start < 0 || count <= 0 || start + count > C)
    throw ShapeError("slice_cols: range [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") invalid for " +
                     shape_str(a.shape()));
  Tensor out = Tensor::zeros({R, count});
  const auto& av = a.values();
  auto& ov = out.values();
  for (int i = 0; i < R; ++i)
    std::copy_n(av.data() + static_cast<size_t>(i) * C + start, count,
                ov.data() + static_cast<size_t>(i) * count);
  if (want_grad({&a})) {
    attach(out, {a}, [start, count, C, R](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (int i = 0; i < R; ++i)
        for (int j = 0; j < count; ++j)
          g[static_cast<size_t>(i) * C + start + j] +=
              self.grad[static_cast<size_t>(i) * count + j];
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  const int R = a.rows(), C = a.cols();
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (int i = 0; i < R; ++i) {
    const double* x = av.data() + static_cast<size_t>(i) * C;
    double* y = ov.data() + static_cast<size_t>(i) * C;
    double m = x[0];
    for (int j = 1; j < C; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (int j = 0; j < C; ++j) {
      y[j] = std::exp(x[j] - m);
      s += y[j];
    }
    for (int j = 0; j < C; ++j) y[j] /= s;
  }
  if (want_grad({&a})) {
    attach(out, {a}, [R, C](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (int i = 0; i < R; ++i) {
        const double* y = self.values.data() + static_cast<size_t>(i) * C;
        const double* dy = self.grad.data() + static_cast<size_t>(i) * C;
        double dot = 0.0;
        for (int j = 0; j < C; ++j) dot += dy[j] * y[j];
        double* dx = g.data() + static_cast<size_t>(i) * C;
        for (int j = 0; j < C; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& a, double eps) {
  const int R = a.rows(), C = a.cols();
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  std::vector<double> invs(static_cast<size_t>(R));
  for (int i = 0; i < R; ++i) {
    const double* x = av.data() + static_cast<size_t>(i) * C;
    double* y = ov.data() + static_cast<size_t>(i) * C;
    double mean = 0.0;
    for (int j = 0; j < C; ++j) mean += x[j];
    mean /= C;
    double var = 0.0;
    for (int j = 0; j < C; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= C;
    double inv = 1.0 / std::sqrt(var + eps);
    invs[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < C; ++j) y[j] = (x[j] - mean) * inv;
  }
  if (want_grad({&a})) {
    attach(out, {a}, [R, C, invs = std::move(invs)](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (int i = 0; i < R; ++i) {
        const double* y = self.values.data() + static_cast<size_t>(i) * C;
        const double* dy = self.grad.data() + static_cast<size_t>(i) * C;
        double mean_dy = 0.0, mean_dyy = 0.0;
        for (int j = 0; j < C; ++j) {
          mean_dy += dy[j];
          mean_dyy += dy[j] * y[j];
        }
        mean_dy /= C;
        mean_dyy /= C;
        double inv = invs[static_cast<size_t>(i)];
        double* dx = g.data() + static_cast<size_t>(i) * C;
        for (int j = 0; j < C; ++j)
          dx[j] += inv * (dy[j] - mean_dy - y[j] * mean_dyy);
      }
    });
  }
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
}

Tensor gelu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t k = 0; k < av.size(); ++k) {
    double x = av[k];
    double u = kGeluC * (x + 0.044715 * x * x * x);
    ov[k] = 0.5 * x * (1.0 + std::tanh(u));
  }
  if (want_grad({&a})) {
    attach(out, {a}, [](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      const auto& av = pa.values();
      auto& g = grad_of(pa);
      for (size_t k = 0; k < self.grad.size(); ++k) {
        double x = av[k];
        double u = kGeluC * (x + 0.044715 * x * x * x);
        double t = std::tanh(u);
        double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
        double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        g[k] += self.grad[k] * d;
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t k = 0; k < av.size(); ++k) ov[k] = av[k] > 0.0 ? av[k] : 0.0;
  if (want_grad({&a})) {
    attach(out, {a}, [](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      const auto& av = pa.values();
      auto& g = grad_of(pa);
      for (size_t k = 0; k < self.grad.size(); ++k)
        if (av[k] > 0.0) g[k] += self.grad[k];
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  const int R = a.rows(), C = a.cols();
  Tensor out = Tensor::zeros({1, C});
  const auto& av = a.values();
  auto& ov = out.values();
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) ov[static_cast<size_t>(j)] += av[static_cast<size_t>(i) * C + j];
  for (int j = 0; j < C; ++j) ov[static_cast<size_t>(j)] /= R;
  if (want_grad({&a})) {
    attach(out, {a}, [R, C](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j)
          g[static_cast<size_t>(i) * C + j] += self.grad[static_cast<size_t>(j)] / R;
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (want_grad({&a})) {
    attach(out, {a}, [](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (size_t k = 0; k < g.size(); ++k) g[k] += self.grad[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor dropout(const Tensor& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw NumericError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  const double keep = 1.0 - rate;
  std::vector<double> mask(a.values().size());
  for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t k = 0; k < av.size(); ++k) ov[k] = av[k] * mask[k];
  if (want_grad({&a})) {
    attach(out, {a}, [mask = std::move(mask)](TensorNode& self) {
      Tensor& pa = self.parents[0];
      if (!pa.requires_grad()) return;
      auto& g = grad_of(pa);
      for (size_t k = 0; k < self.grad.size(); ++k)
        g[k] += self.grad[k] * mask[k];
    });
  }
  return out;
}

Tensor cross_entropy_logits(const Tensor& logits,
                            const std::vector<int>& targets) {
  const int R = logits.rows(), C = logits.cols();
  if (static_cast<int>(targets.size()) != R)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + shape_str(logits.shape()));
  for (int t : targets)
    if (t < 0 || t >= C)
      throw ShapeError("cross_entropy: target " + std::to_string(t) +
                       " out of range for " + shape_str(logits.shape()));
  const auto& lv = logits.values();
  double total = 0.0;
  for (int i = 0; i < R; ++i) {
    const double* x = lv.data() + static_cast<size_t>(i) * C;
    double m = x[0];
    for (int j = 1; j < C; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (int j = 0; j < C; ++j) s += std::exp(x[j] - m);
    total += m + std::log(s) - x[targets[static_cast<size_t>(i)]];
  }
  Tensor out = Tensor::scalar(total / R);
  if (want_grad({&logits})) {
    attach(out, {logits}, [R, C, targets](TensorNode& self) {
      Tensor& pl = self.parents[0];
      if (!pl.requires_grad()) return;
      const auto& lv = pl.values();
      auto& g = grad_of(pl);
      const double up = self.grad[0] / R;
      for (int i = 0; i < R; ++i) {
        const double* x = lv.data() + static_cast<size_t>(i) * C;
        double* dx = g.data() + static_cast<size_t>(i) * C;
        double m = x[0];
        for (int j = 1; j < C; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (int j = 0; j < C; ++j) s += std::exp(x[j] - m);
        for (int j = 0; j < C; ++j) {
          double p = std::exp(x[j] - m) / s;
          dx[j] += up * (p - (j == targets[static_cast<size_t>(i)] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

}  // namespace convrec
