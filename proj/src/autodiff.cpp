#include "phgr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phgr/errors.hpp"

namespace phgr::ad {

namespace {

constexpr double kAtanhClamp = 1.0 - 1e-12;
constexpr double kLogFloor = 1e-12;
constexpr double kNormFloor = 1e-15;

void check_finite(const Tensor& t, const char* what) {
  for (double x : t.v) {
    if (!std::isfinite(x)) throw DomainError(std::string("non-finite value out of ") + what);
  }
}

void require(bool ok, const char* msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

Tensor Tensor::scalar(double x) {
  Tensor t;
  t.v = {x};
  return t;
}

Tensor Tensor::vector(std::size_t n, double fill) {
  Tensor t;
  t.shape = {n};
  t.v.assign(n, fill);
  return t;
}

Tensor Tensor::vector(std::vector<double> data) {
  Tensor t;
  t.shape = {data.size()};
  t.v = std::move(data);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  Tensor t;
  t.shape = {rows, cols};
  t.v.assign(rows * cols, fill);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  Tensor t;
  t.shape = {rows, cols};
  if (data.size() != rows * cols) throw ShapeError("Tensor::matrix: data size mismatch");
  t.v = std::move(data);
  return t;
}

const Tensor& Value::data() const { return tape->val(id); }

Value Tape::leaf(Tensor t, bool requires_grad) {
  Node n;
  n.value = std::move(t);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::make(Tensor value, std::vector<int> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (int p : n.parents) {
    if (nodes_[p].needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.v.empty()) {
    n.grad.shape = n.value.shape;
    n.grad.v.assign(n.value.v.size(), 0.0);
  }
  return n.grad;
}

const Tensor& Tape::grad(Value v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.v.empty()) {
    static thread_local Tensor zero;
    zero.shape = n.value.shape;
    zero.v.assign(n.value.v.size(), 0.0);
    return zero;
  }
  return n.grad;
}

void Tape::backward(Value loss) {
  if (loss.tape != this) throw ContractError("backward: loss from another tape");
  if (!nodes_[loss.id].value.is_scalar() || nodes_[loss.id].value.size() != 1)
    throw ContractError("backward: loss must be scalar");
  for (Node& n : nodes_) n.grad = Tensor{};
  grad_buffer(loss.id).v[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.v.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

// ---- helpers for op construction -------------------------------------------

namespace {

Tape* same_tape(Value a, Value b) {
  if (a.tape != b.tape) throw ContractError("operands from different tapes");
  return a.tape;
}

}  // namespace

#define PHGR_SAME_SHAPE(a, b, what) \
  require(a.data().shape == b.data().shape, what ": shape mismatch")

Value add(Value a, Value b) {
  Tape* t = same_tape(a, b);
  PHGR_SAME_SHAPE(a, b, "add");
  Tensor out = a.data();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.data().v[i];
  check_finite(out, "add");
  int pa = a.id, pb = b.id;
  return t->make(std::move(out), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (tp.needs_grad(pb)) {
      Tensor& gb = tp.grad_buffer(pb);
      for (std::size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i];
    }
  });
}

Value sub(Value a, Value b) {
  Tape* t = same_tape(a, b);
  PHGR_SAME_SHAPE(a, b, "sub");
  Tensor out = a.data();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.data().v[i];
  check_finite(out, "sub");
  int pa = a.id, pb = b.id;
  return t->make(std::move(out), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (tp.needs_grad(pb)) {
      Tensor& gb = tp.grad_buffer(pb);
      for (std::size_t i = 0; i < g.v.size(); ++i) gb.v[i] -= g.v[i];
    }
  });
}

Value mul(Value a, Value b) {
  Tape* t = same_tape(a, b);
  PHGR_SAME_SHAPE(a, b, "mul");
  Tensor out = a.data();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.data().v[i];
  check_finite(out, "mul");
  int pa = a.id, pb = b.id;
  return t->make(std::move(out), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    const Tensor& bv = tp.val(pb);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * bv.v[i];
    }
    if (tp.needs_grad(pb)) {
      Tensor& gb = tp.grad_buffer(pb);
      for (std::size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i] * av.v[i];
    }
  });
}

Value div(Value a, Value b) {
  Tape* t = same_tape(a, b);
  PHGR_SAME_SHAPE(a, b, "div");
  Tensor out = a.data();
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] /= b.data().v[i];
  check_finite(out, "div");
  int pa = a.id, pb = b.id;
  return t->make(std::move(out), {pa, pb}, [pa, pb](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& ov = tp.val(self);
    const Tensor& bv = tp.val(pb);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] / bv.v[i];
    }
    if (tp.needs_grad(pb)) {
      Tensor& gb = tp.grad_buffer(pb);
      for (std::size_t i = 0; i < g.v.size(); ++i) gb.v[i] -= g.v[i] * ov.v[i] / bv.v[i];
    }
  });
}

Value add_broadcast(Value a, Value s) {
  Tape* t = same_tape(a, s);
  require(s.data().size() == 1, "add_broadcast: second operand must be scalar");
  Tensor out = a.data();
  const double sv = s.data().v[0];
  for (double& x : out.v) x += sv;
  check_finite(out, "add_broadcast");
  int pa = a.id, ps = s.id;
  return t->make(std::move(out), {pa, ps}, [pa, ps](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (tp.needs_grad(ps)) {
      double acc = 0;
      for (double x : g.v) acc += x;
      tp.grad_buffer(ps).v[0] += acc;
    }
  });
}

Value add_const(Value a, double k) {
  Tensor out = a.data();
  for (double& x : out.v) x += k;
  check_finite(out, "add_const");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
  });
}

Value as_row_matrix(Value x) {
  require(x.data().rank() == 1, "as_row_matrix: vector expected");
  const std::size_t c = x.data().shape[0];
  Tensor out = Tensor::matrix(1, c, x.data().v);
  int px = x.id;
  return x.tape->make(std::move(out), {px}, [px](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& gx = tp.grad_buffer(px);
    for (std::size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
  });
}

Value scale(Value a, double k) {
  Tensor out = a.data();
  for (double& x : out.v) x *= k;
  check_finite(out, "scale");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, k](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += k * g.v[i];
  });
}

Value neg(Value a) { return scale(a, -1.0); }

Value square(Value a) {
  Tensor out = a.data();
  for (double& x : out.v) x *= x;
  check_finite(out, "square");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += 2.0 * av.v[i] * g.v[i];
  });
}

Value sqrt_clamped(Value a) {
  Tensor out = a.data();
  for (double& x : out.v) x = std::sqrt(std::max(x, 0.0));
  check_finite(out, "sqrt_clamped");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    const Tensor& ov = tp.val(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) {
      if (av.v[i] <= 0.0) continue;  // clamped branch
      ga.v[i] += 0.5 * g.v[i] / std::max(ov.v[i], kNormFloor);
    }
  });
}

Value tanh_op(Value a) {
  Tensor out = a.data();
  for (double& x : out.v) x = std::tanh(x);
  check_finite(out, "tanh");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& ov = tp.val(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * (1.0 - ov.v[i] * ov.v[i]);
  });
}

Value atanh_clamped(Value a) {
  Tensor out = a.data();
  for (double& x : out.v) x = std::atanh(std::clamp(x, -kAtanhClamp, kAtanhClamp));
  check_finite(out, "atanh_clamped");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) {
      const double x = av.v[i];
      if (x <= -kAtanhClamp || x >= kAtanhClamp) continue;
      ga.v[i] += g.v[i] / (1.0 - x * x);
    }
  });
}

Value sigmoid(Value a) {
  Tensor out = a.data();
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  check_finite(out, "sigmoid");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& ov = tp.val(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * ov.v[i] * (1.0 - ov.v[i]);
  });
}

Value log_clamped(Value a) {
  Tensor out = a.data();
  for (double& x : out.v) x = std::log(std::max(x, kLogFloor));
  check_finite(out, "log_clamped");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i) {
      if (av.v[i] <= kLogFloor) continue;
      ga.v[i] += g.v[i] / av.v[i];
    }
  });
}

Value relu(Value a) {
  Tensor out = a.data();
  for (double& x : out.v) x = std::max(x, 0.0);
  check_finite(out, "relu");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (av.v[i] > 0.0) ga.v[i] += g.v[i];
  });
}

Value clamp(Value a, double lo, double hi) {
  Tensor out = a.data();
  for (double& x : out.v) x = std::clamp(x, lo, hi);
  check_finite(out, "clamp");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, lo, hi](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (av.v[i] > lo && av.v[i] < hi) ga.v[i] += g.v[i];
  });
}

Value sum(Value a) {
  double s = 0;
  for (double x : a.data().v) s += x;
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const double g = tp.grad_buffer(self).v[0];
    Tensor& ga = tp.grad_buffer(pa);
    for (double& x : ga.v) x += g;
  });
}

Value mean(Value a) {
  const double n = static_cast<double>(a.data().size());
  double s = 0;
  for (double x : a.data().v) s += x;
  Tensor out = Tensor::scalar(s / n);
  check_finite(out, "mean");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, n](Tape& tp, int self) {
    const double g = tp.grad_buffer(self).v[0] / n;
    Tensor& ga = tp.grad_buffer(pa);
    for (double& x : ga.v) x += g;
  });
}

Value row_sum(Value a) {
  require(a.data().rank() == 2, "row_sum: matrix expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  Tensor out = Tensor::vector(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) s += a.data().v[i * c + j];
    out.v[i] = s;
  }
  check_finite(out, "row_sum");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[i];
  });
}

Value l2_norm(Value a) {
  double s = 0;
  for (double x : a.data().v) s += x * x;
  Tensor out = Tensor::scalar(std::sqrt(s));
  check_finite(out, "l2_norm");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa](Tape& tp, int self) {
    const double g = tp.grad_buffer(self).v[0];
    const double n = std::max(tp.val(self).v[0], kNormFloor);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < av.v.size(); ++i) ga.v[i] += g * av.v[i] / n;
  });
}

Value row_norm(Value a) {
  require(a.data().rank() == 2, "row_norm: matrix expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  Tensor out = Tensor::vector(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double x = a.data().v[i * c + j];
      s += x * x;
    }
    out.v[i] = std::sqrt(s);
  }
  check_finite(out, "row_norm");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& ov = tp.val(self);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < r; ++i) {
      const double n = std::max(ov.v[i], kNormFloor);
      for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[i] * av.v[i * c + j] / n;
    }
  });
}

Value dot(Value a, Value b) { return sum(mul(a, b)); }

Value matmul(Value a, Value b) {
  Tape* t = same_tape(a, b);
  require(a.data().rank() == 2 && b.data().rank() == 2, "matmul: matrices expected");
  const std::size_t r = a.data().shape[0], k = a.data().shape[1], c = b.data().shape[1];
  require(b.data().shape[0] == k, "matmul: inner dimension mismatch");
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double av = a.data().v[i * k + j];
      if (av == 0.0) continue;
      for (std::size_t l = 0; l < c; ++l) out.v[i * c + l] += av * b.data().v[j * c + l];
    }
  check_finite(out, "matmul");
  int pa = a.id, pb = b.id;
  return t->make(std::move(out), {pa, pb}, [pa, pb, r, k, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    const Tensor& bv = tp.val(pb);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);  // g * B^T
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          double s = 0;
          for (std::size_t l = 0; l < c; ++l) s += g.v[i * c + l] * bv.v[j * c + l];
          ga.v[i * k + j] += s;
        }
    }
    if (tp.needs_grad(pb)) {
      Tensor& gb = tp.grad_buffer(pb);  // A^T * g
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t l = 0; l < c; ++l) {
          double s = 0;
          for (std::size_t i = 0; i < r; ++i) s += av.v[i * k + j] * g.v[i * c + l];
          gb.v[j * c + l] += s;
        }
    }
  });
}

Value matvec(Value a, Value x) {
  Tape* t = same_tape(a, x);
  require(a.data().rank() == 2 && x.data().rank() == 1, "matvec: matrix and vector expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  require(x.data().shape[0] == c, "matvec: dimension mismatch");
  Tensor out = Tensor::vector(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) s += a.data().v[i * c + j] * x.data().v[j];
    out.v[i] = s;
  }
  check_finite(out, "matvec");
  int pa = a.id, px = x.id;
  return t->make(std::move(out), {pa, px}, [pa, px, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    const Tensor& xv = tp.val(px);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[i] * xv.v[j];
    }
    if (tp.needs_grad(px)) {
      Tensor& gx = tp.grad_buffer(px);
      for (std::size_t j = 0; j < c; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < r; ++i) s += av.v[i * c + j] * g.v[i];
        gx.v[j] += s;
      }
    }
  });
}

Value vecmat(Value x, Value a) {
  Tape* t = same_tape(x, a);
  require(a.data().rank() == 2 && x.data().rank() == 1, "vecmat: vector and matrix expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  require(x.data().shape[0] == r, "vecmat: dimension mismatch");
  Tensor out = Tensor::vector(c);
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < r; ++i) s += x.data().v[i] * a.data().v[i * c + j];
    out.v[j] = s;
  }
  check_finite(out, "vecmat");
  int pa = a.id, px = x.id;
  return t->make(std::move(out), {px, pa}, [pa, px, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    const Tensor& xv = tp.val(px);
    if (tp.needs_grad(px)) {
      Tensor& gx = tp.grad_buffer(px);
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < c; ++j) s += av.v[i * c + j] * g.v[j];
        gx.v[i] += s;
      }
    }
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += xv.v[i] * g.v[j];
    }
  });
}

Value transpose(Value a) {
  require(a.data().rank() == 2, "transpose: matrix expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.v[j * r + i] = a.data().v[i * c + j];
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[j * r + i];
  });
}

Value concat(Value a, Value b) {
  Tape* t = same_tape(a, b);
  const Tensor& ta = a.data();
  const Tensor& tb = b.data();
  require(ta.rank() == tb.rank() && ta.rank() >= 1, "concat: equal ranks expected");
  Tensor out;
  if (ta.rank() == 1) {
    out = Tensor::vector(ta.shape[0] + tb.shape[0]);
    std::copy(ta.v.begin(), ta.v.end(), out.v.begin());
    std::copy(tb.v.begin(), tb.v.end(), out.v.begin() + ta.v.size());
  } else {
    require(ta.shape[0] == tb.shape[0], "concat: row counts differ");
    const std::size_t r = ta.shape[0], ca = ta.shape[1], cb = tb.shape[1];
    out = Tensor::matrix(r, ca + cb);
    for (std::size_t i = 0; i < r; ++i) {
      std::copy(ta.v.begin() + i * ca, ta.v.begin() + (i + 1) * ca,
                out.v.begin() + i * (ca + cb));
      std::copy(tb.v.begin() + i * cb, tb.v.begin() + (i + 1) * cb,
                out.v.begin() + i * (ca + cb) + ca);
    }
  }
  int pa = a.id, pb = b.id;
  const auto sa = ta.shape, sb = tb.shape;
  return t->make(std::move(out), {pa, pb}, [pa, pb, sa, sb](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    if (sa.size() == 1) {
      if (tp.needs_grad(pa)) {
        Tensor& ga = tp.grad_buffer(pa);
        for (std::size_t i = 0; i < sa[0]; ++i) ga.v[i] += g.v[i];
      }
      if (tp.needs_grad(pb)) {
        Tensor& gb = tp.grad_buffer(pb);
        for (std::size_t i = 0; i < sb[0]; ++i) gb.v[i] += g.v[sa[0] + i];
      }
    } else {
      const std::size_t r = sa[0], ca = sa[1], cb = sb[1];
      if (tp.needs_grad(pa)) {
        Tensor& ga = tp.grad_buffer(pa);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < ca; ++j) ga.v[i * ca + j] += g.v[i * (ca + cb) + j];
      }
      if (tp.needs_grad(pb)) {
        Tensor& gb = tp.grad_buffer(pb);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < cb; ++j) gb.v[i * cb + j] += g.v[i * (ca + cb) + ca + j];
      }
    }
  });
}

namespace {

void softmax_span(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double z = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
}

void softmax_backward_span(const double* out, const double* g, double* ga, std::size_t n) {
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += g[i] * out[i];
  for (std::size_t i = 0; i < n; ++i) ga[i] += out[i] * (g[i] - s);
}

}  // namespace

Value softmax_vec(Value x) {
  require(x.data().rank() == 1, "softmax_vec: vector expected");
  const std::size_t n = x.data().shape[0];
  Tensor out = Tensor::vector(n);
  softmax_span(x.data().v.data(), out.v.data(), n);
  check_finite(out, "softmax_vec");
  int px = x.id;
  return x.tape->make(std::move(out), {px}, [px, n](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& ov = tp.val(self);
    Tensor& gx = tp.grad_buffer(px);
    softmax_backward_span(ov.v.data(), g.v.data(), gx.v.data(), n);
  });
}

Value softmax_rows(Value a) {
  require(a.data().rank() == 2, "softmax_rows: matrix expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  Tensor out = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i)
    softmax_span(a.data().v.data() + i * c, out.v.data() + i * c, c);
  check_finite(out, "softmax_rows");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& ov = tp.val(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < r; ++i)
      softmax_backward_span(ov.v.data() + i * c, g.v.data() + i * c, ga.v.data() + i * c, c);
  });
}

Value segment_softmax(Value logits, std::vector<int> segments) {
  require(logits.data().rank() == 1, "segment_softmax: vector expected");
  const std::size_t n = logits.data().shape[0];
  require(segments.size() == n, "segment_softmax: segment count mismatch");
  for (std::size_t i = 1; i < n; ++i)
    require(segments[i] >= segments[i - 1], "segment_softmax: segments must be sorted");
  Tensor out = Tensor::vector(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end < n && segments[end] == segments[start]) ++end;
    softmax_span(logits.data().v.data() + start, out.v.data() + start, end - start);
    start = end;
  }
  check_finite(out, "segment_softmax");
  int pl = logits.id;
  return logits.tape->make(std::move(out), {pl},
                           [pl, n, segments = std::move(segments)](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& ov = tp.val(self);
    Tensor& gl = tp.grad_buffer(pl);
    std::size_t start = 0;
    while (start < n) {
      std::size_t end = start;
      while (end < n && segments[end] == segments[start]) ++end;
      softmax_backward_span(ov.v.data() + start, g.v.data() + start, gl.v.data() + start,
                            end - start);
      start = end;
    }
  });
}

Value segment_sum_rows(Value x, std::vector<int> segments, std::size_t num_segments) {
  require(x.data().rank() == 2, "segment_sum_rows: matrix expected");
  const std::size_t e = x.data().shape[0], c = x.data().shape[1];
  require(segments.size() == e, "segment_sum_rows: segment count mismatch");
  Tensor out = Tensor::matrix(num_segments, c);
  for (std::size_t i = 0; i < e; ++i) {
    const int s = segments[i];
    require(s >= 0 && static_cast<std::size_t>(s) < num_segments,
            "segment_sum_rows: segment id out of range");
    for (std::size_t j = 0; j < c; ++j) out.v[s * c + j] += x.data().v[i * c + j];
  }
  check_finite(out, "segment_sum_rows");
  int px = x.id;
  return x.tape->make(std::move(out), {px},
                      [px, e, c, segments = std::move(segments)](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& gx = tp.grad_buffer(px);
    for (std::size_t i = 0; i < e; ++i) {
      const int s = segments[i];
      for (std::size_t j = 0; j < c; ++j) gx.v[i * c + j] += g.v[s * c + j];
    }
  });
}

Value gather_rows(Value a, std::vector<std::size_t> idx) {
  require(a.data().rank() == 2, "gather_rows: matrix expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  Tensor out = Tensor::matrix(idx.size(), c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < r, "gather_rows: index out of range");
    std::copy(a.data().v.begin() + idx[i] * c, a.data().v.begin() + (idx[i] + 1) * c,
              out.v.begin() + i * c);
  }
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, c, idx = std::move(idx)](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) ga.v[idx[i] * c + j] += g.v[i * c + j];
  });
}

Value row(Value a, std::size_t i) {
  require(a.data().rank() == 2, "row: matrix expected");
  const std::size_t c = a.data().shape[1];
  require(i < a.data().shape[0], "row: index out of range");
  Tensor out = Tensor::vector(c);
  std::copy(a.data().v.begin() + i * c, a.data().v.begin() + (i + 1) * c, out.v.begin());
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, i, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[j];
  });
}

Value repeat_row(Value x, std::size_t k) {
  require(x.data().rank() == 1, "repeat_row: vector expected");
  const std::size_t c = x.data().shape[0];
  Tensor out = Tensor::matrix(k, c);
  for (std::size_t i = 0; i < k; ++i)
    std::copy(x.data().v.begin(), x.data().v.end(), out.v.begin() + i * c);
  int px = x.id;
  return x.tape->make(std::move(out), {px}, [px, k, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& gx = tp.grad_buffer(px);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < c; ++j) gx.v[j] += g.v[i * c + j];
  });
}

Value rowwise_scale(Value a, Value w) {
  Tape* t = same_tape(a, w);
  require(a.data().rank() == 2 && w.data().rank() == 1, "rowwise_scale: matrix and vector expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  require(w.data().shape[0] == r, "rowwise_scale: row count mismatch");
  Tensor out = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.v[i * c + j] *= w.data().v[i];
  check_finite(out, "rowwise_scale");
  int pa = a.id, pw = w.id;
  return t->make(std::move(out), {pa, pw}, [pa, pw, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    const Tensor& wv = tp.val(pw);
    if (tp.needs_grad(pa)) {
      Tensor& ga = tp.grad_buffer(pa);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[i * c + j] * wv.v[i];
    }
    if (tp.needs_grad(pw)) {
      Tensor& gw = tp.grad_buffer(pw);
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < c; ++j) s += g.v[i * c + j] * av.v[i * c + j];
        gw.v[i] += s;
      }
    }
  });
}

Value mean_rows(Value a) {
  require(a.data().rank() == 2, "mean_rows: matrix expected");
  const std::size_t r = a.data().shape[0], c = a.data().shape[1];
  Tensor out = Tensor::vector(c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.v[j] += a.data().v[i * c + j];
  for (double& x : out.v) x /= static_cast<double>(r);
  check_finite(out, "mean_rows");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa}, [pa, r, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[j] / static_cast<double>(r);
  });
}

Value project_rows(Value a, double max_norm) {
  const Tensor& ta = a.data();
  require(ta.rank() >= 1, "project_rows: vector or matrix expected");
  const std::size_t r = ta.rank() == 2 ? ta.shape[0] : 1;
  const std::size_t c = ta.rank() == 2 ? ta.shape[1] : ta.shape[0];
  Tensor out = ta;
  std::vector<char> scaled(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    double n2 = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double x = ta.v[i * c + j];
      n2 += x * x;
    }
    const double n = std::sqrt(n2);
    if (n > max_norm) {
      scaled[i] = 1;
      const double s = max_norm / n;
      for (std::size_t j = 0; j < c; ++j) out.v[i * c + j] *= s;
    }
  }
  check_finite(out, "project_rows");
  int pa = a.id;
  return a.tape->make(std::move(out), {pa},
                      [pa, r, c, max_norm, scaled = std::move(scaled)](Tape& tp, int self) {
    const Tensor& g = tp.grad_buffer(self);
    const Tensor& av = tp.val(pa);
    Tensor& ga = tp.grad_buffer(pa);
    for (std::size_t i = 0; i < r; ++i) {
      if (!scaled[i]) {
        for (std::size_t j = 0; j < c; ++j) ga.v[i * c + j] += g.v[i * c + j];
        continue;
      }
      // y = s * x with s = R/||x||: dy/dx = s (I - xhat xhat^T)
      double n2 = 0, gdotx = 0;
      for (std::size_t j = 0; j < c; ++j) {
        n2 += av.v[i * c + j] * av.v[i * c + j];
        gdotx += g.v[i * c + j] * av.v[i * c + j];
      }
      const double n = std::max(std::sqrt(n2), kNormFloor);
      const double s = max_norm / n;
      for (std::size_t j = 0; j < c; ++j)
        ga.v[i * c + j] += s * (g.v[i * c + j] - gdotx * av.v[i * c + j] / n2);
    }
  });
}

// ---- gradient check --------------------------------------------------------

GradCheckResult grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x,
                           double step, double tol) {
  GradCheckResult res;
  Tensor analytic;
  try {
    Tape tape;
    Value leaf = tape.leaf(x, true);
    Value loss = f(tape, leaf);
    if (!loss.data().is_scalar()) throw ContractError("grad_check: f must return a scalar");
    tape.backward(loss);
    analytic = tape.grad(leaf);
  } catch (const Error&) {
    res.pass = false;
    res.max_rel_err = std::numeric_limits<double>::infinity();
    return res;
  }

  auto eval = [&](const Tensor& at) -> double {
    Tape tape;
    Value leaf = tape.leaf(at, false);
    return f(tape, leaf).data().v[0];
  };

  double max_rel = 0;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    Tensor plus = x, minus = x;
    plus.v[i] += step;
    minus.v[i] -= step;
    double fd;
    try {
      fd = (eval(plus) - eval(minus)) / (2.0 * step);
    } catch (const Error&) {
      res.pass = false;
      res.max_rel_err = std::numeric_limits<double>::infinity();
      return res;
    }
    if (!std::isfinite(fd) || !std::isfinite(analytic.v[i])) {
      res.pass = false;
      res.max_rel_err = std::numeric_limits<double>::infinity();
      return res;
    }
    const double denom = std::max({std::abs(fd), std::abs(analytic.v[i]), 1e-8});
    max_rel = std::max(max_rel, std::abs(fd - analytic.v[i]) / denom);
  }
  res.max_rel_err = max_rel;
  res.pass = max_rel <= tol;
  return res;
}

}  // namespace phgr::ad
