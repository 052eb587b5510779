#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace phgr::ad {

// Dense row-major tensor of rank 0 (scalar), 1 (vector) or 2 (matrix).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;

  static Tensor scalar(double x);
  static Tensor vector(std::size_t n, double fill = 0.0);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return shape.empty(); }
  std::size_t size() const { return v.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : (shape.empty() ? 1 : shape[0]); }

  double& at(std::size_t r, std::size_t c) { return v[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * shape[1] + c]; }
};

class Tape;

// Handle to a node on a tape.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& data() const;
};

using BackwardFn = std::function<void(Tape&, int)>;

class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    std::vector<int> parents;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Value leaf(Tensor t, bool requires_grad = true);
  Value constant(Tensor t) { return leaf(std::move(t), false); }

  Value make(Tensor value, std::vector<int> parents, BackwardFn backward);

  // Reverse sweep from a scalar loss. Gradients for all nodes on a path from
  // requires_grad leaves to the loss become available via grad().
  void backward(Value loss);

  const Tensor& val(int id) const { return nodes_[id].value; }
  const Tensor& grad(Value v) const;
  Tensor& grad_buffer(int id);  // zero-allocated on first access
  bool has_grad(int id) const { return !nodes_[id].grad.v.empty(); }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// ---- primitives ------------------------------------------------------------

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
Value add_broadcast(Value a, Value s);  // s scalar, added to every entry
Value add_const(Value a, double k);     // constant shift, gradient passes through
Value scale(Value a, double k);
Value neg(Value a);
Value square(Value a);
Value sqrt_clamped(Value a);   // sqrt(max(a, 0))
Value tanh_op(Value a);
Value atanh_clamped(Value a);  // argument clamped to |t| <= 1 - 1e-12
Value sigmoid(Value a);
Value log_clamped(Value a);    // log(max(a, 1e-12))
Value relu(Value a);
Value clamp(Value a, double lo, double hi);

Value sum(Value a);
Value mean(Value a);
Value row_sum(Value a);              // matrix -> vector of row sums
Value l2_norm(Value a);              // vector/matrix -> scalar Frobenius norm
Value row_norm(Value a);             // matrix -> vector of row L2 norms
Value dot(Value a, Value b);         // sum(mul(a, b))

Value matmul(Value a, Value b);      // (r x k) * (k x c)
Value matvec(Value a, Value x);      // (r x c) * vector c -> vector r
Value vecmat(Value x, Value a);      // vector r * (r x c) -> vector c
Value transpose(Value a);

Value concat(Value a, Value b);      // along last axis; vectors or matrices

Value softmax_vec(Value x);
Value softmax_rows(Value a);
// Softmax within contiguous groups of equal segment id; ids must be sorted.
Value segment_softmax(Value logits, std::vector<int> segments);
// Sums rows of x into num_segments buckets keyed by segment id.
Value segment_sum_rows(Value x, std::vector<int> segments, std::size_t num_segments);

Value gather_rows(Value a, std::vector<std::size_t> idx);
Value row(Value a, std::size_t i);   // single row as a vector
Value repeat_row(Value x, std::size_t k);
Value as_row_matrix(Value x);        // vector n -> 1 x n matrix
Value rowwise_scale(Value a, Value w);  // row i of a scaled by w[i]
Value mean_rows(Value a);            // column means, matrix -> vector

// Radial guard onto a ball of the given max norm (per row for matrices,
// whole vector for rank 1). Exact gradient of the rescale branch.
Value project_rows(Value a, double max_norm);

// ---- gradient checking -----------------------------------------------------

struct GradCheckResult {
  bool pass = false;
  double max_rel_err = 0.0;
};

// Compares the reverse-mode gradient of f against central finite differences.
// Relative-error denominator is floored at 1e-8. Non-finite values anywhere
// report failure instead of throwing.
GradCheckResult grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x,
                           double step = 1e-6, double tol = 1e-5);

}  // namespace phgr::ad
