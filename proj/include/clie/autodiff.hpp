#pragma once

// Minimal reverse-mode automatic differentiation over dense rank-1 and rank-2
// arrays of doubles. Graphs are built eagerly: every operation computes its
// value immediately and remembers its parents so that backward() can replay
// the chain rule in reverse topological order.

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace clie::ad {

class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);

  static Shape vector(std::size_t n) { return Shape{n}; }
  static Shape matrix(std::size_t rows, std::size_t cols) { return Shape{rows, cols}; }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t numel() const;
  std::string to_string() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && a.dims_ == b.dims_;
  }

 private:
  std::array<std::size_t, 2> dims_{0, 0};
  std::size_t rank_ = 0;
};

// Row-major dense storage.
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  Array(Shape shape, std::vector<double> data);

  static Array vector(std::vector<double> data);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Array scalar(double v) { return vector({v}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool all_finite() const;

  friend bool operator==(const Array& a, const Array& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class Op {
  Leaf,
  MatMul,
  Add,
  Mul,
  Tanh,
  Sigmoid,
  Exp,
  Log,
  Neg,
  Concat,
  Stack,
  Slice,
  Sum,
  Embedding,
  Softmax,
};

const char* op_name(Op op);

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Node(Op op, Array value, std::vector<Var> parents, bool requires_grad);

  Op op() const { return op_; }
  const Array& value() const { return value_; }
  const std::vector<Var>& parents() const { return parents_; }
  bool requires_grad() const { return requires_grad_; }

  bool has_grad() const { return grad_.size() != 0; }
  // Zero array of the value's shape when nothing has been accumulated yet.
  Array grad() const;
  // Lazily allocates a zeroed accumulator.
  Array& mutable_grad();
  void zero_grad();

  // Leaves only: parameters are updated in place by optimizers and grad checks.
  Array& mutable_value();

 private:
  friend void backward(const Var& root);
  friend Var slice(const Var&, std::size_t, std::size_t);
  friend Var embedding(const Var&, std::size_t);
  void propagate();

  Op op_;
  Array value_;
  Array grad_;
  std::vector<Var> parents_;
  bool requires_grad_;
  bool backward_done_ = false;
  std::size_t aux_ = 0;  // slice offset or embedding row
};

// Leaf that receives gradients.
Var variable(Array value);
// Leaf excluded from differentiation.
Var constant(Array value);

// (m x k)(k x n) -> (m x n); (m x k)(k) -> (m); (k)(k x n) -> (n).
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

enum class Unary { Tanh, Sigmoid, Exp, Log, Neg };
Var apply_unary(Unary fn, const Var& x);
inline Var tanh(const Var& x) { return apply_unary(Unary::Tanh, x); }
inline Var sigmoid(const Var& x) { return apply_unary(Unary::Sigmoid, x); }
inline Var exp(const Var& x) { return apply_unary(Unary::Exp, x); }
inline Var log(const Var& x) { return apply_unary(Unary::Log, x); }
inline Var neg(const Var& x) { return apply_unary(Unary::Neg, x); }

// Concatenates rank-1 nodes end to end.
Var concat(std::span<const Var> parts);
// Stacks equal-length rank-1 nodes as the rows of a matrix.
Var stack(std::span<const Var> rows);
// Contiguous range [begin, begin + length) of a rank-1 node.
Var slice(const Var& x, std::size_t begin, std::size_t length);
// Sum of all entries, as a length-1 vector.
Var sum(const Var& x);
// Row `row` of a (V x E) table, as a rank-1 node of length E.
Var embedding(const Var& table, std::size_t row);
// exp(x - max x) / sum, over a rank-1 node.
Var softmax_stable(const Var& logits);

// Accumulates d root / d node into every reachable node that requires a
// gradient. The root must hold a single value; each root may be
// differentiated once.
void backward(const Var& root);

// Max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// with central differences of half-width eps. Returns +infinity when any
// evaluation of f (or its gradient) is non-finite.
double grad_check(const std::function<Var(const Var&)>& f, const Array& x, double eps = 1e-5);

// Same check over the current values of a set of leaf variables that `loss`
// closes over. Every leaf is perturbed in place and restored afterwards.
double grad_check_params(const std::function<Var()>& loss, std::span<const Var> params,
                         double eps = 1e-5);

}  // namespace clie::ad
