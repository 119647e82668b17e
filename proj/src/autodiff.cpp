#include "clie/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "clie/error.hpp"

namespace clie::ad {

Shape::Shape(std::initializer_list<std::size_t> dims) {
  if (dims.size() == 0 || dims.size() > 2) {
    throw DimensionError("only rank-1 and rank-2 shapes are supported");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw DimensionError("shape dimensions must be positive");
    dims_[rank_++] = d;
  }
}

std::size_t Shape::numel() const {
  if (rank_ == 0) return 0;
  return rank_ == 1 ? dims_[0] : dims_[0] * dims_[1];
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Array::Array(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw DimensionError("array data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.to_string());
  }
}

Array Array::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Array(Shape::vector(n), std::move(data));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Array(Shape::matrix(rows, cols), std::move(data));
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Neg: return "neg";
    case Op::Concat: return "concat";
    case Op::Stack: return "stack";
    case Op::Slice: return "slice";
    case Op::Sum: return "sum";
    case Op::Embedding: return "embedding";
    case Op::Softmax: return "softmax";
  }
  return "?";
}

Node::Node(Op op, Array value, std::vector<Var> parents, bool requires_grad)
    : op_(op), value_(std::move(value)), parents_(std::move(parents)), requires_grad_(requires_grad) {}

Array Node::grad() const { return has_grad() ? grad_ : Array(value_.shape()); }

Array& Node::mutable_grad() {
  if (!has_grad()) grad_ = Array(value_.shape());
  return grad_;
}

void Node::zero_grad() {
  if (has_grad()) std::fill(grad_.data().begin(), grad_.data().end(), 0.0);
  backward_done_ = false;
}

Array& Node::mutable_value() {
  if (op_ != Op::Leaf) throw ContractError("only leaf values may be modified");
  return value_;
}

namespace {

bool any_requires_grad(const std::vector<Var>& parents) {
  return std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p->requires_grad(); });
}

constexpr double kBelowOne = 1.0 - 0x1p-53;

Var make_node(Op op, Array value, std::vector<Var> parents) {
  const bool rg = any_requires_grad(parents);
  // Parents of nodes outside the differentiable graph are never visited.
  if (!rg) parents.clear();
  return std::make_shared<Node>(op, std::move(value), std::move(parents), rg);
}

void require_same_shape(const char* what, const Var& a, const Var& b) {
  if (!(a->value().shape() == b->value().shape())) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a->value().shape().to_string() +
                         " vs " + b->value().shape().to_string());
  }
}

void require_rank1(const char* what, const Var& x) {
  if (x->value().shape().rank() != 1) {
    throw DimensionError(std::string(what) + ": expected a rank-1 operand, got " +
                         x->value().shape().to_string());
  }
}

}  // namespace

Var variable(Array value) {
  return std::make_shared<Node>(Op::Leaf, std::move(value), std::vector<Var>{}, true);
}

Var constant(Array value) {
  return std::make_shared<Node>(Op::Leaf, std::move(value), std::vector<Var>{}, false);
}

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a->value().shape();
  const Shape& sb = b->value().shape();
  auto mismatch = [&] {
    return DimensionError("matmul: inner dimensions disagree for " + sa.to_string() + " and " +
                          sb.to_string());
  };
  const auto A = a->value().data();
  const auto B = b->value().data();
  if (sa.rank() == 2 && sb.rank() == 2) {
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) throw mismatch();
    Array out(Shape::matrix(m, n));
    auto C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = &B[p * n];
        double* crow = &C[i * n];
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
    return make_node(Op::MatMul, std::move(out), {a, b});
  }
  if (sa.rank() == 2 && sb.rank() == 1) {
    const std::size_t m = sa[0], k = sa[1];
    if (sb[0] != k) throw mismatch();
    Array out(Shape::vector(m));
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = &A[i * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * B[p];
      out[i] = acc;
    }
    return make_node(Op::MatMul, std::move(out), {a, b});
  }
  if (sa.rank() == 1 && sb.rank() == 2) {
    const std::size_t k = sa[0], n = sb[1];
    if (sb[0] != k) throw mismatch();
    Array out(Shape::vector(n));
    auto C = out.data();
    for (std::size_t p = 0; p < k; ++p) {
      const double ap = A[p];
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) C[j] += ap * brow[j];
    }
    return make_node(Op::MatMul, std::move(out), {a, b});
  }
  throw mismatch();
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Array out = a->value();
  const auto B = b->value().data();
  auto C = out.data();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  return make_node(Op::Add, std::move(out), {a, b});
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Array out = a->value();
  const auto B = b->value().data();
  auto C = out.data();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  return make_node(Op::Mul, std::move(out), {a, b});
}

Var apply_unary(Unary fn, const Var& x) {
  Array out = x->value();
  auto y = out.data();
  Op op = Op::Leaf;
  switch (fn) {
    case Unary::Tanh:
      op = Op::Tanh;
      // Rounding would otherwise return exactly +-1 for |v| > ~19.
      for (double& v : y) v = std::clamp(std::tanh(v), -kBelowOne, kBelowOne);
      break;
    case Unary::Sigmoid:
      op = Op::Sigmoid;
      for (double& v : y) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      break;
    case Unary::Exp:
      op = Op::Exp;
      for (double& v : y) v = std::exp(v);
      break;
    case Unary::Log:
      op = Op::Log;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0)) {
          throw DomainError("log: non-positive entry " + std::to_string(y[i]) + " at index " +
                            std::to_string(i));
        }
        y[i] = std::log(y[i]);
      }
      break;
    case Unary::Neg:
      op = Op::Neg;
      for (double& v : y) v = -v;
      break;
  }
  return make_node(op, std::move(out), {x});
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  std::vector<double> data;
  for (const Var& p : parts) {
    require_rank1("concat", p);
    const auto v = p->value().data();
    data.insert(data.end(), v.begin(), v.end());
  }
  return make_node(Op::Concat, Array::vector(std::move(data)), {parts.begin(), parts.end()});
}

Var stack(std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack: no operands");
  const std::size_t n = rows.front()->value().size();
  std::vector<double> data;
  data.reserve(rows.size() * n);
  for (const Var& r : rows) {
    require_rank1("stack", r);
    if (r->value().size() != n) {
      throw DimensionError("stack: row lengths differ (" + std::to_string(n) + " vs " +
                           std::to_string(r->value().size()) + ")");
    }
    const auto v = r->value().data();
    data.insert(data.end(), v.begin(), v.end());
  }
  return make_node(Op::Stack, Array::matrix(rows.size(), n, std::move(data)), {rows.begin(), rows.end()});
}

Var slice(const Var& x, std::size_t begin, std::size_t length) {
  require_rank1("slice", x);
  if (length == 0 || begin + length > x->value().size()) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + length) + ") outside " +
                         x->value().shape().to_string());
  }
  const auto v = x->value().data();
  Var out = make_node(Op::Slice, Array::vector({v.begin() + begin, v.begin() + begin + length}), {x});
  out->aux_ = begin;
  return out;
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x->value().data()) acc += v;
  return make_node(Op::Sum, Array::scalar(acc), {x});
}

Var embedding(const Var& table, std::size_t row) {
  const Shape& s = table->value().shape();
  if (s.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + s.to_string());
  if (row >= s[0]) {
    throw DimensionError("embedding: id " + std::to_string(row) + " out of range for table " +
                         s.to_string());
  }
  const auto v = table->value().data();
  const std::size_t e = s[1];
  Var out = make_node(Op::Embedding, Array::vector({v.begin() + row * e, v.begin() + (row + 1) * e}), {table});
  out->aux_ = row;
  return out;
}

Var softmax_stable(const Var& logits) {
  require_rank1("softmax", logits);
  Array out = logits->value();
  auto y = out.data();
  const double mx = *std::max_element(y.begin(), y.end());
  double total = 0.0;
  for (double& v : y) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : y) v /= total;
  return make_node(Op::Softmax, std::move(out), {logits});
}

void Node::propagate() {
  const auto g = grad_.data();
  const auto y = value_.data();
  switch (op_) {
    case Op::Leaf:
      return;
    case Op::MatMul: {
      Node& a = *parents_[0];
      Node& b = *parents_[1];
      const Shape& sa = a.value_.shape();
      const Shape& sb = b.value_.shape();
      const auto A = a.value_.data();
      const auto B = b.value_.data();
      if (sa.rank() == 2 && sb.rank() == 2) {
        const std::size_t m = sa[0], k = sa[1], n = sb[1];
        if (a.requires_grad_) {
          auto GA = a.mutable_grad().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
              GA[i * k + p] += acc;
            }
        }
        if (b.requires_grad_) {
          auto GB = b.mutable_grad().data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = A[i * k + p];
              for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += aip * g[i * n + j];
            }
        }
      } else if (sa.rank() == 2) {
        const std::size_t m = sa[0], k = sa[1];
        if (a.requires_grad_) {
          auto GA = a.mutable_grad().data();
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            double* row = &GA[i * k];
            for (std::size_t p = 0; p < k; ++p) row[p] += gi * B[p];
          }
        }
        if (b.requires_grad_) {
          auto GB = b.mutable_grad().data();
          for (std::size_t i = 0; i < m; ++i) {
            const double gi = g[i];
            const double* row = &A[i * k];
            for (std::size_t p = 0; p < k; ++p) GB[p] += gi * row[p];
          }
        }
      } else {
        const std::size_t k = sa[0], n = sb[1];
        if (a.requires_grad_) {
          auto GA = a.mutable_grad().data();
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += B[p * n + j] * g[j];
            GA[p] += acc;
          }
        }
        if (b.requires_grad_) {
          auto GB = b.mutable_grad().data();
          for (std::size_t p = 0; p < k; ++p) {
            const double ap = A[p];
            for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += ap * g[j];
          }
        }
      }
      return;
    }
    case Op::Add:
      for (const Var& p : parents_) {
        if (!p->requires_grad_) continue;
        auto G = p->mutable_grad().data();
        for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i];
      }
      return;
    case Op::Mul: {
      Node& a = *parents_[0];
      Node& b = *parents_[1];
      if (a.requires_grad_) {
        auto G = a.mutable_grad().data();
        const auto B = b.value_.data();
        for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i] * B[i];
      }
      if (b.requires_grad_) {
        auto G = b.mutable_grad().data();
        const auto A = a.value_.data();
        for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i] * A[i];
      }
      return;
    }
    case Op::Tanh: {
      auto G = parents_[0]->mutable_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    }
    case Op::Sigmoid: {
      auto G = parents_[0]->mutable_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case Op::Exp: {
      auto G = parents_[0]->mutable_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i] * y[i];
      return;
    }
    case Op::Log: {
      const auto X = parents_[0]->value_.data();
      auto G = parents_[0]->mutable_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) G[i] += g[i] / X[i];
      return;
    }
    case Op::Neg: {
      auto G = parents_[0]->mutable_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) G[i] -= g[i];
      return;
    }
    case Op::Concat:
    case Op::Stack: {
      std::size_t offset = 0;
      for (const Var& p : parents_) {
        const std::size_t n = p->value_.size();
        if (p->requires_grad_) {
          auto G = p->mutable_grad().data();
          for (std::size_t i = 0; i < n; ++i) G[i] += g[offset + i];
        }
        offset += n;
      }
      return;
    }
    case Op::Slice: {
      auto G = parents_[0]->mutable_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) G[aux_ + i] += g[i];
      return;
    }
    case Op::Sum: {
      auto G = parents_[0]->mutable_grad().data();
      for (double& v : G) v += g[0];
      return;
    }
    case Op::Embedding: {
      auto G = parents_[0]->mutable_grad().data();
      const std::size_t e = g.size();
      for (std::size_t i = 0; i < e; ++i) G[aux_ * e + i] += g[i];
      return;
    }
    case Op::Softmax: {
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
      auto G = parents_[0]->mutable_grad().data();
      for (std::size_t i = 0; i < g.size(); ++i) G[i] += y[i] * (g[i] - dot);
      return;
    }
  }
}

void backward(const Var& root) {
  if (root->value().size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + root->value().shape().to_string());
  }
  if (root->backward_done_) {
    throw ContractError("backward: root already differentiated; reset gradients first");
  }
  root->backward_done_ = true;
  if (!root->requires_grad()) return;

  // Iterative post-order DFS; graphs get deep enough to make recursion risky.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents_.size()) {
      Node* p = node->parents_[next++].get();
      if (p->requires_grad_ && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->mutable_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->op_ == Op::Leaf || !n->has_grad()) continue;
    n->propagate();
  }
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double grad_check(const std::function<Var(const Var&)>& f, const Array& x, double eps) {
  Var input = variable(x);
  Var root = f(input);
  if (!root->value().all_finite()) return kInf;
  backward(root);
  const Array analytic = input->grad();
  if (!analytic.all_finite()) return kInf;

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Array plus = x, minus = x;
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = f(constant(plus))->value()[0];
    const double fm = f(constant(minus))->value()[0];
    const double numeric = (fp - fm) / (2.0 * eps);
    if (!std::isfinite(numeric)) return kInf;
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

double grad_check_params(const std::function<Var()>& loss, std::span<const Var> params, double eps) {
  for (const Var& p : params) p->zero_grad();
  Var root = loss();
  if (!root->value().all_finite()) return kInf;
  backward(root);

  double worst = 0.0;
  for (const Var& p : params) {
    const Array analytic = p->grad();
    Array& value = p->mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double fp = loss()->value()[0];
      value[i] = saved - eps;
      const double fm = loss()->value()[0];
      value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) return kInf;
      worst = std::max(worst, relative_error(analytic[i], numeric));
    }
  }
  for (const Var& p : params) p->zero_grad();
  return worst;
}

}  // namespace clie::ad
