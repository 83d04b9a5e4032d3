#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "tevo/core/rng.hpp"

namespace tevo {

using Shape = std::vector<std::int64_t>;

namespace detail {

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t e : s) n *= e;
  return n;
}

inline Shape row_major_strides(const Shape& s) {
  Shape st(s.size(), 1);
  for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] =
        st[static_cast<std::size_t>(i + 1)] * s[static_cast<std::size_t>(i + 1)];
  }
  return st;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// Numpy-style broadcast of two shapes; throws on incompatibility.
inline Shape broadcast_shapes(const Shape& a, const Shape& b,
                              const char* who) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t ea =
        i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t eb =
        i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw std::invalid_argument(std::string(who) + ": shapes " +
                                  shape_str(a) + " and " + shape_str(b) +
                                  " are not broadcastable");
    }
    out[r - 1 - i] = std::max(ea, eb);
  }
  return out;
}

// Strides for indexing a tensor of shape `s` with the index space of the
// broadcast shape `full` (broadcast axes get stride 0).
inline Shape broadcast_strides(const Shape& s, const Shape& full) {
  const Shape st = row_major_strides(s);
  Shape out(full.size(), 0);
  for (std::size_t i = 0; i < full.size(); ++i) {
    const std::size_t ri = full.size() - 1 - i;
    if (i < s.size()) {
      const std::size_t si = s.size() - 1 - i;
      out[ri] = (s[si] == 1 && full[ri] != 1) ? 0 : st[si];
    }
  }
  return out;
}

}  // namespace detail

// Opt-in debug check: when enabled every primitive validates that its
// output is finite and throws otherwise.
inline bool& finite_checks() {
  static bool on = false;
  return on;
}
inline void set_finite_checks(bool on) { finite_checks() = on; }

inline std::uint64_t next_op_seq() {
  static std::atomic<std::uint64_t> seq{0};
  return ++seq;
}

template <typename S>
class Tensor;

// One recorded primitive: the inputs it consumed and a closure that pulls
// the output gradient back into them. Nodes carry a monotone sequence
// stamp; replaying in descending stamp order visits the recorded ops in
// exact reverse execution order.
template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> values;
  std::vector<S> grad;  // allocated on first write during backward
  bool requires_grad = false;
  bool backward_done = false;
  std::uint64_t seq = 0;
  std::vector<Tensor<S>> parents;
  std::function<void(TensorNode<S>&)> backprop;

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), S(0));
  }

  void accumulate(const std::vector<S>& g) {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
};

template <typename S>
class Tensor {
 public:
  Tensor() : n_(nullptr) {}

  static Tensor zeros(Shape shape) { return filled(std::move(shape), S(0)); }
  static Tensor ones(Shape shape) { return filled(std::move(shape), S(1)); }

  static Tensor filled(Shape shape, S v) {
    auto n = std::make_shared<TensorNode<S>>();
    const std::int64_t sz = detail::shape_size(shape);
    if (sz < 0) throw std::invalid_argument("tensor: negative extent");
    n->shape = std::move(shape);
    n->values.assign(static_cast<std::size_t>(sz), v);
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<S> values) {
    const std::int64_t sz = detail::shape_size(shape);
    if (sz != static_cast<std::int64_t>(values.size())) {
      throw std::invalid_argument(
          "tensor: value count " + std::to_string(values.size()) +
          " does not match shape " + detail::shape_str(shape));
    }
    auto n = std::make_shared<TensorNode<S>>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    return Tensor(std::move(n));
  }

  static Tensor scalar(S v) { return from({}, {v}); }

  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t = zeros(std::move(shape));
    for (S& v : t.node()->values) v = static_cast<S>(rng.next_uniform(lo, hi));
    return t;
  }

  static Tensor gaussian(Shape shape, Rng& rng, double stddev) {
    Tensor t = zeros(std::move(shape));
    for (S& v : t.node()->values) v = static_cast<S>(rng.next_gaussian() * stddev);
    return t;
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(n_->shape.size()); }
  std::int64_t size() const { return n_->size(); }
  std::int64_t extent(std::int64_t axis) const {
    return n_->shape[static_cast<std::size_t>(axis)];
  }

  const std::vector<S>& values() const { return n_->values; }
  std::vector<S>& mutable_values() { return n_->values; }

  S item() const {
    if (size() != 1) {
      throw std::invalid_argument("item: tensor of size " +
                                  std::to_string(size()) + " is not a scalar");
    }
    return n_->values[0];
  }

  S at(std::initializer_list<std::int64_t> idx) const {
    return n_->values[static_cast<std::size_t>(flat_index(idx))];
  }

  std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const {
    if (static_cast<std::int64_t>(idx.size()) != rank()) {
      throw std::invalid_argument("at: index rank mismatch");
    }
    const Shape st = detail::row_major_strides(n_->shape);
    std::int64_t flat = 0;
    std::size_t k = 0;
    for (std::int64_t i : idx) {
      if (i < 0 || i >= n_->shape[k]) throw std::out_of_range("at: index out of range");
      flat += i * st[k];
      ++k;
    }
    return flat;
  }

  bool requires_grad() const { return n_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    if (n_->backprop) {
      throw std::invalid_argument(
          "set_requires_grad: only leaf tensors can change grad mode");
    }
    n_->requires_grad = on;
    return *this;
  }

  bool tracked() const { return n_->requires_grad || bool(n_->backprop); }

  bool has_grad() const { return !n_->grad.empty(); }

  const std::vector<S>& grad() const {
    if (n_->grad.empty()) {
      throw std::runtime_error("grad: no gradient recorded; run backward first");
    }
    return n_->grad;
  }

  void zero_grad() {
    n_->grad.clear();
    n_->backward_done = false;
  }

  // Value copy detached from any recorded graph.
  Tensor detach() const { return Tensor::from(n_->shape, n_->values); }

  // Reverse-mode differentiation from a scalar output. Gradients of all
  // reachable tensors with requires_grad accumulate additively. A second
  // call on the same recorded graph is an error.
  void backward() const {
    if (size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  detail::shape_str(n_->shape));
    }
    if (!n_->backprop) {
      throw std::runtime_error(
          "backward: tensor is detached from any computation graph");
    }
    if (n_->backward_done) {
      throw std::runtime_error(
          "backward: already called on this graph; build a new forward pass "
          "or zero_grad first");
    }
    // Collect the recorded subgraph (iterative DFS, deterministic order).
    std::vector<TensorNode<S>*> nodes;
    std::unordered_set<TensorNode<S>*> seen;
    std::vector<TensorNode<S>*> stack{n_.get()};
    seen.insert(n_.get());
    while (!stack.empty()) {
      TensorNode<S>* cur = stack.back();
      stack.pop_back();
      nodes.push_back(cur);
      for (const Tensor<S>& p : cur->parents) {
        TensorNode<S>* pn = p.node().get();
        if (pn->backprop || pn->requires_grad) {
          if (seen.insert(pn).second) stack.push_back(pn);
        }
      }
    }
    // Exact reverse execution order.
    std::sort(nodes.begin(), nodes.end(),
              [](const TensorNode<S>* a, const TensorNode<S>* b) {
                return a->seq > b->seq;
              });
    n_->ensure_grad();
    n_->grad[0] = S(1);
    for (TensorNode<S>* node : nodes) {
      if (node->backprop && !node->grad.empty()) node->backprop(*node);
      node->backward_done = true;
    }
  }

  const std::shared_ptr<TensorNode<S>>& node() const { return n_; }

  // Records the op when any input is tracked; otherwise the output stays a
  // plain constant and costs nothing at backward time.
  // `allow_neg_inf` is set by mask-aware ops: -inf is the masking sentinel
  // and legal in logit space, while NaN and +inf are always errors.
  static Tensor make_op(Shape shape, std::vector<S> values,
                        std::vector<Tensor<S>> parents,
                        std::function<void(TensorNode<S>&)> backprop,
                        const char* op_name, bool allow_neg_inf = false) {
    Tensor out = Tensor::from(std::move(shape), std::move(values));
    if (finite_checks()) {
      for (S v : out.n_->values) {
        const double d = static_cast<double>(v);
        const bool bad = std::isnan(d) || d == std::numeric_limits<double>::infinity() ||
                         (!allow_neg_inf && !std::isfinite(d));
        if (bad) {
          throw std::runtime_error(std::string("non-finite value produced by ") +
                                   op_name);
        }
      }
    }
    bool any_tracked = false;
    for (const Tensor<S>& p : parents) {
      if (p.tracked()) {
        any_tracked = true;
        break;
      }
    }
    if (any_tracked) {
      out.n_->parents = std::move(parents);
      out.n_->backprop = std::move(backprop);
      out.n_->seq = next_op_seq();
    }
    return out;
  }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<S>> n) : n_(std::move(n)) {}

  std::shared_ptr<TensorNode<S>> n_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace tevo
