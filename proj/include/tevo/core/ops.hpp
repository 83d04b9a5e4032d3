#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tevo/core/mults.hpp"
#include "tevo/core/rng.hpp"
#include "tevo/core/tensor.hpp"

namespace tevo {

namespace detail {

// Applies f(out_flat, a_flat, b_flat) over the broadcast index space. The
// innermost axis runs as a tight strided loop; the odometer only advances
// the outer axes.
template <typename F>
inline void for_each_broadcast(const Shape& full, const Shape& stride_a,
                               const Shape& stride_b, F&& f) {
  const std::size_t r = full.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const std::int64_t inner = full[r - 1];
  const std::int64_t sa_in = stride_a[r - 1];
  const std::int64_t sb_in = stride_b[r - 1];
  const std::int64_t total = shape_size(full);
  const std::int64_t outer = inner > 0 ? total / inner : 0;
  std::vector<std::int64_t> idx(r > 1 ? r - 1 : 0, 0);
  std::int64_t oa = 0, ob = 0, flat = 0;
  for (std::int64_t o = 0; o < outer; ++o) {
    std::int64_t a = oa, b = ob;
    for (std::int64_t i = 0; i < inner; ++i) {
      f(flat++, a, b);
      a += sa_in;
      b += sb_in;
    }
    for (std::int64_t ax = static_cast<std::int64_t>(r) - 2; ax >= 0; --ax) {
      const std::size_t s = static_cast<std::size_t>(ax);
      idx[s]++;
      oa += stride_a[s];
      ob += stride_b[s];
      if (idx[s] < full[s]) break;
      oa -= stride_a[s] * full[s];
      ob -= stride_b[s] * full[s];
      idx[s] = 0;
    }
  }
}

// Sums `g` (laid out as `full`) down to `target`, adding into `out`.
template <typename S>
inline void reduce_into_shape(const std::vector<S>& g, const Shape& full,
                              const Shape& target, std::vector<S>& out) {
  if (full == target) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += g[i];
    return;
  }
  const Shape st = broadcast_strides(target, full);
  const Shape zero(full.size(), 0);
  for_each_broadcast(full, st, zero, [&](std::int64_t flat, std::int64_t ot,
                                         std::int64_t) {
    out[static_cast<std::size_t>(ot)] += g[static_cast<std::size_t>(flat)];
  });
}

inline Shape permute_shape(const Shape& s, const std::vector<std::int64_t>& axes) {
  Shape out(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    out[i] = s[static_cast<std::size_t>(axes[i])];
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (numpy-style broadcasting)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape full = detail::broadcast_shapes(a.shape(), b.shape(), "add");
  std::vector<S> out(static_cast<std::size_t>(detail::shape_size(full)));
  if (a.shape() == b.shape()) {
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  } else {
    const Shape sa = detail::broadcast_strides(a.shape(), full);
    const Shape sb = detail::broadcast_strides(b.shape(), full);
    const auto& av = a.values();
    const auto& bv = b.values();
    detail::for_each_broadcast(full, sa, sb,
                               [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                                 out[static_cast<std::size_t>(o)] =
                                     av[static_cast<std::size_t>(ia)] +
                                     bv[static_cast<std::size_t>(ib)];
                               });
  }
  Shape ash = a.shape(), bsh = b.shape();
  auto backprop = [ash, bsh, full](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    const Tensor<S>& pb = n.parents[1];
    if (pa.tracked()) {
      pa.node()->ensure_grad();
      detail::reduce_into_shape(n.grad, full, ash, pa.node()->grad);
    }
    if (pb.tracked()) {
      pb.node()->ensure_grad();
      detail::reduce_into_shape(n.grad, full, bsh, pb.node()->grad);
    }
  };
  return Tensor<S>::make_op(full, std::move(out), {a, b}, backprop, "add",
                            /*allow_neg_inf=*/true);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape full = detail::broadcast_shapes(a.shape(), b.shape(), "sub");
  std::vector<S> out(static_cast<std::size_t>(detail::shape_size(full)));
  const Shape sa = detail::broadcast_strides(a.shape(), full);
  const Shape sb = detail::broadcast_strides(b.shape(), full);
  const auto& av = a.values();
  const auto& bv = b.values();
  detail::for_each_broadcast(full, sa, sb,
                             [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                               out[static_cast<std::size_t>(o)] =
                                   av[static_cast<std::size_t>(ia)] -
                                   bv[static_cast<std::size_t>(ib)];
                             });
  Shape ash = a.shape(), bsh = b.shape();
  auto backprop = [ash, bsh, full](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    const Tensor<S>& pb = n.parents[1];
    if (pa.tracked()) {
      pa.node()->ensure_grad();
      detail::reduce_into_shape(n.grad, full, ash, pa.node()->grad);
    }
    if (pb.tracked()) {
      pb.node()->ensure_grad();
      std::vector<S> neg(n.grad.size());
      for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -n.grad[i];
      detail::reduce_into_shape(neg, full, bsh, pb.node()->grad);
    }
  };
  return Tensor<S>::make_op(full, std::move(out), {a, b}, backprop, "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape full = detail::broadcast_shapes(a.shape(), b.shape(), "mul");
  std::vector<S> out(static_cast<std::size_t>(detail::shape_size(full)));
  const Shape sa = detail::broadcast_strides(a.shape(), full);
  const Shape sb = detail::broadcast_strides(b.shape(), full);
  {
    const auto& av = a.values();
    const auto& bv = b.values();
    detail::for_each_broadcast(full, sa, sb,
                               [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                                 out[static_cast<std::size_t>(o)] =
                                     av[static_cast<std::size_t>(ia)] *
                                     bv[static_cast<std::size_t>(ib)];
                               });
  }
  mults::add(static_cast<std::uint64_t>(detail::shape_size(full)));
  Shape ash = a.shape(), bsh = b.shape();
  auto backprop = [ash, bsh, full, sa, sb](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    const Tensor<S>& pb = n.parents[1];
    if (pa.tracked()) {
      pa.node()->ensure_grad();
      auto& ga = pa.node()->grad;
      const auto& bv = pb.values();
      detail::for_each_broadcast(
          full, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            ga[static_cast<std::size_t>(ia)] +=
                n.grad[static_cast<std::size_t>(o)] * bv[static_cast<std::size_t>(ib)];
          });
    }
    if (pb.tracked()) {
      pb.node()->ensure_grad();
      auto& gb = pb.node()->grad;
      const auto& av = pa.values();
      detail::for_each_broadcast(
          full, sa, sb, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
            gb[static_cast<std::size_t>(ib)] +=
                n.grad[static_cast<std::size_t>(o)] * av[static_cast<std::size_t>(ia)];
          });
    }
  };
  return Tensor<S>::make_op(full, std::move(out), {a, b}, backprop, "mul");
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double c) {
  std::vector<S> out(a.values().size());
  const S cs = static_cast<S>(c);
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * cs;
  mults::add(out.size());
  auto backprop = [cs](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * cs;
  };
  return Tensor<S>::make_op(a.shape(), std::move(out), {a}, backprop, "scale");
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Matrix multiplication, batched with broadcast over leading axes
// ---------------------------------------------------------------------------

namespace detail {

// c[p,r] += a[p,q] * b[q,r]
template <typename S>
inline void mm_acc(const S* a, const S* b, S* c, std::int64_t p, std::int64_t q,
                   std::int64_t r) {
  for (std::int64_t i = 0; i < p; ++i) {
    const S* arow = a + i * q;
    S* crow = c + i * r;
    for (std::int64_t k = 0; k < q; ++k) {
      const S aik = arow[k];
      const S* brow = b + k * r;
      for (std::int64_t j = 0; j < r; ++j) crow[j] += aik * brow[j];
    }
  }
}

// da[p,q] += dc[p,r] * bt[r,q] where bt is b transposed; the inner loop is
// a contiguous axpy instead of a strided reduction.
template <typename S>
inline void mm_grad_a(const S* dc, const S* bt, S* da, std::int64_t p,
                      std::int64_t q, std::int64_t r) {
  for (std::int64_t i = 0; i < p; ++i) {
    const S* dcrow = dc + i * r;
    S* darow = da + i * q;
    for (std::int64_t j = 0; j < r; ++j) {
      const S dij = dcrow[j];
      const S* btrow = bt + j * q;
      for (std::int64_t k = 0; k < q; ++k) darow[k] += dij * btrow[k];
    }
  }
}

template <typename S>
inline void transpose_block(const S* b, S* bt, std::int64_t rows, std::int64_t cols) {
  for (std::int64_t k = 0; k < rows; ++k) {
    for (std::int64_t j = 0; j < cols; ++j) bt[j * rows + k] = b[k * cols + j];
  }
}

// db[q,r] += a[p,q]^T * dc[p,r]
template <typename S>
inline void mm_grad_b(const S* a, const S* dc, S* db, std::int64_t p,
                      std::int64_t q, std::int64_t r) {
  for (std::int64_t i = 0; i < p; ++i) {
    const S* arow = a + i * q;
    const S* dcrow = dc + i * r;
    for (std::int64_t k = 0; k < q; ++k) {
      const S aik = arow[k];
      S* dbrow = db + k * r;
      for (std::int64_t j = 0; j < r; ++j) dbrow[j] += aik * dcrow[j];
    }
  }
}

struct MatmulPlan {
  Shape out_shape;
  Shape batch_shape;
  std::int64_t p = 0, q = 0, r = 0, batches = 1;
  // flat batch index -> block offsets in a and b
  std::vector<std::int64_t> a_off, b_off;
};

inline MatmulPlan plan_matmul(const Shape& a, const Shape& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                shape_str(a) + " and " + shape_str(b));
  }
  MatmulPlan pl;
  pl.p = a[a.size() - 2];
  pl.q = a[a.size() - 1];
  pl.r = b[b.size() - 1];
  const std::int64_t q2 = b[b.size() - 2];
  if (pl.q != q2) {
    throw std::invalid_argument("matmul: inner extents disagree: " +
                                shape_str(a) + " x " + shape_str(b));
  }
  const Shape a_batch(a.begin(), a.end() - 2);
  const Shape b_batch(b.begin(), b.end() - 2);
  pl.batch_shape = broadcast_shapes(a_batch, b_batch, "matmul batch");
  pl.batches = shape_size(pl.batch_shape);
  pl.out_shape = pl.batch_shape;
  pl.out_shape.push_back(pl.p);
  pl.out_shape.push_back(pl.r);

  const Shape sa = broadcast_strides(a_batch, pl.batch_shape);
  const Shape sb = broadcast_strides(b_batch, pl.batch_shape);
  pl.a_off.resize(static_cast<std::size_t>(pl.batches));
  pl.b_off.resize(static_cast<std::size_t>(pl.batches));
  const std::int64_t a_block = pl.p * pl.q;
  const std::int64_t b_block = q2 * pl.r;
  for_each_broadcast(pl.batch_shape, sa, sb,
                     [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                       pl.a_off[static_cast<std::size_t>(o)] = ia * a_block;
                       pl.b_off[static_cast<std::size_t>(o)] = ib * b_block;
                     });
  return pl;
}

}  // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const detail::MatmulPlan pl = detail::plan_matmul(a.shape(), b.shape());
  std::vector<S> out(static_cast<std::size_t>(pl.batches * pl.p * pl.r), S(0));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::int64_t n = 0; n < pl.batches; ++n) {
    detail::mm_acc(av.data() + pl.a_off[static_cast<std::size_t>(n)],
                   bv.data() + pl.b_off[static_cast<std::size_t>(n)],
                   out.data() + n * pl.p * pl.r, pl.p, pl.q, pl.r);
  }
  mults::add(static_cast<std::uint64_t>(pl.batches * pl.p * pl.q * pl.r));
  auto backprop = [pl](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    const Tensor<S>& pb = n.parents[1];
    if (pa.tracked()) {
      pa.node()->ensure_grad();
      auto& ga = pa.node()->grad;
      const auto& bv2 = pb.values();
      std::vector<S> bt(static_cast<std::size_t>(pl.q * pl.r));
      std::int64_t cached_off = -1;
      for (std::int64_t k = 0; k < pl.batches; ++k) {
        const std::int64_t boff = pl.b_off[static_cast<std::size_t>(k)];
        if (boff != cached_off) {
          detail::transpose_block(bv2.data() + boff, bt.data(), pl.q, pl.r);
          cached_off = boff;
        }
        detail::mm_grad_a(n.grad.data() + k * pl.p * pl.r, bt.data(),
                          ga.data() + pl.a_off[static_cast<std::size_t>(k)],
                          pl.p, pl.q, pl.r);
      }
    }
    if (pb.tracked()) {
      pb.node()->ensure_grad();
      auto& gb = pb.node()->grad;
      const auto& av2 = pa.values();
      for (std::int64_t k = 0; k < pl.batches; ++k) {
        detail::mm_grad_b(av2.data() + pl.a_off[static_cast<std::size_t>(k)],
                          n.grad.data() + k * pl.p * pl.r,
                          gb.data() + pl.b_off[static_cast<std::size_t>(k)],
                          pl.p, pl.q, pl.r);
      }
    }
  };
  return Tensor<S>::make_op(pl.out_shape, std::move(out), {a, b}, backprop,
                            "matmul");
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape new_shape) {
  if (detail::shape_size(new_shape) != a.size()) {
    throw std::invalid_argument("reshape: size mismatch " +
                                detail::shape_str(a.shape()) + " -> " +
                                detail::shape_str(new_shape));
  }
  auto backprop = [](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->accumulate(n.grad);
  };
  return Tensor<S>::make_op(std::move(new_shape), a.values(), {a}, backprop,
                            "reshape", /*allow_neg_inf=*/true);
}

template <typename S>
Tensor<S> permute(const Tensor<S>& a, const std::vector<std::int64_t>& axes) {
  if (static_cast<std::int64_t>(axes.size()) != a.rank()) {
    throw std::invalid_argument("permute: axes rank mismatch");
  }
  const Shape out_shape = detail::permute_shape(a.shape(), axes);
  const Shape in_strides = detail::row_major_strides(a.shape());
  Shape gather(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    gather[i] = in_strides[static_cast<std::size_t>(axes[i])];
  }
  std::vector<S> out(a.values().size());
  const auto& av = a.values();
  const Shape zero(out_shape.size(), 0);
  detail::for_each_broadcast(out_shape, gather, zero,
                             [&](std::int64_t o, std::int64_t ia, std::int64_t) {
                               out[static_cast<std::size_t>(o)] =
                                   av[static_cast<std::size_t>(ia)];
                             });
  auto backprop = [out_shape, gather](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    const Shape zero2(out_shape.size(), 0);
    detail::for_each_broadcast(out_shape, gather, zero2,
                               [&](std::int64_t o, std::int64_t ia, std::int64_t) {
                                 ga[static_cast<std::size_t>(ia)] +=
                                     n.grad[static_cast<std::size_t>(o)];
                               });
  };
  return Tensor<S>::make_op(out_shape, std::move(out), {a}, backprop, "permute",
                            /*allow_neg_inf=*/true);
}

// Swap the last two axes.
template <typename S>
Tensor<S> transpose_last(const Tensor<S>& a) {
  std::vector<std::int64_t> axes(static_cast<std::size_t>(a.rank()));
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<std::int64_t>(i);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(a, axes);
}

template <typename S>
Tensor<S> narrow(const Tensor<S>& a, std::int64_t axis, std::int64_t start,
                 std::int64_t len) {
  if (axis < 0 || axis >= a.rank()) throw std::invalid_argument("narrow: bad axis");
  const std::int64_t ext = a.shape()[static_cast<std::size_t>(axis)];
  if (start < 0 || len < 0 || start + len > ext) {
    throw std::invalid_argument("narrow: slice [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") outside extent " +
                                std::to_string(ext));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  const Shape in_strides = detail::row_major_strides(a.shape());
  const std::int64_t ax_stride = in_strides[static_cast<std::size_t>(axis)];
  std::vector<S> out(static_cast<std::size_t>(detail::shape_size(out_shape)));
  const auto& av = a.values();
  const Shape gather = detail::row_major_strides(a.shape());
  // iterate output space; input offset = output multi-index with axis shifted
  Shape gstr(out_shape.size());
  for (std::size_t i = 0; i < out_shape.size(); ++i) gstr[i] = gather[i];
  const std::int64_t base = start * ax_stride;
  const Shape zero(out_shape.size(), 0);
  detail::for_each_broadcast(out_shape, gstr, zero,
                             [&](std::int64_t o, std::int64_t ia, std::int64_t) {
                               out[static_cast<std::size_t>(o)] =
                                   av[static_cast<std::size_t>(base + ia)];
                             });
  auto backprop = [out_shape, gstr, base](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    const Shape zero2(out_shape.size(), 0);
    detail::for_each_broadcast(out_shape, gstr, zero2,
                               [&](std::int64_t o, std::int64_t ia, std::int64_t) {
                                 ga[static_cast<std::size_t>(base + ia)] +=
                                     n.grad[static_cast<std::size_t>(o)];
                               });
  };
  return Tensor<S>::make_op(out_shape, std::move(out), {a}, backprop, "narrow",
                            /*allow_neg_inf=*/true);
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization
// ---------------------------------------------------------------------------

// When armed, records the smallest |x| seen at any relu input. The gradient
// check uses it to reject evaluation points that sit on the kink.
inline bool& relu_watch_armed() {
  static bool armed = false;
  return armed;
}
inline double& relu_watch_min() {
  static double m = std::numeric_limits<double>::infinity();
  return m;
}
inline void arm_relu_watch() {
  relu_watch_armed() = true;
  relu_watch_min() = std::numeric_limits<double>::infinity();
}
inline double disarm_relu_watch() {
  relu_watch_armed() = false;
  return relu_watch_min();
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  std::vector<S> out(a.values().size());
  const auto& av = a.values();
  if (relu_watch_armed()) {
    double m = relu_watch_min();
    for (S v : av) m = std::min(m, std::abs(static_cast<double>(v)));
    relu_watch_min() = m;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > S(0) ? av[i] : S(0);
  auto backprop = [](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    const auto& av2 = pa.values();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (av2[i] > S(0)) ga[i] += n.grad[i];
    }
  };
  return Tensor<S>::make_op(a.shape(), std::move(out), {a}, backprop, "relu");
}

// Softmax over the last axis with an optional additive mask (entries 0 or
// -inf). Masked positions are exactly zero in the output and receive zero
// gradient. A fully masked row is an error.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& logits,
                       const Tensor<S>* mask = nullptr) {
  if (logits.rank() < 1) throw std::invalid_argument("softmax_rows: rank 0 input");
  const Shape& sh = logits.shape();
  const std::int64_t cols = sh[sh.size() - 1];
  const std::int64_t rows = logits.size() / cols;
  std::vector<S> z(logits.values());
  if (mask != nullptr) {
    const Shape full = detail::broadcast_shapes(sh, mask->shape(), "softmax mask");
    if (full != sh) {
      throw std::invalid_argument("softmax_rows: mask does not broadcast to logits");
    }
    const Shape sm = detail::broadcast_strides(mask->shape(), sh);
    const Shape zero(sh.size(), 0);
    const auto& mv = mask->values();
    detail::for_each_broadcast(sh, sm, zero,
                               [&](std::int64_t o, std::int64_t im, std::int64_t) {
                                 z[static_cast<std::size_t>(o)] +=
                                     mv[static_cast<std::size_t>(im)];
                               });
  }
  std::vector<S> out(z.size());
  const S neg_inf = -std::numeric_limits<S>::infinity();
  for (std::int64_t ri = 0; ri < rows; ++ri) {
    S* zrow = z.data() + ri * cols;
    S* orow = out.data() + ri * cols;
    S m = neg_inf;
    for (std::int64_t j = 0; j < cols; ++j) {
      if (std::isnan(static_cast<double>(zrow[j]))) {
        throw std::runtime_error("softmax_rows: non-finite logits in row " +
                                 std::to_string(ri));
      }
      m = std::max(m, zrow[j]);
    }
    if (m == neg_inf) {
      throw std::runtime_error("softmax_rows: fully masked row " + std::to_string(ri) +
                               " has no valid key");
    }
    S sum = S(0);
    for (std::int64_t j = 0; j < cols; ++j) {
      const S e = std::exp(zrow[j] - m);
      orow[j] = e;
      sum += e;
    }
    for (std::int64_t j = 0; j < cols; ++j) orow[j] /= sum;
  }
  std::vector<S> saved = out;
  auto backprop = [saved, rows, cols](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    for (std::int64_t ri = 0; ri < rows; ++ri) {
      const S* w = saved.data() + ri * cols;
      const S* g = n.grad.data() + ri * cols;
      S dot = S(0);
      for (std::int64_t j = 0; j < cols; ++j) dot += w[j] * g[j];
      S* grow = ga.data() + ri * cols;
      for (std::int64_t j = 0; j < cols; ++j) grow[j] += w[j] * (g[j] - dot);
    }
  };
  // The mask is a constant: it is not recorded as a parent.
  return Tensor<S>::make_op(sh, std::move(out), {logits}, backprop, "softmax_rows");
}

template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& x) {
  const Shape& sh = x.shape();
  const std::int64_t cols = sh[sh.size() - 1];
  const std::int64_t rows = x.size() / cols;
  std::vector<S> out(x.values().size());
  const auto& xv = x.values();
  for (std::int64_t ri = 0; ri < rows; ++ri) {
    const S* xrow = xv.data() + ri * cols;
    S* orow = out.data() + ri * cols;
    S m = xrow[0];
    for (std::int64_t j = 1; j < cols; ++j) m = std::max(m, xrow[j]);
    S sum = S(0);
    for (std::int64_t j = 0; j < cols; ++j) sum += std::exp(xrow[j] - m);
    const S lse = m + std::log(sum);
    for (std::int64_t j = 0; j < cols; ++j) orow[j] = xrow[j] - lse;
  }
  std::vector<S> saved = out;
  auto backprop = [saved, rows, cols](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    for (std::int64_t ri = 0; ri < rows; ++ri) {
      const S* lp = saved.data() + ri * cols;
      const S* g = n.grad.data() + ri * cols;
      S gsum = S(0);
      for (std::int64_t j = 0; j < cols; ++j) gsum += g[j];
      S* grow = ga.data() + ri * cols;
      for (std::int64_t j = 0; j < cols; ++j) {
        grow[j] += g[j] - std::exp(lp[j]) * gsum;
      }
    }
  };
  return Tensor<S>::make_op(sh, std::move(out), {x}, backprop, "log_softmax_rows");
}

// Per-row standardization over the last axis, then affine gain/shift.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& shift, double eps = 1e-6) {
  const Shape& sh = x.shape();
  const std::int64_t d = sh[sh.size() - 1];
  if (d < 2) throw std::invalid_argument("layer_norm: last extent must be >= 2");
  if (gain.size() != d || shift.size() != d) {
    throw std::invalid_argument("layer_norm: gain/shift must have length " +
                                std::to_string(d));
  }
  const std::int64_t rows = x.size() / d;
  std::vector<S> out(x.values().size());
  std::vector<S> xhat(x.values().size());
  std::vector<S> inv_std(static_cast<std::size_t>(rows));
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& sv = shift.values();
  for (std::int64_t ri = 0; ri < rows; ++ri) {
    const S* xrow = xv.data() + ri * d;
    double mean = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mean += static_cast<double>(xrow[j]);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = static_cast<double>(xrow[j]) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(ri)] = static_cast<S>(is);
    S* xh = xhat.data() + ri * d;
    S* orow = out.data() + ri * d;
    for (std::int64_t j = 0; j < d; ++j) {
      xh[j] = static_cast<S>((static_cast<double>(xrow[j]) - mean) * is);
      orow[j] = xh[j] * gv[static_cast<std::size_t>(j)] + sv[static_cast<std::size_t>(j)];
    }
  }
  auto backprop = [xhat, inv_std, rows, d](TensorNode<S>& n) {
    const Tensor<S>& px = n.parents[0];
    const Tensor<S>& pg = n.parents[1];
    const Tensor<S>& ps = n.parents[2];
    const auto& gv2 = pg.values();
    if (pg.tracked()) pg.node()->ensure_grad();
    if (ps.tracked()) ps.node()->ensure_grad();
    if (px.tracked()) px.node()->ensure_grad();
    for (std::int64_t ri = 0; ri < rows; ++ri) {
      const S* g = n.grad.data() + ri * d;
      const S* xh = xhat.data() + ri * d;
      if (pg.tracked()) {
        auto& gg = pg.node()->grad;
        for (std::int64_t j = 0; j < d; ++j) gg[static_cast<std::size_t>(j)] += g[j] * xh[j];
      }
      if (ps.tracked()) {
        auto& gs = ps.node()->grad;
        for (std::int64_t j = 0; j < d; ++j) gs[static_cast<std::size_t>(j)] += g[j];
      }
      if (px.tracked()) {
        auto& gx = px.node()->grad;
        double mean_gb = 0.0, mean_gbx = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          const double gb = static_cast<double>(g[j]) *
                            static_cast<double>(gv2[static_cast<std::size_t>(j)]);
          mean_gb += gb;
          mean_gbx += gb * static_cast<double>(xh[j]);
        }
        mean_gb /= static_cast<double>(d);
        mean_gbx /= static_cast<double>(d);
        const double is = static_cast<double>(inv_std[static_cast<std::size_t>(ri)]);
        S* gxrow = gx.data() + ri * d;
        for (std::int64_t j = 0; j < d; ++j) {
          const double gb = static_cast<double>(g[j]) *
                            static_cast<double>(gv2[static_cast<std::size_t>(j)]);
          gxrow[j] += static_cast<S>(
              is * (gb - mean_gb - static_cast<double>(xh[j]) * mean_gbx));
        }
      }
    }
  };
  return Tensor<S>::make_op(sh, std::move(out), {x, gain, shift}, backprop,
                            "layer_norm");
}

// ---------------------------------------------------------------------------
// Lookup, reductions, dropout
// ---------------------------------------------------------------------------

// Gathers rows of `table` ([vocab, d]) for each id; gradient scatter-adds.
template <typename S>
Tensor<S> embedding_rows(const Tensor<S>& table,
                         const std::vector<std::int32_t>& ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding_rows: table must be 2-D");
  const std::int64_t vocab = table.shape()[0];
  const std::int64_t d = table.shape()[1];
  std::vector<S> out(ids.size() * static_cast<std::size_t>(d));
  const auto& tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t id = ids[i];
    if (id < 0 || id >= vocab) {
      throw std::invalid_argument("embedding_rows: token id " + std::to_string(id) +
                                  " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::int64_t>(id) * d, d,
                out.data() + static_cast<std::int64_t>(i) * d);
  }
  std::vector<std::int32_t> saved_ids = ids;
  auto backprop = [saved_ids, d](TensorNode<S>& n) {
    const Tensor<S>& pt = n.parents[0];
    if (!pt.tracked()) return;
    pt.node()->ensure_grad();
    auto& gt = pt.node()->grad;
    for (std::size_t i = 0; i < saved_ids.size(); ++i) {
      const S* g = n.grad.data() + static_cast<std::int64_t>(i) * d;
      S* grow = gt.data() + static_cast<std::int64_t>(saved_ids[i]) * d;
      for (std::int64_t j = 0; j < d; ++j) grow[j] += g[j];
    }
  };
  return Tensor<S>::make_op({static_cast<std::int64_t>(ids.size()), d},
                            std::move(out), {table}, backprop, "embedding_rows");
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  S acc = S(0);
  for (S v : a.values()) acc += v;
  auto backprop = [](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    const S g = n.grad[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  };
  return Tensor<S>::make_op({}, {acc}, {a}, backprop, "sum_all");
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// Inverted dropout; rate 0 returns the input untouched.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  std::vector<S> mask(a.values().size());
  for (S& m : mask) m = rng.next_uniform() < rate ? S(0) : keep_scale;
  std::vector<S> out(a.values().size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  mults::add(out.size());
  auto backprop = [mask](TensorNode<S>& n) {
    const Tensor<S>& pa = n.parents[0];
    if (!pa.tracked()) return;
    pa.node()->ensure_grad();
    auto& ga = pa.node()->grad;
    for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * mask[i];
  };
  return Tensor<S>::make_op(a.shape(), std::move(out), {a}, backprop, "dropout");
}

// Argmax over the last axis, lowest index wins ties. Not differentiable.
template <typename S>
std::vector<std::int64_t> argmax_rows(const Tensor<S>& x) {
  const std::int64_t cols = x.shape()[x.shape().size() - 1];
  const std::int64_t rows = x.size() / cols;
  std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
  const auto& xv = x.values();
  for (std::int64_t ri = 0; ri < rows; ++ri) {
    const S* row = xv.data() + ri * cols;
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < cols; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[static_cast<std::size_t>(ri)] = best;
  }
  return out;
}

}  // namespace tevo
