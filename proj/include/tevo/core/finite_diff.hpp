#pragma once

#include <functional>

#include "tevo/core/tensor.hpp"

namespace tevo {

// Central-difference gradient of a scalar-valued function, one coordinate at
// a time: (f(x + h e_i) - f(x - h e_i)) / 2h. Meant for double precision.
template <typename S>
Tensor<S> finite_diff_grad(const std::function<double(const Tensor<S>&)>& f,
                           const Tensor<S>& x, double h = 1e-6) {
  Tensor<S> probe = x.detach();
  Tensor<S> grad = Tensor<S>::zeros(x.shape());
  auto& pv = probe.mutable_values();
  auto& gv = grad.mutable_values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const S keep = pv[i];
    pv[i] = static_cast<S>(static_cast<double>(keep) + h);
    const double fp = f(probe);
    pv[i] = static_cast<S>(static_cast<double>(keep) - h);
    const double fm = f(probe);
    pv[i] = keep;
    gv[i] = static_cast<S>((fp - fm) / (2.0 * h));
  }
  return grad;
}

// Same differencing applied in place to an arbitrary value buffer; used by
// the model-level gradient checks where the function closes over the
// parameter storage itself.
inline std::vector<double> finite_diff_buffer(
    const std::function<double()>& f, std::vector<double>& buffer, double h = 1e-6) {
  std::vector<double> grad(buffer.size(), 0.0);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const double keep = buffer[i];
    buffer[i] = keep + h;
    const double fp = f();
    buffer[i] = keep - h;
    const double fm = f();
    buffer[i] = keep;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

template <typename S>
inline double rel_err(S a, S b) {
  const double da = static_cast<double>(a), db = static_cast<double>(b);
  const double denom = std::max({std::abs(da), std::abs(db), 1.0});
  return std::abs(da - db) / denom;
}

}  // namespace tevo
