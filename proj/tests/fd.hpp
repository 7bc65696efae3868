#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ppann/kinematics.hpp"

namespace fd {

/// Central difference of f along coordinate i of x.
inline double partial(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                      std::size_t i, double h = 1e-6) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

inline std::vector<double> gradient(const std::function<double(const std::vector<double>&)>& f,
                                    const std::vector<double>& x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = partial(f, x, i, h);
  return g;
}

/// Central difference of a scalar function of a tensor, entry by entry.
inline ppann::Tensor2 tensor_gradient(const std::function<double(const ppann::Tensor2&)>& f, const ppann::Tensor2& A,
                                      double h = 1e-6) {
  ppann::Tensor2 G;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      ppann::Tensor2 Ap = A, Am = A;
      Ap(i, j) += h;
      Am(i, j) -= h;
      G(i, j) = (f(Ap) - f(Am)) / (2.0 * h);
    }
  }
  return G;
}

/// |a - b| <= atol + rtol |b|
inline bool close(double a, double b, double rtol, double atol) { return std::abs(a - b) <= atol + rtol * std::abs(b); }

}  // namespace fd
