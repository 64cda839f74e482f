#pragma once

#include <cmath>
#include <functional>

#include "vts/tensor.hpp"

namespace vts::testutil {

// Central finite differences of a scalar-valued function of a flat tensor.
inline Tensor numeric_grad(const std::function<double(const Tensor&)>& f, Tensor x,
                           double h = 1e-6) {
  Tensor g = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    double orig = x.data[i];
    x.data[i] = orig + h;
    double fp = f(x);
    x.data[i] = orig - h;
    double fm = f(x);
    x.data[i] = orig;
    g.data[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

inline double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-4) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double denom = std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), floor});
    m = std::max(m, std::fabs(a.data[i] - b.data[i]) / denom);
  }
  return m;
}

}  // namespace vts::testutil
