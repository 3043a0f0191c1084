#pragma once

#include <vector>

#include "apn/autodiff.hpp"
#include "apn/random.hpp"

namespace apn::test {

inline Var<double> var(Shape shape, std::vector<double> data, bool grad = false) {
  return make_var(Tensor<double>(std::move(shape), std::move(data)), grad);
}

inline Var<double> random_var(Shape shape, Rng& rng, bool grad = true) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return make_var(std::move(t), grad);
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.ptr()[i] * b.ptr()[i];
  return s;
}

}  // namespace apn::test
