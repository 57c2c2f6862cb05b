#pragma once

// Central finite-difference check for scalar functions built on a Tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "chronoweft/tensor.hpp"

namespace chronoweft::testing {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Norm-wise relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// over all inputs.
inline double gradient_error(const Builder& f, std::vector<Tensor> inputs, double h = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.variable(t, true));
    tape.backward(f(tape, leaves));
    for (const auto& v : leaves) analytic.push_back(v.grad());
  }
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : xs) leaves.push_back(tape.variable(t, false));
    return f(tape, leaves).value()[0];
  };
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x0 = inputs[i][k];
      inputs[i][k] = x0 + h;
      const double up = eval(inputs);
      inputs[i][k] = x0 - h;
      const double down = eval(inputs);
      inputs[i][k] = x0;
      const double num = (up - down) / (2.0 * h);
      const double a = analytic[i][k];
      diff += (a - num) * (a - num);
      na += a * a;
      nn += num * num;
    }
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
  return std::sqrt(diff) / scale;
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng = make_rng(seed);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

}  // namespace chronoweft::testing
