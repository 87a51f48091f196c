#pragma once

#include <random>

#include "wsm/autograd.hpp"

namespace wsm::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

// sum(y ⊙ w) for a fixed random w, so every element of y carries gradient.
inline Var readout(Tape& tape, const Var& y, const Tensor& w) {
  return sum(mul(y, tape.constant(w)));
}

}  // namespace wsm::test
