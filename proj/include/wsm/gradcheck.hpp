#pragma once

#include <functional>

#include "wsm/autograd.hpp"

namespace wsm {

// Builds a scalar loss on the given tape. Must be deterministic: it is called
// once recording and 2·size(p) times non-recording.
using LossFn = std::function<Var(Tape&)>;

// Compares the tape gradient of `loss` w.r.t. `p` with central differences.
// Returns max_i |analytic − numeric| / max(1, |analytic|, |numeric|).
double finite_diff_check(const LossFn& loss, Parameter& p, double eps = 1e-5);

}  // namespace wsm
