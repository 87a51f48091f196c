#include "wsm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wsm/errors.hpp"

namespace wsm {

namespace {

double evaluate(const LossFn& loss) {
  Tape tape(false);
  return loss(tape).value().item();
}

}  // namespace

double finite_diff_check(const LossFn& loss, Parameter& p, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check needs eps > 0");
  // Restores the caller's trainable flag on every exit path.
  struct TrainableGuard {
    Parameter& p;
    bool saved;
    ~TrainableGuard() { p.trainable = saved; }
  } guard{p, p.trainable};
  p.trainable = true;
  p.grad = Tensor(p.value.shape());
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  const Tensor analytic = p.grad;

  double worst = 0.0;
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double orig = p.value[i];
    p.value[i] = orig + eps;
    const double up = evaluate(loss);
    p.value[i] = orig - eps;
    const double down = evaluate(loss);
    p.value[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    if (!std::isfinite(numeric)) {
      throw NumericError("finite difference of " + p.name + " is not finite");
    }
    const double a = analytic[i];
    const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace wsm
