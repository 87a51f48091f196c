#include <cmath>
#include <limits>

#include "wsm/checks.hpp"
#include "wsm/errors.hpp"

namespace wsm::checks {

Tensor naive_window_mean(const Tensor& x, std::size_t valid, std::size_t k, BoundaryMode mode) {
  Tensor out(x.shape());
  const std::size_t d = x.cols();
  for (std::size_t t = 0; t < valid; ++t) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < valid; ++j) {
      const bool inside = j + k >= t && j <= t + k;
      if (!inside) continue;
      ++count;
      for (std::size_t c = 0; c < d; ++c) out(t, c) += x(j, c);
    }
    const double denom = mode == BoundaryMode::ZeroPad ? static_cast<double>(2 * k + 1)
                                                       : static_cast<double>(count);
    for (std::size_t c = 0; c < d; ++c) out(t, c) /= denom;
  }
  return out;
}

Tensor naive_global_mean(const Tensor& x, std::size_t valid) {
  Tensor out({1, x.cols()});
  for (std::size_t t = 0; t < valid; ++t) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(t, c);
  }
  for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) /= static_cast<double>(valid);
  return out;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
  }
  return out;
}

Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       std::size_t valid) {
  const std::size_t d = q.cols(), dh = d / heads;
  Tensor out(q.shape());
  std::vector<double> score(valid);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < valid; ++i) {
      for (std::size_t j = 0; j < valid; ++j) {
        double s = 0.0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s += q(i, c) * k(j, c);
        score[j] = s / std::sqrt(static_cast<double>(dh));
      }
      double z = 0.0;
      for (std::size_t j = 0; j < valid; ++j) z += std::exp(score[j]);
      for (std::size_t j = 0; j < valid; ++j) {
        const double p = std::exp(score[j]) / z;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out(i, c) += p * v(j, c);
      }
    }
  }
  return out;
}

double brute_force_ctc(const Tensor& log_probs, std::span<const int> labels, int blank, Tensor* grad) {
  const std::size_t T = log_probs.rows(), V = log_probs.cols();
  std::size_t paths = 1;
  for (std::size_t t = 0; t < T; ++t) paths *= V;
  if (paths > 1'000'000) throw ContractError("brute_force_ctc: too many paths");

  double total = 0.0;
  Tensor occupancy(log_probs.shape());
  std::vector<int> path(T), collapsed;
  for (std::size_t code = 0; code < paths; ++code) {
    std::size_t rest = code;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rest % V);
      rest /= V;
    }
    collapsed.clear();
    for (std::size_t t = 0; t < T; ++t) {
      if (path[t] == blank) continue;
      if (t > 0 && path[t] == path[t - 1]) continue;
      collapsed.push_back(path[t]);
    }
    if (!std::equal(collapsed.begin(), collapsed.end(), labels.begin(), labels.end())) continue;
    double lp = 0.0;
    for (std::size_t t = 0; t < T; ++t) lp += log_probs(t, static_cast<std::size_t>(path[t]));
    const double p = std::exp(lp);
    total += p;
    for (std::size_t t = 0; t < T; ++t) occupancy(t, static_cast<std::size_t>(path[t])) += p;
  }
  if (total == 0.0) return std::numeric_limits<double>::infinity();
  if (grad) {
    *grad = Tensor(log_probs.shape());
    for (std::size_t i = 0; i < occupancy.size(); ++i) (*grad)[i] = -occupancy[i] / total;
  }
  return -std::log(total);
}

}  // namespace wsm::checks
