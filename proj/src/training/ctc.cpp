#include "wsm/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wsm/errors.hpp"

namespace wsm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::size_t ctc_min_frames(std::span<const int> labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++n;
  }
  return n;
}

Var ctc_loss(const Var& log_probs, std::span<const int> labels, int blank, std::size_t valid) {
  const Tensor& lp = log_probs.value();
  if (lp.rank() != 2) throw DimensionError("ctc_loss expects [T×V], got " + to_string(lp.shape()));
  const std::size_t T = valid == 0 ? lp.rows() : valid;
  const std::size_t V = lp.cols();
  if (T > lp.rows() || T == 0) {
    throw ContractError("ctc_loss: valid length " + std::to_string(T) + " outside [1, " +
                        std::to_string(lp.rows()) + "]");
  }
  if (blank < 0 || static_cast<std::size_t>(blank) >= V) throw ContractError("ctc_loss: blank id out of range");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= V || l == blank) {
      throw ContractError("ctc_loss: label " + std::to_string(l) + " invalid for vocabulary " +
                          std::to_string(V) + " with blank " + std::to_string(blank));
    }
  }
  const std::size_t need = ctc_min_frames(labels);
  if (need > T) {
    throw InfeasibleTargetError("target of " + std::to_string(labels.size()) + " labels needs " +
                                std::to_string(need) + " frames, only " + std::to_string(T) +
                                " available");
  }

  // Extended target: blank, l1, blank, l2, ..., blank.
  const std::size_t S = 2 * labels.size() + 1;
  std::vector<int> ext(S, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = lp(0, static_cast<std::size_t>(ext[0]));
  if (S > 1) alpha[1] = lp(0, static_cast<std::size_t>(ext[1]));
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = &alpha[(t - 1) * S];
    double* cur = &alpha[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double a = prev[s];
      if (s >= 1) a = log_add(a, prev[s - 1]);
      if (can_skip(s)) a = log_add(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + lp(t, static_cast<std::size_t>(ext[s]));
    }
  }
  double log_likelihood = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_likelihood = log_add(log_likelihood, alpha[(T - 1) * S + S - 2]);

  beta[(T - 1) * S + S - 1] = lp(T - 1, static_cast<std::size_t>(ext[S - 1]));
  if (S > 1) beta[(T - 1) * S + S - 2] = lp(T - 1, static_cast<std::size_t>(ext[S - 2]));
  for (std::size_t t = T - 1; t-- > 0;) {
    const double* next = &beta[(t + 1) * S];
    double* cur = &beta[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double b = next[s];
      if (s + 1 < S) b = log_add(b, next[s + 1]);
      if (s + 2 < S && can_skip(s + 2)) b = log_add(b, next[s + 2]);
      cur[s] = b == kNegInf ? kNegInf : b + lp(t, static_cast<std::size_t>(ext[s]));
    }
  }

  // d(−log p)/d lp[t,k] = −exp(logsumexp_{s: ext[s]=k}(α_t(s)+β_t(s)) − lp[t,k] − log p).
  auto grad = std::make_shared<Tensor>(lp.shape());
  std::vector<double> occupancy(V);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(occupancy.begin(), occupancy.end(), kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const double ab = alpha[t * S + s] + beta[t * S + s];
      auto& o = occupancy[static_cast<std::size_t>(ext[s])];
      o = log_add(o, ab);
    }
    for (std::size_t k = 0; k < V; ++k) {
      if (occupancy[k] == kNegInf) continue;
      (*grad)(t, k) = -std::exp(occupancy[k] - lp(t, k) - log_likelihood);
    }
  }

  return log_probs.tape()->make("ctc_loss", Tensor::scalar(-log_likelihood), {&log_probs},
                                [log_probs, grad](const Tensor& g, Tape& t) {
                                  Tensor gx = *grad;
                                  gx *= g.item();
                                  t.accumulate(log_probs, std::move(gx));
                                });
}

std::vector<int> greedy_decode(const Tensor& log_probs, int blank, std::size_t valid) {
  const std::size_t T = valid == 0 ? log_probs.rows() : std::min(valid, log_probs.rows());
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = log_probs.row(t);
    const int best = static_cast<int>(std::max_element(row, row + log_probs.cols()) - row);
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

std::size_t edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace wsm
