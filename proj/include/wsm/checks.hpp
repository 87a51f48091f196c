#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wsm/mixing.hpp"

namespace wsm::checks {

// Direct, unoptimized reference computations.
Tensor naive_window_mean(const Tensor& x, std::size_t valid, std::size_t k, BoundaryMode mode);
Tensor naive_global_mean(const Tensor& x, std::size_t valid);
Tensor naive_matmul(const Tensor& a, const Tensor& b);
Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       std::size_t valid);

// Exhaustive CTC: sums the probability of every one of the V^T frame paths
// that collapse to `labels`. `grad` (optional) receives d(−log p)/d log_probs.
// Returns +inf when no path matches.
double brute_force_ctc(const Tensor& log_probs, std::span<const int> labels, int blank,
                       Tensor* grad = nullptr);

struct CheckResult {
  std::string suite;
  std::string name;
  std::size_t cases = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Random windowed/global summaries against the double-loop oracle.
CheckResult window_oracle(std::size_t cases, std::uint64_t seed);
// Random CTC cases (T ≤ 6, V ≤ 4, ≤ 3 labels) against enumeration: loss and gradient.
CheckResult ctc_oracle(std::size_t cases, std::uint64_t seed);
CheckResult attention_oracle(std::size_t cases, std::uint64_t seed);
CheckResult matmul_oracle(std::size_t cases, std::uint64_t seed);

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed);
// Central-difference checks of every block, the layer sum + head, and CTC.
std::vector<CheckResult> run_gradcheck_suite(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);
// suite,name,cases,max_error,tolerance,pass
void write_check_csv(std::ostream& os, const std::vector<CheckResult>& results);

}  // namespace wsm::checks
