#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wsm/autograd.hpp"

namespace wsm {

// Frames needed to emit `labels`: one per label plus one blank between each
// pair of equal neighbours.
std::size_t ctc_min_frames(std::span<const int> labels);

// Negative log-likelihood of `labels` under per-frame log-probabilities
// [T×V], summed over all CTC alignments of the first `valid` frames (0 means
// all rows). Forward recursion in log space; the gradient w.r.t. the
// log-probabilities comes from the matching backward recursion.
// Throws InfeasibleTargetError when valid < ctc_min_frames(labels).
Var ctc_loss(const Var& log_probs, std::span<const int> labels, int blank, std::size_t valid = 0);

// Per-frame argmax, repeats collapsed, blanks dropped.
std::vector<int> greedy_decode(const Tensor& log_probs, int blank, std::size_t valid = 0);

std::size_t edit_distance(std::span<const int> a, std::span<const int> b);

}  // namespace wsm
