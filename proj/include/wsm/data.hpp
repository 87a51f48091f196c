#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wsm/tensor.hpp"

namespace wsm {

// CTC blank; characters are 1..alphabet.
inline constexpr int kBlank = 0;

// Synthetic "speech": each character is rendered as a run of frames of its
// prototype vector plus Gaussian noise.
struct DatasetSpec {
  std::size_t n = 512;
  std::size_t min_labels = 3;
  std::size_t max_labels = 12;
  std::size_t min_run = 2;
  std::size_t max_run = 5;
  double noise = 0.3;
  std::size_t feature_dim = 16;
  std::size_t alphabet = 28;
  // Prototypes depend only on this seed, so splits drawn with different
  // sample seeds share the same character inventory.
  std::uint64_t prototype_seed = 1234;
  // Runs of one character are indistinguishable from a repeated character,
  // so adjacent repeats are off unless asked for.
  bool adjacent_repeats = false;

  std::size_t vocab() const { return alphabet + 1; }
  void validate() const;
};

struct LabeledSequence {
  Tensor features;  // [T×feature_dim]
  std::vector<int> labels;
  std::size_t valid_length = 0;
};

using Dataset = std::vector<LabeledSequence>;

// [alphabet×feature_dim]; row c−1 is the prototype of character c.
Tensor make_prototypes(const DatasetSpec& spec);
Dataset make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Snapshot file: magic, JSON header (spec + seed), then per sample
// T, d, T·d little-endian doubles, label count, int32 labels.
struct DatasetSnapshot {
  DatasetSpec spec;
  std::uint64_t seed = 0;
  std::string split;
  Dataset samples;
};

void save_dataset(const std::string& path, const DatasetSnapshot& snapshot);
DatasetSnapshot load_dataset(const std::string& path);

}  // namespace wsm
