#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wsm/mixing.hpp"

namespace wsm {

struct BenchSpec {
  std::vector<Variant> variants{Variant::SM, Variant::WSM, Variant::Attention};
  // Frame counts; 256..16384 doubling by default.
  std::vector<std::size_t> lengths{256, 512, 1024, 2048, 4096, 8192, 16384};
  std::size_t repeats = 5;
  std::size_t d_model = 64;
  std::size_t window_k = 5;
  std::size_t heads = 4;
  std::uint64_t seed = 0;

  void validate() const;
  MixingConfig mixing(Variant v) const;
};

struct BenchRecord {
  Variant variant = Variant::WSM;
  std::size_t T = 0;
  double median_ns = 0.0;
  std::uint64_t macs = 0;
  std::size_t peak_bytes = 0;
  bool skipped = false;
};

// Forward-only, untaped passes of one mixing block per (variant, T) with
// batch size 1: one warm-up pass, then the median of `repeats` timings.
// Lengths that run out of memory are recorded as skipped.
std::vector<BenchRecord> run_scaling_bench(const BenchSpec& spec, std::ostream* log = nullptr);

// Least-squares slope of log(time) against log(T) over the largest four
// non-skipped lengths of `variant`. Throws FitError with fewer than four.
double fit_loglog_slope(const std::vector<BenchRecord>& records, Variant variant);

// Saved-activation bytes of one taped forward pass of the block: the values
// every recorded node retains. Attention keeps [heads×T×T] probabilities;
// SM and WSM keep only [T×d]-sized intermediates.
std::size_t peak_activation_memory(Variant variant, std::size_t T, const MixingConfig& config);

// Allocator high-water mark above the input while a taped forward pass of a
// freshly initialized block is alive.
std::size_t measure_activation_memory(Variant variant, std::size_t T, const MixingConfig& config,
                                      std::uint64_t seed = 0);

// variant,T,median_ns,macs,peak_bytes,skipped with '#' metadata lines first.
void write_bench_csv(std::ostream& os, const BenchSpec& spec, const std::vector<BenchRecord>& records);

std::string hardware_description();

}  // namespace wsm
