#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wsm/autograd.hpp"

namespace wsm {

enum class Variant { SM, WSM, Attention };
enum class BoundaryMode { ZeroPad, ValidCount };

std::string to_string(Variant v);
std::string to_string(BoundaryMode m);
Variant parse_variant(const std::string& s);
BoundaryMode parse_boundary(const std::string& s);

struct MixingConfig {
  std::size_t d_model = 64;
  std::size_t d_summary = 64;
  std::size_t window_k = 5;
  BoundaryMode boundary = BoundaryMode::ValidCount;
  Variant variant = Variant::WSM;
  std::size_t heads = 4;
  // One summary transform feeds both the global and the windowed pooling.
  bool share_summary = true;
  double dropout = 0.1;

  std::size_t window_length() const { return 2 * window_k + 1; }
  void validate() const;
};

// Valid frame counts of the sequences in a padded batch.
struct SequenceMask {
  std::vector<std::size_t> valid_lengths;

  static SequenceMask full(std::size_t batch, std::size_t frames);
  void validate(std::size_t padded_frames) const;
};

// Affine layer x·W + b.
struct Dense {
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Parameter weight;
  Parameter bias;

  Var operator()(Tape& tape, const Var& x);
  void collect(ParamRefs& out);
  std::size_t in() const { return weight.value.dim(0); }
  std::size_t out() const { return weight.value.dim(1); }
};

// Mean over the first `valid` rows as a [1×d] row.
Var masked_mean_rows(const Var& x, std::size_t valid);

// Sliding-window mean over rows j ∈ [t−k, t+k] for each valid row t, via
// prefix sums (O(T·d)). Rows past `valid` are excluded from every window and
// produce zeros. ZeroPad divides by 2k+1; ValidCount by the in-range count.
Tensor sliding_window_mean(const Tensor& x, std::size_t valid, std::size_t k, BoundaryMode mode);
Var windowed_mean(const Var& x, std::size_t valid, std::size_t k, BoundaryMode mode);

// Multi-head scaled dot-product attention over projected Q, K, V [T×d].
// Keys past `valid` are masked out; query rows past `valid` are zero.
// While recording, the [heads×valid×valid] probabilities are kept for
// backward; otherwise rows are computed one at a time.
Var attention_core(const Var& q, const Var& k, const Var& v, std::size_t heads, std::size_t valid);

class MixingBlock {
 public:
  virtual ~MixingBlock() = default;

  // H: [T×d_model] → Y: [T×d_model]; rows past `valid` are zero.
  virtual Var forward(Tape& tape, const Var& h, std::size_t valid, const ForwardContext& ctx) = 0;
  virtual void collect(ParamRefs& out) = 0;
  virtual std::unique_ptr<MixingBlock> clone() const = 0;
  virtual Variant variant() const = 0;
  virtual const MixingConfig& config() const = 0;
};

// SummaryMixing (SM) and Windowed SummaryMixing (WSM):
//   s_g   = mean_t ff_summary(h_t)
//   s_w_t = window mean of ff_summary(h_j), j ∈ [t−k, t+k]     (WSM only)
//   y_t   = ff_out(concat(ff_local(h_t), s_g[, s_w_t]))
// ff_local and ff_summary are Dense+GeLU; ff_out is Dense+GeLU+dropout.
class SummaryMixingBlock final : public MixingBlock {
 public:
  SummaryMixingBlock(const std::string& name, const MixingConfig& config, Rng& rng);

  Var forward(Tape& tape, const Var& h, std::size_t valid, const ForwardContext& ctx) override;
  void collect(ParamRefs& out) override;
  std::unique_ptr<MixingBlock> clone() const override;
  Variant variant() const override { return config_.variant; }
  const MixingConfig& config() const override { return config_; }

  Var local_features(Tape& tape, const Var& h);
  Var summary_features(Tape& tape, const Var& h);
  Var window_features(Tape& tape, const Var& h);
  Var global_summary(Tape& tape, const Var& h, std::size_t valid);
  Var windowed_summary(Tape& tape, const Var& h, std::size_t valid);
  // ff_out over concat(local, broadcast(s_g)[, s_w]); pass an empty Var for
  // s_w in SM mode.
  Var combine(Tape& tape, const Var& local, const Var& s_g, const Var& s_w, std::size_t valid,
              const ForwardContext& ctx);

  Dense ff_local;
  Dense ff_summary;
  Dense ff_window;  // only used when !share_summary
  Dense ff_out;

 private:
  MixingConfig config_;
};

class AttentionBlock final : public MixingBlock {
 public:
  AttentionBlock(const std::string& name, const MixingConfig& config, Rng& rng);

  Var forward(Tape& tape, const Var& h, std::size_t valid, const ForwardContext& ctx) override;
  void collect(ParamRefs& out) override;
  std::unique_ptr<MixingBlock> clone() const override;
  Variant variant() const override { return Variant::Attention; }
  const MixingConfig& config() const override { return config_; }

  Dense query, key, value, output;

 private:
  MixingConfig config_;
};

std::unique_ptr<MixingBlock> make_mixing_block(const std::string& name, const MixingConfig& config,
                                               Rng& rng);

std::size_t parameter_count(MixingBlock& block);

}  // namespace wsm
