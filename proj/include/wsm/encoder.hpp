#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wsm/autograd.hpp"
#include "wsm/mixing.hpp"

namespace wsm {

struct EncoderConfig {
  std::size_t d_in = 16;
  std::size_t d_model = 64;
  std::size_t layers = 6;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  std::size_t vocab = 29;

  void validate() const;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t width);

  Parameter gain;
  Parameter bias;

  Var operator()(Tape& tape, const Var& x);
  void collect(ParamRefs& out);
};

// Pre-norm transformer layer: x + mix(LN(x)), then + FFN(LN(·)).
class EncoderLayer {
 public:
  EncoderLayer(const std::string& name, const EncoderConfig& config,
               std::unique_ptr<MixingBlock> mixer, Rng& rng);
  EncoderLayer(const EncoderLayer& other);
  EncoderLayer& operator=(const EncoderLayer& other);
  EncoderLayer(EncoderLayer&&) noexcept = default;
  EncoderLayer& operator=(EncoderLayer&&) noexcept = default;

  Var forward(Tape& tape, const Var& x, std::size_t valid, const ForwardContext& ctx);
  void collect(ParamRefs& out);
  void set_trainable(bool trainable);

  std::string name;
  LayerNorm norm_mix;
  std::unique_ptr<MixingBlock> mixer;
  LayerNorm norm_ff;
  Dense ff_in;
  Dense ff_out;
};

class EncoderStack {
 public:
  // Attention-based stack with fresh weights drawn from `rng`.
  EncoderStack(const EncoderConfig& config, Rng& rng);

  Var embed(Tape& tape, const Var& x, std::size_t valid);
  // Embedding output followed by every layer output: L+1 tensors [T×d_model].
  std::vector<Var> forward_features(Tape& tape, const Var& x, std::size_t valid,
                                    const ForwardContext& ctx);
  void collect(ParamRefs& out);
  void set_trainable(bool trainable);

  EncoderConfig config;
  Dense embedding;
  std::vector<EncoderLayer> layers;
};

struct WarmupOptions {
  std::size_t steps = 150;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double mask_prob = 0.15;
  std::size_t train_samples = 256;
  std::size_t heldout_samples = 64;
};

struct PretrainedStack {
  EncoderStack stack;
  double recon_before = 0.0;  // held-out reconstruction loss at initialization
  double recon_after = 0.0;   // after warm-up (== recon_before when skipped)
};

// Deterministic attention stack. With warm-up, the weights are seasoned by a
// masked-frame reconstruction objective on synthetic frames.
PretrainedStack build_pretrained_stack(const EncoderConfig& config, std::uint64_t seed,
                                       bool warmup = true, const WarmupOptions& options = {});

enum class PlanVariant { SM, WSM, AttPT, AttScratch, AllAttPT };

std::string to_string(PlanVariant v);
PlanVariant parse_plan_variant(const std::string& s);

struct ReplacementPlan {
  std::size_t replace_last_n = 0;
  PlanVariant variant = PlanVariant::WSM;
  std::uint64_t seed = 0;

  void validate(std::size_t layers) const;
  std::size_t first_replaced(std::size_t layers) const { return layers - replace_last_n; }
};

// Copies `stack`, swaps the mixing blocks of the last n layers per the plan
// and sets trainability: replaced layers (mixer, norms, FFN) trainable,
// everything else frozen. `summary` supplies d_summary, window and boundary
// settings for SM/WSM.
EncoderStack apply_replacement(const EncoderStack& stack, const ReplacementPlan& plan,
                               const MixingConfig& summary);

// Softmax-weighted combination of the L+1 layer outputs.
struct WeightedLayerSum {
  WeightedLayerSum() = default;
  explicit WeightedLayerSum(std::size_t count);

  Parameter logits;

  Var weights(Tape& tape);
  Var aggregate(Tape& tape, const std::vector<Var>& layer_outputs);
  void collect(ParamRefs& out) { out.push_back(&logits); }
};

// Two affine layers with GeLU between; emits per-frame log-probabilities.
struct PredictionHead {
  PredictionHead() = default;
  PredictionHead(std::size_t d_model, std::size_t vocab, Rng& rng);

  Dense hidden;
  Dense output;

  Var forward(Tape& tape, const Var& x);
  void collect(ParamRefs& out);
};

// Encoder (with replacement applied) + weighted layer sum + head.
class FinetuneModel {
 public:
  FinetuneModel(const EncoderStack& pretrained, const ReplacementPlan& plan,
                const MixingConfig& summary, std::uint64_t head_seed);

  // Per-frame log-probabilities [T×vocab].
  Var forward(Tape& tape, const Var& x, std::size_t valid, const ForwardContext& ctx);

  // Values of the frozen prefix (embedding and frozen layer outputs); these do
  // not change during fine-tuning.
  std::vector<Tensor> frozen_features(const Tensor& x, std::size_t valid);
  // forward() given frozen_features() of the same input, possibly zero-padded
  // to more rows.
  Var forward_from_frozen(Tape& tape, const std::vector<Tensor>& frozen, std::size_t valid,
                          const ForwardContext& ctx);

  ParamRefs all_parameters();

  EncoderStack stack;
  WeightedLayerSum layer_sum;
  PredictionHead head;
  ReplacementPlan plan;
  MixingConfig summary;
  std::uint64_t head_seed;
};

// Replaced-layer parameters ∪ weighted-sum logits ∪ head parameters.
ParamRefs trainable_parameters(FinetuneModel& model, const ReplacementPlan& plan);
// Optimizer groups: {layer sum + head} and {replaced layers}.
ParamRefs head_group(FinetuneModel& model);
ParamRefs replaced_group(FinetuneModel& model, const ReplacementPlan& plan);

std::size_t count_elements(const ParamRefs& params);

}  // namespace wsm
