#include "wsm/encoder.hpp"

#include <random>

#include "wsm/data.hpp"
#include "wsm/errors.hpp"
#include "wsm/optim.hpp"

namespace wsm {

void EncoderConfig::validate() const {
  if (d_in < 1 || d_model < 1 || d_ff < 1 || vocab < 2) throw ConfigError("encoder widths must be positive");
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (heads < 1 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

LayerNorm::LayerNorm(const std::string& name, std::size_t width)
    : gain(name + ".gain", Tensor({width}, 1.0)), bias(name + ".bias", Tensor({width})) {}

Var LayerNorm::operator()(Tape& tape, const Var& x) {
  return layer_norm(x, tape.param(gain), tape.param(bias));
}

void LayerNorm::collect(ParamRefs& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

EncoderLayer::EncoderLayer(const std::string& name_, const EncoderConfig& config,
                           std::unique_ptr<MixingBlock> mixer_, Rng& rng)
    : name(name_),
      norm_mix(name_ + ".norm_mix", config.d_model),
      mixer(std::move(mixer_)),
      norm_ff(name_ + ".norm_ff", config.d_model),
      ff_in(name_ + ".ff_in", config.d_model, config.d_ff, rng),
      ff_out(name_ + ".ff_out", config.d_ff, config.d_model, rng) {}

EncoderLayer::EncoderLayer(const EncoderLayer& other)
    : name(other.name),
      norm_mix(other.norm_mix),
      mixer(other.mixer->clone()),
      norm_ff(other.norm_ff),
      ff_in(other.ff_in),
      ff_out(other.ff_out) {}

EncoderLayer& EncoderLayer::operator=(const EncoderLayer& other) {
  if (this != &other) *this = EncoderLayer(other);
  return *this;
}

Var EncoderLayer::forward(Tape& tape, const Var& x, std::size_t valid, const ForwardContext& ctx) {
  Var mixed = add(x, mixer->forward(tape, norm_mix(tape, x), valid, ctx));
  Var ff = ff_out(tape, gelu(ff_in(tape, norm_ff(tape, mixed))));
  return mask_rows(add(mixed, ff), valid);
}

void EncoderLayer::collect(ParamRefs& out) {
  norm_mix.collect(out);
  mixer->collect(out);
  norm_ff.collect(out);
  ff_in.collect(out);
  ff_out.collect(out);
}

void EncoderLayer::set_trainable(bool trainable) {
  ParamRefs refs;
  collect(refs);
  for (auto* p : refs) p->trainable = trainable;
}

EncoderStack::EncoderStack(const EncoderConfig& config_, Rng& rng) : config(config_) {
  config.validate();
  embedding = Dense("embedding", config.d_in, config.d_model, rng);
  MixingConfig attn;
  attn.d_model = config.d_model;
  attn.heads = config.heads;
  attn.variant = Variant::Attention;
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string name = "layers." + std::to_string(i);
    auto block = std::make_unique<AttentionBlock>(name + ".mixer", attn, rng);
    layers.emplace_back(name, config, std::move(block), rng);
  }
}

Var EncoderStack::embed(Tape& tape, const Var& x, std::size_t valid) {
  if (x.value().rank() != 2 || x.cols() != config.d_in) {
    throw DimensionError("encoder expects features [T×" + std::to_string(config.d_in) + "], got " +
                         to_string(x.shape()));
  }
  if (valid < 1 || valid > x.rows()) {
    throw ContractError("valid length " + std::to_string(valid) + " outside [1, " +
                        std::to_string(x.rows()) + "]");
  }
  return mask_rows(embedding(tape, x), valid);
}

std::vector<Var> EncoderStack::forward_features(Tape& tape, const Var& x, std::size_t valid,
                                                const ForwardContext& ctx) {
  std::vector<Var> outs;
  outs.reserve(layers.size() + 1);
  outs.push_back(embed(tape, x, valid));
  for (auto& layer : layers) outs.push_back(layer.forward(tape, outs.back(), valid, ctx));
  return outs;
}

void EncoderStack::collect(ParamRefs& out) {
  embedding.collect(out);
  for (auto& l : layers) l.collect(out);
}

void EncoderStack::set_trainable(bool trainable) {
  ParamRefs refs;
  collect(refs);
  for (auto* p : refs) p->trainable = trainable;
}

namespace {

Var reconstruction_loss(Tape& tape, EncoderStack& stack, Dense& recon,
                        const LabeledSequence& sample, double mask_prob, Rng& mask_rng) {
  Tensor corrupted = sample.features;
  std::bernoulli_distribution masked(mask_prob);
  for (std::size_t t = 0; t < corrupted.rows(); ++t) {
    if (masked(mask_rng)) std::fill_n(corrupted.row(t), corrupted.cols(), 0.0);
  }
  const ForwardContext eval;
  auto feats = stack.forward_features(tape, tape.constant(std::move(corrupted)),
                                      sample.valid_length, eval);
  Var err = sub(recon(tape, feats.back()), tape.constant(sample.features));
  return scale(sum_squares(err), 1.0 / static_cast<double>(sample.features.size()));
}

double heldout_reconstruction(EncoderStack& stack, Dense& recon, const Dataset& data,
                              double mask_prob, std::uint64_t seed) {
  Rng mask_rng(seed);
  double total = 0.0;
  for (const auto& s : data) {
    Tape tape(false);
    total += reconstruction_loss(tape, stack, recon, s, mask_prob, mask_rng).value().item();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

PretrainedStack build_pretrained_stack(const EncoderConfig& config, std::uint64_t seed, bool warmup,
                                       const WarmupOptions& options) {
  Rng rng(seed);
  PretrainedStack out{EncoderStack(config, rng)};
  EncoderStack& stack = out.stack;
  if (warmup && options.steps > 0) {
    DatasetSpec spec;
    spec.feature_dim = config.d_in;
    spec.alphabet = config.vocab - 1;
    spec.n = options.train_samples;
    const Dataset train = make_synthetic_dataset(spec, seed + 101);
    spec.n = options.heldout_samples;
    const Dataset heldout = make_synthetic_dataset(spec, seed + 202);

    Dense recon("warmup.recon", config.d_model, config.d_in, rng);
    stack.set_trainable(true);
    ParamRefs params;
    stack.collect(params);
    recon.collect(params);
    Adam adam({ParamGroup{"warmup", options.lr, params}}, params);

    const std::uint64_t eval_seed = seed + 303;
    out.recon_before = heldout_reconstruction(stack, recon, heldout, options.mask_prob, eval_seed);
    Rng mask_rng(seed + 404);
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    for (std::size_t step = 0; step < options.steps; ++step) {
      adam.zero_grad();
      Tape tape;
      Var total;
      for (std::size_t b = 0; b < options.batch_size; ++b) {
        Var l = reconstruction_loss(tape, stack, recon, train[pick(rng)], options.mask_prob, mask_rng);
        total = total.defined() ? add(total, l) : l;
      }
      tape.backward(scale(total, 1.0 / static_cast<double>(options.batch_size)));
      adam.step();
    }
    out.recon_after = heldout_reconstruction(stack, recon, heldout, options.mask_prob, eval_seed);
  } else {
    Dense recon("warmup.recon", config.d_model, config.d_in, rng);
    DatasetSpec spec;
    spec.n = options.heldout_samples;
    spec.feature_dim = config.d_in;
    spec.alphabet = config.vocab - 1;
    const Dataset heldout = make_synthetic_dataset(spec, seed + 202);
    out.recon_before = heldout_reconstruction(stack, recon, heldout, options.mask_prob, seed + 303);
    out.recon_after = out.recon_before;
  }
  stack.set_trainable(false);
  return out;
}

std::string to_string(PlanVariant v) {
  switch (v) {
    case PlanVariant::SM: return "SM";
    case PlanVariant::WSM: return "WSM";
    case PlanVariant::AttPT: return "Att-PT";
    case PlanVariant::AttScratch: return "Att-scratch";
    case PlanVariant::AllAttPT: return "All-Att-PT";
  }
  return "?";
}

PlanVariant parse_plan_variant(const std::string& s) {
  if (s == "SM") return PlanVariant::SM;
  if (s == "WSM") return PlanVariant::WSM;
  if (s == "Att-PT") return PlanVariant::AttPT;
  if (s == "Att-scratch") return PlanVariant::AttScratch;
  if (s == "All-Att-PT") return PlanVariant::AllAttPT;
  throw ConfigError("unknown replacement variant '" + s +
                    "' (expected SM, WSM, Att-PT, Att-scratch or All-Att-PT)");
}

void ReplacementPlan::validate(std::size_t layers) const {
  if (replace_last_n > layers) {
    throw PlanError("cannot replace the last " + std::to_string(replace_last_n) + " of " +
                    std::to_string(layers) + " layers");
  }
  if (variant == PlanVariant::AllAttPT && replace_last_n != layers) {
    throw PlanError("All-Att-PT must cover all " + std::to_string(layers) + " layers");
  }
}

EncoderStack apply_replacement(const EncoderStack& stack, const ReplacementPlan& plan,
                               const MixingConfig& summary) {
  const std::size_t L = stack.layers.size();
  plan.validate(L);
  EncoderStack out = stack;
  out.set_trainable(false);
  for (std::size_t i = plan.first_replaced(L); i < L; ++i) {
    EncoderLayer& layer = out.layers[i];
    std::seed_seq seq{plan.seed, static_cast<std::uint64_t>(i)};
    Rng rng(seq);
    MixingConfig cfg = summary;
    cfg.d_model = stack.config.d_model;
    cfg.heads = stack.config.heads;
    switch (plan.variant) {
      case PlanVariant::SM:
        cfg.variant = Variant::SM;
        layer.mixer = std::make_unique<SummaryMixingBlock>(layer.name + ".mixer", cfg, rng);
        break;
      case PlanVariant::WSM:
        cfg.variant = Variant::WSM;
        layer.mixer = std::make_unique<SummaryMixingBlock>(layer.name + ".mixer", cfg, rng);
        break;
      case PlanVariant::AttScratch:
        cfg.variant = Variant::Attention;
        layer.mixer = std::make_unique<AttentionBlock>(layer.name + ".mixer", cfg, rng);
        break;
      case PlanVariant::AttPT:
      case PlanVariant::AllAttPT:
        break;
    }
    layer.set_trainable(true);
  }
  return out;
}

WeightedLayerSum::WeightedLayerSum(std::size_t count) : logits("layer_sum.logits", Tensor({count})) {}

Var WeightedLayerSum::weights(Tape& tape) { return softmax(tape.param(logits), 0); }

Var WeightedLayerSum::aggregate(Tape& tape, const std::vector<Var>& layer_outputs) {
  if (layer_outputs.size() != logits.value.size()) {
    throw ContractError("weighted layer sum expects " + std::to_string(logits.value.size()) +
                        " layer outputs, got " + std::to_string(layer_outputs.size()));
  }
  return weighted_sum(layer_outputs, weights(tape));
}

PredictionHead::PredictionHead(std::size_t d_model, std::size_t vocab, Rng& rng)
    : hidden("head.hidden", d_model, d_model, rng), output("head.output", d_model, vocab, rng) {}

Var PredictionHead::forward(Tape& tape, const Var& x) {
  return log_softmax(output(tape, gelu(hidden(tape, x))));
}

void PredictionHead::collect(ParamRefs& out) {
  hidden.collect(out);
  output.collect(out);
}

FinetuneModel::FinetuneModel(const EncoderStack& pretrained, const ReplacementPlan& plan_,
                             const MixingConfig& summary_, std::uint64_t head_seed_)
    : stack(apply_replacement(pretrained, plan_, summary_)),
      layer_sum(pretrained.layers.size() + 1),
      plan(plan_),
      summary(summary_),
      head_seed(head_seed_) {
  Rng rng(head_seed);
  head = PredictionHead(stack.config.d_model, stack.config.vocab, rng);
}

Var FinetuneModel::forward(Tape& tape, const Var& x, std::size_t valid, const ForwardContext& ctx) {
  return head.forward(tape, layer_sum.aggregate(tape, stack.forward_features(tape, x, valid, ctx)));
}

std::vector<Tensor> FinetuneModel::frozen_features(const Tensor& x, std::size_t valid) {
  Tape tape(false);
  const ForwardContext eval;
  const std::size_t first = plan.first_replaced(stack.layers.size());
  std::vector<Tensor> out;
  Var h = stack.embed(tape, tape.constant(x), valid);
  out.push_back(h.value());
  for (std::size_t i = 0; i < first; ++i) {
    h = stack.layers[i].forward(tape, h, valid, eval);
    out.push_back(h.value());
  }
  return out;
}

Var FinetuneModel::forward_from_frozen(Tape& tape, const std::vector<Tensor>& frozen,
                                       std::size_t valid, const ForwardContext& ctx) {
  const std::size_t L = stack.layers.size();
  const std::size_t first = plan.first_replaced(L);
  if (frozen.size() != first + 1) {
    throw ContractError("expected " + std::to_string(first + 1) + " frozen feature maps, got " +
                        std::to_string(frozen.size()));
  }
  std::vector<Var> outs;
  outs.reserve(L + 1);
  for (const auto& f : frozen) outs.push_back(tape.constant(f));
  for (std::size_t i = first; i < L; ++i) {
    outs.push_back(stack.layers[i].forward(tape, outs.back(), valid, ctx));
  }
  return head.forward(tape, layer_sum.aggregate(tape, outs));
}

ParamRefs FinetuneModel::all_parameters() {
  ParamRefs out;
  stack.collect(out);
  layer_sum.collect(out);
  head.collect(out);
  return out;
}

ParamRefs head_group(FinetuneModel& model) {
  ParamRefs out;
  model.layer_sum.collect(out);
  model.head.collect(out);
  return out;
}

ParamRefs replaced_group(FinetuneModel& model, const ReplacementPlan& plan) {
  const std::size_t L = model.stack.layers.size();
  plan.validate(L);
  ParamRefs out;
  for (std::size_t i = plan.first_replaced(L); i < L; ++i) model.stack.layers[i].collect(out);
  return out;
}

ParamRefs trainable_parameters(FinetuneModel& model, const ReplacementPlan& plan) {
  ParamRefs out = replaced_group(model, plan);
  for (auto* p : head_group(model)) out.push_back(p);
  return out;
}

std::size_t count_elements(const ParamRefs& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

}  // namespace wsm
