#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "wsm/checkpoint.hpp"
#include "wsm/encoder.hpp"
#include "wsm/errors.hpp"
#include "wsm/gradcheck.hpp"
#include "wsm/optim.hpp"

using namespace wsm;
using wsm::test::random_tensor;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.d_in = 6;
  c.d_model = 16;
  c.layers = 4;
  c.heads = 2;
  c.d_ff = 24;
  c.vocab = 7;
  return c;
}

MixingConfig summary_config() {
  MixingConfig m;
  m.d_summary = 16;
  m.window_k = 2;
  m.dropout = 0.0;
  return m;
}

bool same_values(const ParamRefs& a, const ParamRefs& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->name != b[i]->name || !bit_equal(a[i]->value, b[i]->value)) return false;
  }
  return true;
}

ParamRefs params_of(EncoderStack& s) {
  ParamRefs out;
  s.collect(out);
  return out;
}

ParamRefs params_of(EncoderLayer& l) {
  ParamRefs out;
  l.collect(out);
  return out;
}

ParamRefs params_of(MixingBlock& b) {
  ParamRefs out;
  b.collect(out);
  return out;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("same seed gives bit-identical stacks") {
  auto a = build_pretrained_stack(small_encoder(), 42, false);
  auto b = build_pretrained_stack(small_encoder(), 42, false);
  CHECK(same_values(params_of(a.stack), params_of(b.stack)));
  WarmupOptions quick;
  quick.steps = 3;
  quick.train_samples = 16;
  quick.heldout_samples = 8;
  auto c = build_pretrained_stack(small_encoder(), 42, true, quick);
  auto d = build_pretrained_stack(small_encoder(), 42, true, quick);
  CHECK(same_values(params_of(c.stack), params_of(d.stack)));
  CHECK_FALSE(same_values(params_of(a.stack), params_of(c.stack)));
}

TEST_CASE("L=4, d=32 stack exposes 5 outputs of T×d") {
  EncoderConfig c = small_encoder();
  c.d_model = 32;
  Rng rng(1);
  EncoderStack stack(c, rng);
  Tape tape(false);
  auto outs = stack.forward_features(tape, tape.constant(random_tensor({20, c.d_in}, rng)), 20, ForwardContext{});
  REQUIRE(outs.size() == 5);
  for (const auto& o : outs) CHECK(o.shape() == Shape{20, 32});
}

TEST_CASE("warm-up reduces held-out reconstruction loss by at least 30%") {
  const auto p = build_pretrained_stack(EncoderConfig{}, 0, true);
  CHECK(p.recon_after <= 0.7 * p.recon_before);
}

TEST_CASE("plan validation") {
  CHECK_THROWS_AS((ReplacementPlan{5, PlanVariant::WSM, 0}.validate(4)), PlanError);
  CHECK_THROWS_AS((ReplacementPlan{2, PlanVariant::AllAttPT, 0}.validate(4)), PlanError);
  CHECK_NOTHROW((ReplacementPlan{4, PlanVariant::AllAttPT, 0}.validate(4)));
  for (auto v : {PlanVariant::SM, PlanVariant::WSM, PlanVariant::AttPT, PlanVariant::AttScratch, PlanVariant::AllAttPT}) {
    CHECK(parse_plan_variant(to_string(v)) == v);
  }
}

TEST_CASE("identity plan leaves only layer sum and head trainable") {
  auto p = build_pretrained_stack(small_encoder(), 3, false);
  FinetuneModel model(p.stack, {0, PlanVariant::WSM, 0}, summary_config(), 1);
  CHECK(same_values(params_of(model.stack), params_of(p.stack)));
  for (auto* q : params_of(model.stack)) CHECK_FALSE(q->trainable);
  CHECK(count_elements(trainable_parameters(model, model.plan)) == count_elements(head_group(model)));
}

TEST_CASE("Att-PT keeps pretrained weights but makes them trainable") {
  auto p = build_pretrained_stack(small_encoder(), 3, false);
  FinetuneModel model(p.stack, {2, PlanVariant::AttPT, 0}, summary_config(), 1);
  for (std::size_t i = 2; i < 4; ++i) {
    CHECK(same_values(params_of(model.stack.layers[i]), params_of(p.stack.layers[i])));
    for (auto* q : params_of(model.stack.layers[i])) CHECK(q->trainable);
  }
  for (auto* q : params_of(model.stack.layers[0])) CHECK_FALSE(q->trainable);
  FinetuneModel scratch(p.stack, {2, PlanVariant::AttScratch, 0}, summary_config(), 1);
  CHECK_FALSE(same_values(params_of(*scratch.stack.layers[3].mixer), params_of(*p.stack.layers[3].mixer)));
}

TEST_CASE("Att-PT without training reproduces the pretrained stack bit-exactly") {
  auto p = build_pretrained_stack(small_encoder(), 4, false);
  FinetuneModel model(p.stack, {2, PlanVariant::AttPT, 0}, summary_config(), 1);
  Rng rng(2);
  const Tensor x = random_tensor({15, 6}, rng);
  Tape a(false), b(false);
  auto ref = p.stack.forward_features(a, a.constant(x), 13, ForwardContext{});
  auto got = model.stack.forward_features(b, b.constant(x), 13, ForwardContext{});
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(bit_equal(ref[i].value(), got[i].value()));
}

TEST_CASE("trainable counts: WSM plan and the SM/WSM difference") {
  auto p = build_pretrained_stack(small_encoder(), 5, false);
  const MixingConfig m = summary_config();
  FinetuneModel wsm(p.stack, {2, PlanVariant::WSM, 0}, m, 1);
  FinetuneModel sm(p.stack, {2, PlanVariant::SM, 0}, m, 1);
  const std::size_t one_layer = count_elements(params_of(wsm.stack.layers[3]));
  CHECK(count_elements(trainable_parameters(wsm, wsm.plan)) == 2 * one_layer + count_elements(head_group(wsm)));
  const std::size_t diff = count_elements(trainable_parameters(wsm, wsm.plan)) -
                           count_elements(trainable_parameters(sm, sm.plan));
  CHECK(diff == 2 * m.d_summary * small_encoder().d_model);
}

TEST_CASE("weighted layer sum: average, saturation, mismatch") {
  Rng rng(6);
  std::vector<Tensor> layers;
  for (int i = 0; i < 3; ++i) layers.push_back(random_tensor({4, 5}, rng));
  WeightedLayerSum wls(3);
  Tape tape(false);
  std::vector<Var> vars;
  for (const auto& l : layers) vars.push_back(tape.constant(l));
  const Tensor avg = wls.aggregate(tape, vars).value();
  for (std::size_t i = 0; i < avg.size(); ++i) {
    CHECK(std::abs(avg[i] - (layers[0][i] + layers[1][i] + layers[2][i]) / 3.0) <= 1e-15);
  }
  wls.logits.value[1] = 1e6;
  CHECK(max_abs_diff(wls.aggregate(tape, vars).value(), layers[1]) <= 1e-9);
  vars.pop_back();
  CHECK_THROWS_AS(wls.aggregate(tape, vars), ContractError);
}

TEST_CASE("gradient check through layer sum and head") {
  Rng rng(7);
  WeightedLayerSum wls(3);
  wls.logits.value = random_tensor({3}, rng);
  PredictionHead head(5, 4, rng);
  std::vector<Tensor> layers;
  for (int i = 0; i < 3; ++i) layers.push_back(random_tensor({6, 5}, rng));
  const Tensor w = random_tensor({6, 4}, rng);
  LossFn loss = [&](Tape& t) {
    std::vector<Var> vars;
    for (const auto& l : layers) vars.push_back(t.constant(l));
    return test::readout(t, head.forward(t, wls.aggregate(t, vars)), w);
  };
  ParamRefs params;
  wls.collect(params);
  head.collect(params);
  for (auto* p : params) CHECK(finite_diff_check(loss, *p) < 1e-4);
}

TEST_CASE("backward populates only trainable parameters") {
  auto p = build_pretrained_stack(small_encoder(), 8, false);
  Rng rng(9);
  const Tensor x = random_tensor({12, 6}, rng);
  const Tensor w = random_tensor({12, 7}, rng);
  for (auto v : {PlanVariant::SM, PlanVariant::WSM, PlanVariant::AttPT, PlanVariant::AttScratch}) {
    for (std::size_t n : {0u, 1u, 3u}) {
      FinetuneModel model(p.stack, {n, v, 0}, summary_config(), 1);
      for (auto* q : model.all_parameters()) q->zero_grad();
      Tape tape;
      tape.backward(test::readout(tape, model.forward(tape, tape.constant(x), 12, ForwardContext{}), w));
      const ParamRefs trainable = trainable_parameters(model, model.plan);
      for (auto* q : model.all_parameters()) {
        const bool is_trainable = std::find(trainable.begin(), trainable.end(), q) != trainable.end();
        CHECK(q->trainable == is_trainable);
        if (!is_trainable) CHECK(bit_equal(q->grad, Tensor(q->value.shape())));
      }
    }
  }
}

TEST_CASE("frozen prefix outputs are identical across variants") {
  auto p = build_pretrained_stack(small_encoder(), 10, false);
  Rng rng(11);
  const Tensor x = random_tensor({9, 6}, rng);
  FinetuneModel sm(p.stack, {2, PlanVariant::SM, 3}, summary_config(), 1);
  FinetuneModel wsm(p.stack, {2, PlanVariant::WSM, 3}, summary_config(), 1);
  const auto a = sm.frozen_features(x, 9), b = wsm.frozen_features(x, 9);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i], b[i]));
}

TEST_CASE("cached frozen prefix reproduces the full forward pass") {
  auto p = build_pretrained_stack(small_encoder(), 12, false);
  Rng rng(13);
  const Tensor x = random_tensor({11, 6}, rng);
  FinetuneModel model(p.stack, {2, PlanVariant::WSM, 0}, summary_config(), 1);
  Tape a(false), b(false);
  const Tensor full = model.forward(a, a.constant(x), 8, ForwardContext{}).value();
  const Tensor cached = model.forward_from_frozen(b, model.frozen_features(x, 8), 8, ForwardContext{}).value();
  CHECK(bit_equal(full, cached));
}

TEST_CASE("layer-sum weights stay a probability vector under Adam") {
  WeightedLayerSum wls(5);
  Rng rng(14);
  std::vector<Tensor> layers;
  for (int i = 0; i < 5; ++i) layers.push_back(random_tensor({3, 2}, rng));
  Adam adam({{"head", 0.5, {&wls.logits}}}, {&wls.logits});
  for (int step = 0; step < 500; ++step) {
    adam.zero_grad();
    Tape tape;
    std::vector<Var> vars;
    for (const auto& l : layers) vars.push_back(tape.constant(l));
    tape.backward(sum_squares(wls.aggregate(tape, vars)));
    adam.step();
  }
  Tape tape(false);
  const Tensor w = wls.weights(tape).value();
  double s = 0.0;
  for (double v : w.data()) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) <= 1e-12);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  auto p = build_pretrained_stack(small_encoder(), 15, false);
  FinetuneModel model(p.stack, {2, PlanVariant::WSM, 7}, summary_config(), 3);
  Rng rng(16);
  for (auto* q : trainable_parameters(model, model.plan)) {
    for (auto& v : q->value.data()) v += 0.01 * std::normal_distribution<double>()(rng);
  }
  const auto path = (std::filesystem::temp_directory_path() / "wsm_unit.ckpt").string();
  save_checkpoint(path, model, {{"note", "unit"}});
  auto loaded = load_checkpoint(path);
  CHECK(loaded.extra.at("note") == "unit");
  CHECK(same_values(loaded.model.all_parameters(), model.all_parameters()));
  for (int i = 0; i < 10; ++i) {
    const std::size_t T = 3 + rng() % 20;
    const Tensor x = random_tensor({T, 6}, rng);
    Tape a(false), b(false);
    CHECK(bit_equal(model.forward(a, a.constant(x), T, ForwardContext{}).value(),
                    loaded.model.forward(b, b.constant(x), T, ForwardContext{}).value()));
  }
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto path = (std::filesystem::temp_directory_path() / "wsm_bad.ckpt").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOTACKPT", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::remove(path.c_str());
}

}  // TEST_SUITE
