#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "wsm/checks.hpp"
#include "wsm/ctc.hpp"
#include "wsm/data.hpp"
#include "wsm/errors.hpp"
#include "wsm/gradcheck.hpp"
#include "wsm/optim.hpp"
#include "wsm/train.hpp"

using namespace wsm;
using wsm::test::random_tensor;

namespace {

Tensor log_softmax_rows(const Tensor& logits) {
  Tape tape(false);
  return log_softmax(tape.constant(logits)).value();
}

double ctc_value(const Tensor& lp, const std::vector<int>& labels, std::size_t valid = 0) {
  Tape tape(false);
  return ctc_loss(tape.constant(lp), labels, kBlank, valid).value().item();
}

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.d_in = 16;
  c.d_model = 32;
  c.layers = 4;
  c.heads = 4;
  c.d_ff = 64;
  c.vocab = 29;
  return c;
}

MixingConfig summary_for(const EncoderConfig& c) {
  MixingConfig m;
  m.d_model = c.d_model;
  m.d_summary = c.d_model;
  m.heads = c.heads;
  return m;
}

DatasetSpec small_data(std::size_t n) {
  DatasetSpec s;
  s.n = n;
  s.max_labels = 6;
  return s;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("CTC single frame, single label") {
  const Tensor lp({1, 2}, std::log(0.5));
  CHECK(std::abs(ctc_value(lp, {1}) - 0.693147) < 1e-6);
  CHECK(std::abs(ctc_value(lp, {1}) - std::log(2.0)) < 1e-15);
}

TEST_CASE("CTC repeated label needs a separating blank") {
  const Tensor lp({2, 3}, std::log(1.0 / 3.0));
  CHECK(ctc_min_frames(std::vector<int>{1, 1}) == 3);
  CHECK_THROWS_AS(ctc_value(lp, {1, 1}), InfeasibleTargetError);
  const Tensor lp3({3, 3}, std::log(1.0 / 3.0));
  CHECK(std::abs(ctc_value(lp3, {1, 1}) - 3.0 * std::log(3.0)) < 1e-12);
}

TEST_CASE("CTC matches enumeration at T=6, V=4") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const std::size_t L = rng() % 4;
    std::vector<int> labels(L);
    for (auto& l : labels) l = 1 + static_cast<int>(rng() % 3);
    const Tensor lp = log_softmax_rows(random_tensor({6, 4}, rng));
    const double oracle = checks::brute_force_ctc(lp, labels, kBlank);
    if (std::isinf(oracle)) continue;
    CHECK(std::abs(ctc_value(lp, labels) - oracle) <= 1e-9);
  }
}

TEST_CASE("CTC ignores frames past the valid length") {
  Rng rng(2);
  const Tensor lp = log_softmax_rows(random_tensor({9, 5}, rng));
  Tensor head({6, 5});
  std::copy_n(lp.data().data(), head.size(), head.data().data());
  const std::vector<int> labels{2, 4};
  CHECK(ctc_value(lp, labels, 6) == ctc_value(head, labels));
}

TEST_CASE("CTC is non-negative and zero when all mass is on the target") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Tensor lp = log_softmax_rows(random_tensor({7, 5}, rng, 3.0));
    CHECK(ctc_value(lp, {1, 3}) >= 0.0);
  }
  // Frames certain of blank, 2, 2, blank: the only path collapses to [2].
  Tensor lp({4, 3}, -800.0);
  lp(0, 0) = lp(1, 2) = lp(2, 2) = lp(3, 0) = 0.0;
  CHECK(ctc_value(lp, {2}) == 0.0);
}

TEST_CASE("CTC gradient check, T=5 with 3 labels") {
  Rng rng(4);
  Parameter logits("logits", random_tensor({5, 4}, rng));
  const std::vector<int> labels{1, 3, 2};
  LossFn loss = [&](Tape& t) { return ctc_loss(log_softmax(t.param(logits)), labels, kBlank); };
  CHECK(finite_diff_check(loss, logits) < 1e-4);
}

TEST_CASE("greedy decoding collapses repeats and drops blanks") {
  auto one_hot = [](const std::vector<int>& path) {
    Tensor lp({path.size(), 3}, -5.0);
    for (std::size_t t = 0; t < path.size(); ++t) lp(t, static_cast<std::size_t>(path[t])) = 0.0;
    return lp;
  };
  CHECK(greedy_decode(one_hot({1, 1, 0, 1}), kBlank) == std::vector<int>{1, 1});
  CHECK(greedy_decode(one_hot({0, 0, 0}), kBlank).empty());
  CHECK(greedy_decode(one_hot({2, 2, 1, 1}), kBlank, 2) == std::vector<int>{2});
}

TEST_CASE("edit distance") {
  CHECK(edit_distance(std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3}) == 0);
  CHECK(edit_distance(std::vector<int>{}, std::vector<int>{4, 5}) == 2);
  CHECK(edit_distance(std::vector<int>{1, 2, 3}, std::vector<int>{1, 3}) == 1);
  CHECK(edit_distance(std::vector<int>{1, 2}, std::vector<int>{2, 1}) == 2);
}

TEST_CASE("Adam grouping contract") {
  Parameter a("a", Tensor({2}, 1.0)), b("b", Tensor({2}, 1.0));
  CHECK_THROWS_AS(Adam({{"g", 1e-3, {&a}}}, {&a, &b}), GroupingError);
  CHECK_THROWS_AS(Adam({{"g", 1e-3, {&a}}, {"h", 1e-3, {&a, &b}}}, {&a, &b}), GroupingError);
  CHECK_THROWS_AS(Adam({{"g", 1e-3, {&a, &b}}}, {&a}), GroupingError);
  CHECK_NOTHROW(Adam({{"g", 1e-3, {&a}}, {"h", 3e-3, {&b}}}, {&a, &b}));
}

TEST_CASE("Adam first step moves each weight by about lr against its gradient") {
  Parameter a("a", Tensor::vector({1.0, -2.0})), b("b", Tensor::vector({0.5}));
  Adam adam({{"head", 1e-3, {&a}}, {"replaced", 3e-3, {&b}}}, {&a, &b});
  a.grad = Tensor::vector({4.0, -0.25});
  b.grad = Tensor::vector({2.0});
  adam.step();
  // m̂ = g and v̂ = g² after bias correction, so the step is lr·g/(|g|+ε).
  CHECK(a.value[0] == doctest::Approx(1.0 - 1e-3 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
  CHECK(a.value[1] == doctest::Approx(-2.0 + 1e-3 * 0.25 / (0.25 + 1e-8)).epsilon(1e-14));
  CHECK(b.value[0] == doctest::Approx(0.5 - 3e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(adam.steps_taken() == 1);
}

TEST_CASE("synthetic data: determinism and label contract") {
  const DatasetSpec spec = small_data(40);
  const Dataset a = make_synthetic_dataset(spec, 5), b = make_synthetic_dataset(spec, 5);
  REQUIRE(a.size() == 40);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bit_equal(a[i].features, b[i].features));
    CHECK(a[i].labels == b[i].labels);
    CHECK(a[i].labels.size() >= spec.min_labels);
    CHECK(a[i].labels.size() <= spec.max_labels);
    CHECK(a[i].valid_length == a[i].features.rows());
    CHECK(a[i].valid_length >= ctc_min_frames(a[i].labels));
    for (std::size_t j = 0; j < a[i].labels.size(); ++j) {
      CHECK(a[i].labels[j] != kBlank);
      CHECK(a[i].labels[j] < static_cast<int>(spec.vocab()));
      if (j > 0) CHECK(a[i].labels[j] != a[i].labels[j - 1]);
    }
  }
}

TEST_CASE("noise-free frames are recovered by nearest prototype") {
  DatasetSpec spec = small_data(30);
  spec.noise = 0.0;
  const Tensor protos = make_prototypes(spec);
  for (const auto& s : make_synthetic_dataset(spec, 6)) {
    std::vector<int> decoded;
    for (std::size_t t = 0; t < s.valid_length; ++t) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < spec.alphabet; ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < spec.feature_dim; ++j) d += std::pow(s.features(t, j) - protos(c, j), 2);
        if (d < best_d) best_d = d, best = c;
      }
      const int label = static_cast<int>(best) + 1;
      if (decoded.empty() || decoded.back() != label) decoded.push_back(label);
    }
    CHECK(decoded == s.labels);
  }
}

TEST_CASE("dataset snapshot round-trip") {
  const DatasetSpec spec = small_data(8);
  DatasetSnapshot snap{spec, 9, "train", make_synthetic_dataset(spec, 9)};
  const auto path = (std::filesystem::temp_directory_path() / "wsm_unit.wsmdata").string();
  save_dataset(path, snap);
  const DatasetSnapshot back = load_dataset(path);
  CHECK(back.seed == 9);
  CHECK(back.split == "train");
  REQUIRE(back.samples.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(bit_equal(back.samples[i].features, snap.samples[i].features));
    CHECK(back.samples[i].labels == snap.samples[i].labels);
  }
  std::filesystem::remove(path);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lr_head = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("fine-tuning is deterministic and respects freezing") {
  const EncoderConfig ec = small_encoder();
  const auto p = build_pretrained_stack(ec, 1, false);
  const Dataset train = make_synthetic_dataset(small_data(24), 2);
  const Dataset held = make_synthetic_dataset(small_data(8), 3);
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 2;
  tc.seed = 4;
  FinetuneModel m1(p.stack, {2, PlanVariant::WSM, 4}, summary_for(ec), 5);
  FinetuneModel m2(p.stack, {2, PlanVariant::WSM, 4}, summary_for(ec), 5);
  std::vector<Tensor> frozen_before;
  const ParamRefs trainable = trainable_parameters(m1, m1.plan);
  ParamRefs frozen;
  for (auto* q : m1.all_parameters()) {
    if (std::find(trainable.begin(), trainable.end(), q) == trainable.end()) {
      frozen.push_back(q);
      frozen_before.push_back(q->value);
    }
  }
  const RunMetrics r1 = finetune(m1, tc, train, held);
  const RunMetrics r2 = finetune(m2, tc, train, held);
  REQUIRE(r1.step_loss.size() == 6);
  for (std::size_t i = 0; i < r1.step_loss.size(); ++i) CHECK(r1.step_loss[i] == r2.step_loss[i]);
  CHECK(r1.final_loss == r2.final_loss);
  for (std::size_t i = 0; i < frozen.size(); ++i) CHECK(bit_equal(frozen[i]->value, frozen_before[i]));
  CHECK(r1.peak_bytes > 0);
  CHECK(r1.final_ter >= 0.0);
  CHECK(r1.epoch_loss.size() == 2);
}

TEST_CASE("max_steps stops early") {
  const EncoderConfig ec = small_encoder();
  const auto p = build_pretrained_stack(ec, 1, false);
  FinetuneModel m(p.stack, {1, PlanVariant::SM, 0}, summary_for(ec), 0);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_steps = 3;
  const RunMetrics r = finetune(m, tc, make_synthetic_dataset(small_data(32), 1), {});
  CHECK(r.step_loss.size() == 3);
}

TEST_CASE("divergence is reported with the failing step") {
  const EncoderConfig ec = small_encoder();
  const auto p = build_pretrained_stack(ec, 1, false);
  FinetuneModel m(p.stack, {1, PlanVariant::WSM, 0}, summary_for(ec), 0);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 3;
  tc.lr_head = 1e300;
  tc.lr_replaced = 1e300;
  try {
    finetune(m, tc, make_synthetic_dataset(small_data(16), 1), {});
    FAIL("expected TrainingDivergedError");
  } catch (const TrainingDivergedError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("every variant overfits 32 noise-free samples within 300 steps") {
  // Default warmed-up encoder; the head learning rate is raised for the tiny set.
  const EncoderConfig ec;
  const auto p = build_pretrained_stack(ec, 1);
  DatasetSpec spec = small_data(32);
  spec.noise = 0.0;
  const Dataset train = make_synthetic_dataset(spec, 7);
  TrainConfig tc;
  tc.batch_size = 8;
  tc.lr_head = 3e-3;
  tc.max_steps = 300;
  tc.epochs = 1000;
  for (auto v : {PlanVariant::SM, PlanVariant::WSM, PlanVariant::AttPT, PlanVariant::AttScratch}) {
    CAPTURE(to_string(v));
    MixingConfig m = summary_for(ec);
    m.dropout = 0.0;
    FinetuneModel model(p.stack, {2, v, 8}, m, 9);
    const RunMetrics r = finetune(model, tc, train, {});
    CHECK(r.step_loss.size() == 300);
    CHECK(r.final_loss < 0.05);
    Tape tape(false);
    const auto& s = train.front();
    Var lp = model.forward(tape, tape.constant(s.features), s.valid_length, ForwardContext{});
    CHECK(greedy_decode(lp.value(), kBlank) == s.labels);
  }
}

TEST_CASE("grid skips undefined cells with a notice") {
  const EncoderConfig ec = small_encoder();
  const auto p = build_pretrained_stack(ec, 1, false);
  TrainConfig tc;
  tc.max_steps = 1;
  const Dataset train = make_synthetic_dataset(small_data(4), 1);
  const auto cells = run_grid({PlanVariant::WSM, PlanVariant::AttPT}, {1, ec.layers}, p.stack,
                              summary_for(ec), tc, train, train);
  REQUIRE(cells.size() == 4);
  CHECK_FALSE(cells[0].skipped);
  CHECK(cells[1].skipped);
  CHECK(cells[1].notice.find("All") != std::string::npos);
  CHECK_FALSE(cells[3].skipped);
  CHECK(depth_label(cells[3]) == "All");
  std::ostringstream os;
  write_grid_csv(os, cells);
  const std::string csv = os.str();
  CHECK(csv.rfind("variant,depth,final_ter,final_loss,wall_ms,peak_bytes\n", 0) == 0);
  CHECK(csv.find("WSM,All,-,-,-,-\n") != std::string::npos);
  CHECK(csv.find("Att-PT,All,") != std::string::npos);
}

TEST_CASE("metrics CSV has an epoch-0 row per run") {
  RunMetrics m;
  m.initial_loss = 2.5;
  m.initial_ter = 1.0;
  m.epoch_loss = {1.25};
  m.epoch_ter = {0.5};
  m.epoch_wall_ms = {10.0};
  m.peak_bytes = 64;
  std::ostringstream os;
  write_metrics_csv(os, "WSM", "2", m);
  CHECK(os.str() ==
        "variant,depth,epoch,loss,ter,wall_ms,peak_bytes\n"
        "WSM,2,0,2.5,1,0,64\n"
        "WSM,2,1,1.25,0.5,10,64\n");
}

}  // TEST_SUITE
