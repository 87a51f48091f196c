#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "wsm/checks.hpp"
#include "wsm/ctc.hpp"
#include "wsm/data.hpp"
#include "wsm/encoder.hpp"
#include "wsm/errors.hpp"
#include "wsm/gradcheck.hpp"

namespace wsm::checks {

namespace {

constexpr double kOracleTol = 1e-9;
constexpr double kGradTol = 1e-4;

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor random_tensor(Shape shape, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

CheckResult finish(std::string suite, std::string name, std::size_t cases, double err, double tol) {
  return {std::move(suite), std::move(name), cases, err, tol, err <= tol};
}

// Random-projection readout so every output element carries gradient.
Var readout(Tape& tape, const Var& y, const Tensor& weights) {
  return sum(mul(y, tape.constant(weights)));
}

double check_all(const LossFn& loss, const ParamRefs& params) {
  double worst = 0.0;
  for (auto* p : params) worst = std::max(worst, finite_diff_check(loss, *p));
  return worst;
}

CheckResult block_gradcheck(const std::string& name, MixingConfig config, std::size_t T,
                            std::size_t valid, std::uint64_t seed) {
  config.dropout = 0.0;
  Rng rng(seed);
  auto block = make_mixing_block("block", config, rng);
  Parameter input("input", random_tensor({T, config.d_model}, rng));
  const Tensor weights = random_tensor({T, config.d_model}, rng);
  const ForwardContext eval;
  LossFn loss = [&](Tape& tape) {
    return readout(tape, block->forward(tape, tape.param(input), valid, eval), weights);
  };
  ParamRefs params{&input};
  block->collect(params);
  return finish("gradcheck", name, params.size(), check_all(loss, params), kGradTol);
}

}  // namespace

CheckResult window_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t ks[] = {3, 5, 7, 9};
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t T = uniform(rng, 1, 512), d = uniform(rng, 1, 16);
    const std::size_t k = ks[uniform(rng, 0, 3)], valid = uniform(rng, 1, T);
    const BoundaryMode mode = i % 2 == 0 ? BoundaryMode::ValidCount : BoundaryMode::ZeroPad;
    const Tensor x = random_tensor({T, d}, rng);
    const Tensor expect = naive_window_mean(x, valid, k, mode);
    worst = std::max(worst, max_abs_diff(sliding_window_mean(x, valid, k, mode), expect));
    Tape tape(false);
    const Var xv = tape.constant(x);
    worst = std::max(worst, max_abs_diff(windowed_mean(xv, valid, k, mode).value(), expect));
    worst = std::max(worst, max_abs_diff(masked_mean_rows(xv, valid).value(), naive_global_mean(x, valid)));
  }
  return finish("oracle", "windowed_summary", cases, worst, kOracleTol);
}

CheckResult ctc_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  std::size_t disagreements = 0, compared = 0;
  // Infeasible draws are checked for agreement but do not count as cases.
  while (compared < cases) {
    const std::size_t T = uniform(rng, 1, 6), V = uniform(rng, 2, 4), L = uniform(rng, 0, 3);
    std::vector<int> labels(L);
    for (auto& l : labels) l = static_cast<int>(uniform(rng, 1, V - 1));
    const Tensor logits = random_tensor({T, V}, rng);
    Tape tape;
    Var lp = log_softmax(tape.constant(logits));
    Tensor oracle_grad;
    const double expect = brute_force_ctc(lp.value(), labels, kBlank, &oracle_grad);
    if (std::isinf(expect)) {
      try {
        ctc_loss(lp, labels, kBlank);
        ++disagreements;
      } catch (const InfeasibleTargetError&) {
      }
      continue;
    }
    // Gradient w.r.t. the log-probabilities: make them the leaf.
    Parameter leaf("log_probs", lp.value());
    Tape grad_tape;
    Var loss = ctc_loss(grad_tape.param(leaf), labels, kBlank);
    leaf.grad = Tensor(leaf.value.shape());
    grad_tape.backward(loss);
    worst = std::max(worst, std::abs(loss.value().item() - expect));
    worst = std::max(worst, max_abs_diff(leaf.grad, oracle_grad));
    ++compared;
  }
  if (disagreements > 0) worst = std::numeric_limits<double>::infinity();
  return finish("oracle", "ctc", cases, worst, kOracleTol);
}

CheckResult attention_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  const std::size_t head_choices[] = {1, 2, 4};
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t heads = head_choices[uniform(rng, 0, 2)];
    const std::size_t d = heads * uniform(rng, 1, 4), T = uniform(rng, 1, 24), valid = uniform(rng, 1, T);
    Parameter q("q", random_tensor({T, d}, rng)), k("k", random_tensor({T, d}, rng)),
        v("v", random_tensor({T, d}, rng));
    const Tensor expect = naive_attention(q.value, k.value, v.value, heads, valid);
    for (bool recording : {false, true}) {
      Tape tape(recording);
      Var out = attention_core(tape.param(q), tape.param(k), tape.param(v), heads, valid);
      worst = std::max(worst, max_abs_diff(out.value(), expect));
    }
  }
  return finish("oracle", "attention", cases, worst, kOracleTol);
}

CheckResult matmul_oracle(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t m = uniform(rng, 1, 12), n = uniform(rng, 1, 12), p = uniform(rng, 1, 12);
    const Tensor a = random_tensor({m, n}, rng), b = random_tensor({n, p}, rng);
    const Tensor expect = naive_matmul(a, b);
    worst = std::max(worst, max_abs_diff(matmul(a, b), expect));
    Tensor at({n, m}), bt({p, n});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) at(c, r) = a(r, c);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < p; ++c) bt(c, r) = b(r, c);
    worst = std::max(worst, max_abs_diff(matmul_nt(a, bt), expect));
    worst = std::max(worst, max_abs_diff(matmul_tn(at, b), expect));
  }
  return finish("oracle", "matmul", cases, worst, kOracleTol);
}

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) {
  return {window_oracle(1000, seed), ctc_oracle(600, seed + 1), attention_oracle(200, seed + 2),
          matmul_oracle(200, seed + 3)};
}

std::vector<CheckResult> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  MixingConfig base;
  base.d_model = 8;
  base.d_summary = 6;
  base.window_k = 2;
  base.heads = 2;

  MixingConfig sm = base;
  sm.variant = Variant::SM;
  out.push_back(block_gradcheck("sm_block", sm, 12, 10, seed));
  for (BoundaryMode mode : {BoundaryMode::ValidCount, BoundaryMode::ZeroPad}) {
    MixingConfig wsm = base;
    wsm.variant = Variant::WSM;
    wsm.boundary = mode;
    out.push_back(block_gradcheck("wsm_block_" + to_string(mode), wsm, 12, 10, seed + 1));
  }
  MixingConfig separate = base;
  separate.variant = Variant::WSM;
  separate.share_summary = false;
  out.push_back(block_gradcheck("wsm_block_separate_window", separate, 12, 10, seed + 2));
  MixingConfig att = base;
  att.variant = Variant::Attention;
  out.push_back(block_gradcheck("attention_block", att, 12, 10, seed + 3));

  {  // One pre-norm encoder layer around a WSM block.
    Rng rng(seed + 4);
    EncoderConfig ec;
    ec.d_model = 8;
    ec.d_ff = 12;
    ec.heads = 2;
    MixingConfig wsm = base;
    wsm.dropout = 0.0;
    EncoderLayer layer("layer", ec, make_mixing_block("layer.mixer", wsm, rng), rng);
    Parameter input("input", random_tensor({10, 8}, rng));
    const Tensor weights = random_tensor({10, 8}, rng);
    const ForwardContext eval;
    LossFn loss = [&](Tape& tape) {
      return readout(tape, layer.forward(tape, tape.param(input), 9, eval), weights);
    };
    ParamRefs params{&input};
    layer.collect(params);
    out.push_back(finish("gradcheck", "encoder_layer", params.size(), check_all(loss, params), kGradTol));
  }

  {  // Weighted layer sum + prediction head under CTC.
    Rng rng(seed + 5);
    const std::size_t T = 10, d = 8, V = 5;
    std::vector<Parameter> layers;
    for (std::size_t i = 0; i < 3; ++i) {
      layers.emplace_back("layer" + std::to_string(i), random_tensor({T, d}, rng));
    }
    WeightedLayerSum layer_sum(3);
    layer_sum.logits.value = random_tensor({3}, rng);
    PredictionHead head(d, V, rng);
    const std::vector<int> labels{1, 3, 3, 2};
    LossFn loss = [&](Tape& tape) {
      std::vector<Var> outs;
      for (auto& p : layers) outs.push_back(tape.param(p));
      return ctc_loss(head.forward(tape, layer_sum.aggregate(tape, outs)), labels, kBlank);
    };
    ParamRefs params;
    for (auto& p : layers) params.push_back(&p);
    layer_sum.collect(params);
    head.collect(params);
    out.push_back(finish("gradcheck", "layer_sum_head", params.size(), check_all(loss, params), kGradTol));
  }

  {  // CTC through log-softmax, including a padded tail.
    Rng rng(seed + 6);
    Parameter logits("logits", random_tensor({16, 6}, rng));
    const std::vector<int> labels{2, 2, 5, 1, 4};
    LossFn loss = [&](Tape& tape) { return ctc_loss(log_softmax(tape.param(logits)), labels, kBlank, 13); };
    out.push_back(finish("gradcheck", "ctc_loss", 1, finite_diff_check(loss, logits), kGradTol));
  }
  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

void write_check_csv(std::ostream& os, const std::vector<CheckResult>& results) {
  os << "suite,name,cases,max_error,tolerance,pass\n";
  char err[32], tol[32];
  for (const auto& r : results) {
    std::snprintf(err, sizeof err, "%.3e", r.max_error);
    std::snprintf(tol, sizeof tol, "%.0e", r.tolerance);
    os << r.suite << ',' << r.name << ',' << r.cases << ',' << err << ',' << tol << ','
       << (r.pass ? "true" : "false") << '\n';
  }
}

}  // namespace wsm::checks
