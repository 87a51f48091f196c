#include "wsm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "wsm/ctc.hpp"
#include "wsm/errors.hpp"
#include "wsm/optim.hpp"

namespace wsm {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_head > 0.0) || !(lr_replaced > 0.0)) throw ConfigError("learning rates must be > 0");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Frozen-prefix feature maps of every sample, computed once.
std::vector<std::vector<Tensor>> cache_frozen(FinetuneModel& model, const Dataset& data) {
  std::vector<std::vector<Tensor>> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(model.frozen_features(s.features, s.valid_length));
  return out;
}

double mean_loss(FinetuneModel& model, const Dataset& data,
                 const std::vector<std::vector<Tensor>>& frozen) {
  double total = 0.0;
  const ForwardContext eval;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape tape(false);
    Var lp = model.forward_from_frozen(tape, frozen[i], data[i].valid_length, eval);
    total += ctc_loss(lp, data[i].labels, kBlank, data[i].valid_length).value().item();
  }
  return total / static_cast<double>(data.size());
}

double corpus_ter(FinetuneModel& model, const Dataset& data,
                  const std::vector<std::vector<Tensor>>& frozen) {
  std::size_t edits = 0, ref = 0;
  const ForwardContext eval;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape tape(false);
    Var lp = model.forward_from_frozen(tape, frozen[i], data[i].valid_length, eval);
    const auto hyp = greedy_decode(lp.value(), kBlank, data[i].valid_length);
    edits += edit_distance(hyp, data[i].labels);
    ref += data[i].labels.size();
  }
  return ref == 0 ? 0.0 : static_cast<double>(edits) / static_cast<double>(ref);
}

Tensor pad_rows(const Tensor& t, std::size_t rows) {
  if (t.rows() == rows) return t;
  Tensor out({rows, t.cols()});
  std::copy_n(t.data().data(), t.size(), out.data().data());
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double evaluate_loss(FinetuneModel& model, const Dataset& data) {
  return mean_loss(model, data, cache_frozen(model, data));
}

double token_error_rate(FinetuneModel& model, const Dataset& data) {
  return corpus_ter(model, data, cache_frozen(model, data));
}

RunMetrics finetune(FinetuneModel& model, const TrainConfig& config, const Dataset& train,
                    const Dataset& heldout) {
  config.validate();
  if (train.empty()) throw ContractError("finetune needs a non-empty training set");
  const auto start = Clock::now();
  const ReplacementPlan& plan = model.plan;

  std::vector<ParamGroup> groups{{"head", config.lr_head, head_group(model)}};
  ParamRefs replaced = replaced_group(model, plan);
  if (!replaced.empty()) groups.push_back({"replaced", config.lr_replaced, replaced});
  Adam adam(std::move(groups), trainable_parameters(model, plan));
  adam.zero_grad();

  const auto train_frozen = cache_frozen(model, train);
  const auto heldout_frozen = cache_frozen(model, heldout);

  RunMetrics m;
  m.initial_loss = mean_loss(model, train, train_frozen);
  m.initial_ter = heldout.empty() ? 0.0 : corpus_ter(model, heldout, heldout_frozen);

  Rng order_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  const ForwardContext ctx{true, &dropout_rng};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  memory::PeakScope peak;
  std::size_t step = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_total = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      std::size_t padded = 0;
      for (std::size_t i = b0; i < b1; ++i) padded = std::max(padded, train[order[i]].valid_length);

      double loss_value = 0.0;
      try {
        Tape tape;
        Var total;
        for (std::size_t i = b0; i < b1; ++i) {
          const auto& sample = train[order[i]];
          std::vector<Tensor> frozen;
          for (const auto& f : train_frozen[order[i]]) frozen.push_back(pad_rows(f, padded));
          Var lp = model.forward_from_frozen(tape, frozen, sample.valid_length, ctx);
          Var l = ctc_loss(lp, sample.labels, kBlank, sample.valid_length);
          total = total.defined() ? add(total, l) : l;
        }
        Var loss = scale(total, 1.0 / static_cast<double>(b1 - b0));
        loss_value = loss.value().item();
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw TrainingDivergedError("training diverged at step " + std::to_string(step) +
                                    " (epoch " + std::to_string(epoch) + "): " + e.what());
      }
      adam.step();
      adam.zero_grad();
      m.step_loss.push_back(loss_value);
      epoch_total += loss_value;
      ++epoch_steps;
      ++step;
      if (config.max_steps != 0 && step >= config.max_steps) {
        done = true;
        break;
      }
    }
    m.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_steps));
    m.epoch_ter.push_back(heldout.empty() ? 0.0 : corpus_ter(model, heldout, heldout_frozen));
    m.epoch_wall_ms.push_back(elapsed_ms(start));
  }
  m.peak_bytes = peak.peak_bytes();
  m.final_loss = mean_loss(model, train, train_frozen);
  m.final_ter = m.epoch_ter.empty() ? m.initial_ter : m.epoch_ter.back();
  m.wall_ms = elapsed_ms(start);
  return m;
}

std::vector<GridCell> run_grid(const std::vector<PlanVariant>& variants,
                               const std::vector<std::size_t>& depths, const EncoderStack& pretrained,
                               const MixingConfig& summary, const TrainConfig& config,
                               const Dataset& train, const Dataset& heldout, std::ostream* log) {
  const std::size_t L = pretrained.layers.size();
  std::vector<GridCell> cells;
  for (PlanVariant v : variants) {
    for (std::size_t depth : depths) {
      GridCell cell;
      cell.variant = v;
      cell.depth = depth;
      cell.all_layers = depth == L;
      ReplacementPlan plan{depth, v, config.seed};
      if (v == PlanVariant::AllAttPT) {
        cell.skipped = true;
        cell.notice = "All-Att-PT is selected via variant Att-PT with depth = layer count";
      } else if (depth < 1 || depth > L) {
        cell.skipped = true;
        cell.notice = "depth " + std::to_string(depth) + " outside [1, " + std::to_string(L) + "]";
      } else if (cell.all_layers && v != PlanVariant::AttPT) {
        cell.skipped = true;
        cell.notice = "'All' column is only defined for Att-PT";
      } else if (cell.all_layers) {
        plan.variant = PlanVariant::AllAttPT;
      }
      if (cell.skipped) {
        if (log) *log << "skip " << to_string(v) << " depth " << depth << ": " << cell.notice << "\n";
        cells.push_back(std::move(cell));
        continue;
      }
      FinetuneModel model(pretrained, plan, summary, config.seed + 1);
      cell.metrics = finetune(model, config, train, heldout);
      if (log) {
        *log << to_string(v) << " depth " << depth_label(cell) << ": loss "
             << cell.metrics.initial_loss << " -> " << cell.metrics.final_loss << ", ter "
             << cell.metrics.final_ter << ", " << cell.metrics.wall_ms / 1000.0 << " s\n";
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string depth_label(const GridCell& cell) {
  return cell.all_layers ? "All" : std::to_string(cell.depth);
}

void write_grid_csv(std::ostream& os, const std::vector<GridCell>& cells) {
  os << "variant,depth,final_ter,final_loss,wall_ms,peak_bytes\n";
  for (const auto& c : cells) {
    if (c.skipped) {
      os << to_string(c.variant) << ',' << depth_label(c) << ",-,-,-,-\n";
      continue;
    }
    os << to_string(c.variant) << ',' << depth_label(c) << ',' << format_double(c.metrics.final_ter)
       << ',' << format_double(c.metrics.final_loss) << ',' << format_double(c.metrics.wall_ms)
       << ',' << c.metrics.peak_bytes << '\n';
  }
}

void write_metrics_csv(std::ostream& os, const std::string& variant, const std::string& depth,
                       const RunMetrics& m, bool header) {
  if (header) os << "variant,depth,epoch,loss,ter,wall_ms,peak_bytes\n";
  os << variant << ',' << depth << ",0," << format_double(m.initial_loss) << ','
     << format_double(m.initial_ter) << ",0," << m.peak_bytes << '\n';
  for (std::size_t e = 0; e < m.epoch_loss.size(); ++e) {
    os << variant << ',' << depth << ',' << e + 1 << ',' << format_double(m.epoch_loss[e]) << ','
       << format_double(m.epoch_ter[e]) << ',' << format_double(m.epoch_wall_ms[e]) << ','
       << m.peak_bytes << '\n';
  }
}

}  // namespace wsm
