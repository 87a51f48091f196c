#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wsm/data.hpp"
#include "wsm/encoder.hpp"

namespace wsm {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 25;
  double lr_head = 1e-3;      // weighted layer sum + prediction head
  double lr_replaced = 3e-3;  // replaced encoder layers
  std::uint64_t seed = 0;
  // Stop after this many optimizer steps (0 = run all epochs).
  std::size_t max_steps = 0;

  void validate() const;
};

struct RunMetrics {
  std::vector<double> step_loss;   // batch loss per optimizer step
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> epoch_ter;   // held-out token error rate after each epoch
  std::vector<double> epoch_wall_ms;
  double initial_loss = 0.0;       // mean training loss before any update (dropout off)
  double final_loss = 0.0;         // same measurement after training
  double initial_ter = 0.0;
  double final_ter = 0.0;
  double wall_ms = 0.0;
  std::size_t peak_bytes = 0;      // allocator high-water of one training step
};

// Mean per-sequence CTC loss with dropout off.
double evaluate_loss(FinetuneModel& model, const Dataset& data);
// Σ edit distance / Σ reference length with greedy decoding.
double token_error_rate(FinetuneModel& model, const Dataset& data);

// Fine-tunes the trainable parameters of `model` (per its plan) with Adam:
// lr_head for the layer sum and head, lr_replaced for replaced layers.
// Batches are zero-padded to their longest sequence; the loss is the mean
// over sequences. Deterministic for fixed seeds.
RunMetrics finetune(FinetuneModel& model, const TrainConfig& config, const Dataset& train,
                    const Dataset& heldout);

struct GridCell {
  PlanVariant variant = PlanVariant::WSM;
  std::size_t depth = 0;
  bool all_layers = false;
  bool skipped = false;
  std::string notice;
  RunMetrics metrics;
};

// One fine-tuning run per (variant, depth). A depth equal to the layer count
// is the "All" column, valid only for Att-PT; other invalid cells are
// skipped with a notice.
std::vector<GridCell> run_grid(const std::vector<PlanVariant>& variants,
                               const std::vector<std::size_t>& depths, const EncoderStack& pretrained,
                               const MixingConfig& summary, const TrainConfig& config,
                               const Dataset& train, const Dataset& heldout,
                               std::ostream* log = nullptr);

// variant,depth,final_ter,final_loss,wall_ms,peak_bytes
void write_grid_csv(std::ostream& os, const std::vector<GridCell>& cells);
// variant,depth,epoch,loss,ter,wall_ms,peak_bytes; epoch 0 is the pre-training evaluation.
void write_metrics_csv(std::ostream& os, const std::string& variant, const std::string& depth,
                       const RunMetrics& metrics, bool header = true);
std::string depth_label(const GridCell& cell);

}  // namespace wsm
