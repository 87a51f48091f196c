#include "wsm/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "wsm/bench.hpp"
#include "wsm/checkpoint.hpp"
#include "wsm/checks.hpp"
#include "wsm/errors.hpp"
#include "wsm/io.hpp"
#include "wsm/train.hpp"

namespace wsm {

namespace {

namespace fs = std::filesystem;

// JSON config files: top-level keys are global flags, nested objects hold the
// flags of the subcommand they are named after. Arrays become comma lists.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("unsupported config value " + v.dump());
  }

  static void flatten(const json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto nested = parents;
        nested.push_back(it.key());
        flatten(*it, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        std::string joined;
        for (const auto& v : *it) joined += (joined.empty() ? "" : ",") + scalar(v);
        item.inputs = {joined};
      } else {
        item.inputs = {scalar(*it)};
      }
      items.push_back(std::move(item));
    }
  }
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    part.erase(0, part.find_first_not_of(" \t"));
    part.erase(part.find_last_not_of(" \t") + 1);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::size_t parse_size(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty() || s[0] == '-') throw ConfigError("'" + s + "' is not a count");
  return static_cast<std::size_t>(v);
}

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

struct BenchOptions {
  std::string variants = "SM,WSM,Attention";
  std::string lengths = "256,512,1024,2048,4096,8192,16384";
  std::size_t repeats = 5;
  std::size_t d_model = 64;
  std::size_t window_k = 5;
  std::size_t heads = 4;
};

// Model, data and optimizer settings shared by `train` and `grid`.
struct ModelOptions {
  EncoderConfig encoder;
  MixingConfig summary;
  std::string boundary = "valid-count";
  bool separate_window = false;
  DatasetSpec data;
  std::size_t heldout = 128;
  bool warmup = true;
  WarmupOptions warmup_options;
  TrainConfig train;
  std::string train_data;
  std::string heldout_data;
  bool save_data = false;
};

struct TrainOptions {
  std::string variant = "WSM";
  std::size_t depth = 2;
};

struct GridOptions {
  std::string variants = "SM,WSM,Att-PT,Att-scratch";
  std::string depths = "1,2";
};

struct ReportOptions {
  std::string inputs;
  std::string output = "report.csv";
};

void add_model_options(CLI::App& cmd, ModelOptions& o) {
  cmd.add_option("--layers", o.encoder.layers, "Encoder layers")->capture_default_str();
  cmd.add_option("--d-model", o.encoder.d_model, "Model width")->capture_default_str();
  cmd.add_option("--d-ff", o.encoder.d_ff, "Feed-forward width")->capture_default_str();
  cmd.add_option("--heads", o.encoder.heads, "Attention heads")->capture_default_str();
  cmd.add_option("--d-summary", o.summary.d_summary, "Summary width of SM/WSM blocks")->capture_default_str();
  cmd.add_option("--window-k", o.summary.window_k, "WSM half-window k (window 2k+1)")->capture_default_str();
  cmd.add_option("--boundary", o.boundary, "WSM boundary mode: valid-count or zero-pad")->capture_default_str();
  cmd.add_flag("--separate-window", o.separate_window, "Give the windowed summary its own transform");
  cmd.add_option("--dropout", o.summary.dropout, "Dropout after the SM/WSM output transform")->capture_default_str();
  cmd.add_option("--train-size", o.data.n, "Synthetic training sequences")->capture_default_str();
  cmd.add_option("--heldout-size", o.heldout, "Synthetic held-out sequences")->capture_default_str();
  cmd.add_option("--noise", o.data.noise, "Frame noise standard deviation")->capture_default_str();
  cmd.add_option("--train-data", o.train_data, "Load the training split from a snapshot file");
  cmd.add_option("--heldout-data", o.heldout_data, "Load the held-out split from a snapshot file");
  cmd.add_flag("--save-data", o.save_data, "Write dataset snapshots to the output directory");
  cmd.add_flag("!--no-warmup", o.warmup, "Skip the reconstruction warm-up of the attention stack");
  cmd.add_option("--warmup-steps", o.warmup_options.steps, "Warm-up optimizer steps")->capture_default_str();
  cmd.add_option("--batch-size", o.train.batch_size, "Sequences per batch")->capture_default_str();
  cmd.add_option("--epochs", o.train.epochs, "Fine-tuning epochs")->capture_default_str();
  cmd.add_option("--max-steps", o.train.max_steps, "Stop after this many steps (0 = no limit)")->capture_default_str();
  cmd.add_option("--lr-head", o.train.lr_head, "Learning rate of layer sum and head")->capture_default_str();
  cmd.add_option("--lr-replaced", o.train.lr_replaced, "Learning rate of replaced layers")->capture_default_str();
}

struct Workspace {
  PretrainedStack pretrained;
  Dataset train;
  Dataset heldout;
};

Workspace prepare(ModelOptions& o, const GlobalOptions& g, std::ostream& out) {
  o.summary.boundary = parse_boundary(o.boundary);
  o.summary.share_summary = !o.separate_window;
  o.summary.d_model = o.encoder.d_model;
  o.summary.heads = o.encoder.heads;
  o.train.seed = g.seed;
  o.encoder.d_in = o.data.feature_dim;
  o.encoder.vocab = o.data.vocab();
  o.encoder.validate();
  o.summary.validate();
  o.train.validate();
  o.data.validate();

  Workspace w{build_pretrained_stack(o.encoder, g.seed, o.warmup, o.warmup_options), {}, {}};
  if (o.warmup) {
    out << "warm-up reconstruction loss " << w.pretrained.recon_before << " -> "
        << w.pretrained.recon_after << "\n";
  }
  if (!o.train_data.empty()) {
    w.train = load_dataset(o.train_data).samples;
  } else {
    w.train = make_synthetic_dataset(o.data, g.seed + 1);
  }
  if (!o.heldout_data.empty()) {
    w.heldout = load_dataset(o.heldout_data).samples;
  } else {
    DatasetSpec spec = o.data;
    spec.n = o.heldout;
    w.heldout = make_synthetic_dataset(spec, g.seed + 2);
  }
  if (o.save_data) {
    save_dataset((fs::path(g.out_dir) / "train.wsmdata").string(), {o.data, g.seed + 1, "train", w.train});
    DatasetSpec spec = o.data;
    spec.n = o.heldout;
    save_dataset((fs::path(g.out_dir) / "heldout.wsmdata").string(), {spec, g.seed + 2, "heldout", w.heldout});
  }
  return w;
}

std::ofstream open_output(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  const fs::path path = fs::path(g.out_dir) / name;
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  return os;
}

int cmd_bench(const BenchOptions& o, const GlobalOptions& g, std::ostream& out) {
  BenchSpec spec;
  spec.variants.clear();
  for (const auto& v : split_list(o.variants)) spec.variants.push_back(parse_variant(v));
  spec.lengths.clear();
  for (const auto& t : split_list(o.lengths)) spec.lengths.push_back(parse_size(t));
  spec.repeats = o.repeats;
  spec.d_model = o.d_model;
  spec.window_k = o.window_k;
  spec.heads = o.heads;
  spec.seed = g.seed;
  spec.validate();
  const auto records = run_scaling_bench(spec, &out);
  auto os = open_output(g, "bench.csv");
  write_bench_csv(os, spec, records);
  for (Variant v : spec.variants) {
    try {
      out << to_string(v) << " log-log slope " << fit_loglog_slope(records, v) << "\n";
    } catch (const FitError& e) {
      out << to_string(v) << ": " << e.what() << "\n";
    }
  }
  return 0;
}

int cmd_train(ModelOptions& m, const TrainOptions& o, const GlobalOptions& g, std::ostream& out) {
  Workspace w = prepare(m, g, out);
  ReplacementPlan plan{o.depth, parse_plan_variant(o.variant), g.seed};
  plan.validate(m.encoder.layers);
  FinetuneModel model(w.pretrained.stack, plan, m.summary, g.seed + 1);
  const RunMetrics metrics = finetune(model, m.train, w.train, w.heldout);
  auto os = open_output(g, "train_metrics.csv");
  const std::string depth = o.depth == m.encoder.layers ? "All" : std::to_string(o.depth);
  write_metrics_csv(os, to_string(plan.variant), depth, metrics);
  save_checkpoint((fs::path(g.out_dir) / "model.ckpt").string(), model,
                  {{"final_loss", metrics.final_loss}, {"final_ter", metrics.final_ter}});
  out << to_string(plan.variant) << " depth " << depth << ": loss " << metrics.initial_loss << " -> "
      << metrics.final_loss << ", held-out TER " << metrics.final_ter << "\n";
  return 0;
}

std::vector<std::size_t> parse_depths(const std::string& s, std::size_t layers) {
  std::vector<std::size_t> out;
  for (const auto& d : split_list(s)) out.push_back(d == "All" ? layers : parse_size(d));
  return out;
}

int cmd_grid(ModelOptions& m, const GridOptions& o, const GlobalOptions& g, std::ostream& out) {
  std::vector<PlanVariant> variants;
  for (const auto& v : split_list(o.variants)) variants.push_back(parse_plan_variant(v));
  const auto depths = parse_depths(o.depths, m.encoder.layers);
  Workspace w = prepare(m, g, out);
  const auto cells = run_grid(variants, depths, w.pretrained.stack, m.summary, m.train, w.train,
                              w.heldout, &out);
  auto grid = open_output(g, "grid.csv");
  write_grid_csv(grid, cells);
  auto curves = open_output(g, "grid_metrics.csv");
  bool header = true;
  for (const auto& c : cells) {
    if (c.skipped) continue;
    write_metrics_csv(curves, to_string(c.variant), depth_label(c), c.metrics, header);
    header = false;
  }
  return 0;
}

int report_suite(const std::vector<checks::CheckResult>& results, const GlobalOptions& g,
                 const std::string& file, std::ostream& out) {
  auto os = open_output(g, file);
  checks::write_check_csv(os, results);
  for (const auto& r : results) {
    out << (r.pass ? "PASS " : "FAIL ") << r.suite << "/" << r.name << " max error " << r.max_error
        << " (tolerance " << r.tolerance << ")\n";
  }
  return checks::all_passed(results) ? 0 : 1;
}

// Long format: source,variant,x_name,x,metric,value. Recognizes bench,
// grid, per-epoch metrics and check CSVs by their header.
int cmd_report(const ReportOptions& o, const GlobalOptions& g, std::ostream& out) {
  std::vector<std::string> inputs = split_list(o.inputs);
  if (inputs.empty()) {
    for (const char* name : {"bench.csv", "grid.csv", "grid_metrics.csv", "train_metrics.csv",
                             "oracle.csv", "gradcheck.csv"}) {
      if (fs::exists(fs::path(g.out_dir) / name)) inputs.push_back((fs::path(g.out_dir) / name).string());
    }
  }
  if (inputs.empty()) throw ConfigError("report found no input CSV files");
  auto os = open_output(g, o.output);
  os << "source,variant,x_name,x,metric,value\n";
  std::size_t rows = 0;
  for (const auto& path : inputs) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open " + path);
    std::string line;
    std::vector<std::string> header;
    const std::string source = fs::path(path).stem().string();
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      if (!line.empty() && line.back() == ',') cells.emplace_back();
      if (header.empty()) {
        header = cells;
        continue;
      }
      if (cells.size() != header.size()) throw FormatError(path + ": ragged row '" + line + "'");
      std::map<std::string, std::string> row;
      for (std::size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
      std::string variant, x_name;
      std::vector<std::string> metrics;
      if (row.count("T")) {
        variant = row["variant"];
        x_name = "T";
        metrics = {"median_ns", "macs", "peak_bytes"};
      } else if (row.count("epoch")) {
        variant = row["variant"] + "@" + row["depth"];
        x_name = "epoch";
        metrics = {"loss", "ter", "wall_ms"};
      } else if (row.count("final_ter")) {
        variant = row["variant"];
        x_name = "depth";
        metrics = {"final_ter", "final_loss", "wall_ms", "peak_bytes"};
      } else if (row.count("max_error")) {
        variant = row["suite"];
        x_name = "name";
        metrics = {"max_error"};
      } else {
        throw FormatError(path + ": unrecognized CSV header");
      }
      for (const auto& metric : metrics) {
        const std::string& value = row[metric];
        if (value.empty() || value == "-") continue;
        os << source << ',' << variant << ',' << x_name << ',' << row[x_name] << ',' << metric << ','
           << value << '\n';
        ++rows;
      }
    }
  }
  out << "wrote " << rows << " rows from " << inputs.size() << " files\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Windowed SummaryMixing toolkit: scaling benchmarks, fine-tuning and checks", "wsm"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file mirroring the command-line flags (flags win)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Seed for data, initialization and shuffling")->capture_default_str();
  app.add_option("--out-dir", global.out_dir, "Directory for CSV and checkpoint output")->capture_default_str();

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time mixing blocks across sequence lengths");
  bench_cmd->add_option("--variants", bench.variants, "Comma list of SM, WSM, Attention")->capture_default_str();
  bench_cmd->add_option("--lengths", bench.lengths, "Comma list of frame counts")->capture_default_str();
  bench_cmd->add_option("--repeats", bench.repeats, "Timed repeats per point")->capture_default_str();
  bench_cmd->add_option("--d-model", bench.d_model, "Model width")->capture_default_str();
  bench_cmd->add_option("--window-k", bench.window_k, "WSM half-window k")->capture_default_str();
  bench_cmd->add_option("--heads", bench.heads, "Attention heads")->capture_default_str();

  ModelOptions train_model, grid_model;
  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune one replacement plan");
  add_model_options(*train_cmd, train_model);
  train_cmd->add_option("--variant", train.variant, "SM, WSM, Att-PT, Att-scratch or All-Att-PT")->capture_default_str();
  train_cmd->add_option("--depth", train.depth, "Number of trailing layers to replace")->capture_default_str();

  GridOptions grid;
  auto* grid_cmd = app.add_subcommand("grid", "Fine-tune every variant x depth cell");
  add_model_options(*grid_cmd, grid_model);
  grid_cmd->add_option("--variants", grid.variants, "Comma list of plan variants")->capture_default_str();
  grid_cmd->add_option("--depths", grid.depths, "Comma list of depths; All = every layer")->capture_default_str();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Central-difference gradient checks");
  auto* oracle_cmd = app.add_subcommand("oracle", "Windowed-summary, CTC and attention oracles");

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Merge CSV outputs into one long-format CSV");
  report_cmd->add_option("--inputs", report.inputs, "Comma list of CSV files (default: known files in --out-dir)");
  report_cmd->add_option("--output", report.output, "Output file name inside --out-dir")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (bench_cmd->parsed()) return cmd_bench(bench, global, out);
    if (train_cmd->parsed()) return cmd_train(train_model, train, global, out);
    if (grid_cmd->parsed()) return cmd_grid(grid_model, grid, global, out);
    if (gradcheck_cmd->parsed()) return report_suite(checks::run_gradcheck_suite(global.seed), global, "gradcheck.csv", out);
    if (oracle_cmd->parsed()) return report_suite(checks::run_oracle_suite(global.seed), global, "oracle.csv", out);
    if (report_cmd->parsed()) return cmd_report(report, global, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const PlanError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace wsm
