#include "wsm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <new>
#include <ostream>
#include <thread>

#include "wsm/errors.hpp"

namespace wsm {

void BenchSpec::validate() const {
  if (variants.empty()) throw ConfigError("bench needs at least one variant");
  if (lengths.empty()) throw ConfigError("bench needs at least one length");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 1) throw ConfigError("bench lengths must be >= 1");
    if (i > 0 && lengths[i] <= lengths[i - 1]) throw ConfigError("bench lengths must be strictly increasing");
  }
  if (repeats < 3) throw ConfigError("bench repeats must be >= 3");
  mixing(Variant::Attention).validate();
}

MixingConfig BenchSpec::mixing(Variant v) const {
  MixingConfig c;
  c.variant = v;
  c.d_model = d_model;
  c.d_summary = d_model;
  c.window_k = window_k;
  c.heads = heads;
  return c;
}

namespace {

Tensor random_input(std::size_t T, std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x({T, d});
  for (auto& v : x.data()) v = normal(rng);
  return x;
}

}  // namespace

std::vector<BenchRecord> run_scaling_bench(const BenchSpec& spec, std::ostream* log) {
  spec.validate();
  std::vector<BenchRecord> records;
  for (Variant v : spec.variants) {
    const MixingConfig config = spec.mixing(v);
    Rng rng(spec.seed);
    auto block = make_mixing_block("bench", config, rng);
    for (std::size_t T : spec.lengths) {
      BenchRecord rec;
      rec.variant = v;
      rec.T = T;
      rec.peak_bytes = peak_activation_memory(v, T, config);
      try {
        Rng data_rng(spec.seed + T);
        const Tensor input = random_input(T, config.d_model, data_rng);
        const ForwardContext eval;
        auto pass = [&] {
          Tape tape(false);
          return block->forward(tape, tape.constant(input), T, eval);
        };
        const auto macs_before = counters::macs();
        pass();  // warm-up
        rec.macs = counters::macs() - macs_before;
        std::vector<double> times;
        for (std::size_t r = 0; r < spec.repeats; ++r) {
          const auto start = std::chrono::steady_clock::now();
          pass();
          times.push_back(std::chrono::duration<double, std::nano>(
                              std::chrono::steady_clock::now() - start).count());
        }
        std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
        rec.median_ns = times[times.size() / 2];
      } catch (const std::bad_alloc&) {
        rec.skipped = true;
      }
      if (log) {
        *log << to_string(v) << " T=" << T << ": "
             << (rec.skipped ? std::string("skipped (out of memory)")
                             : std::to_string(rec.median_ns / 1e6) + " ms")
             << "\n";
      }
      records.push_back(rec);
    }
  }
  return records;
}

double fit_loglog_slope(const std::vector<BenchRecord>& records, Variant variant) {
  std::vector<const BenchRecord*> usable;
  for (const auto& r : records) {
    if (r.variant == variant && !r.skipped && r.median_ns > 0.0) usable.push_back(&r);
  }
  if (usable.size() < 4) {
    throw FitError("slope fit for " + to_string(variant) + " needs 4 usable lengths, got " +
                   std::to_string(usable.size()));
  }
  std::sort(usable.begin(), usable.end(), [](auto* a, auto* b) { return a->T < b->T; });
  usable.erase(usable.begin(), usable.end() - 4);
  double mx = 0.0, my = 0.0;
  for (auto* r : usable) {
    mx += std::log(static_cast<double>(r->T));
    my += std::log(r->median_ns);
  }
  mx /= 4.0;
  my /= 4.0;
  double sxy = 0.0, sxx = 0.0;
  for (auto* r : usable) {
    const double dx = std::log(static_cast<double>(r->T)) - mx;
    sxy += dx * (std::log(r->median_ns) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw FitError("slope fit needs distinct lengths");
  return sxy / sxx;
}

std::size_t peak_activation_memory(Variant variant, std::size_t T, const MixingConfig& config) {
  const std::size_t d = config.d_model, s = config.d_summary;
  std::size_t doubles = 0;
  switch (variant) {
    case Variant::SM:
      // local pre/post GeLU, summary pre/post GeLU, broadcast mean, concat
      // (2 blocks), mean row, output pre/post GeLU, masked output.
      doubles = 7 * T * s + s + 3 * T * d;
      break;
    case Variant::WSM:
      // SM plus the windowed mean and its third concat block; a separate
      // window transform adds its pre/post GeLU values.
      doubles = 9 * T * s + s + 3 * T * d;
      if (!config.share_summary) doubles += 2 * T * s;
      break;
    case Variant::Attention:
      // Q, K, V, attended values, output projection, masked output, and the
      // probability matrix of every head.
      doubles = 6 * T * d + config.heads * T * T;
      break;
  }
  return doubles * sizeof(double);
}

std::size_t measure_activation_memory(Variant variant, std::size_t T, const MixingConfig& config,
                                      std::uint64_t seed) {
  MixingConfig c = config;
  c.variant = variant;
  Rng rng(seed);
  auto block = make_mixing_block("probe", c, rng);
  Rng data_rng(seed + 1);
  Tensor input = random_input(T, c.d_model, data_rng);
  memory::PeakScope scope;
  {
    // Ops run on the tape of their inputs, so the input must live on the
    // recording tape. Moving it in allocates nothing.
    Tape tape;
    const ForwardContext eval;
    Var y = block->forward(tape, tape.constant(std::move(input)), T, eval);
    (void)y;
  }
  return scope.peak_bytes();
}

std::string hardware_description() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
}

void write_bench_csv(std::ostream& os, const BenchSpec& spec, const std::vector<BenchRecord>& records) {
  os << "# frames_per_second=50\n"
     << "# batch_size=1\n"
     << "# d_model=" << spec.d_model << " window_k=" << spec.window_k << " heads=" << spec.heads
     << " repeats=" << spec.repeats << "\n"
     << "# hardware=" << hardware_description() << "\n"
     << "variant,T,median_ns,macs,peak_bytes,skipped\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.0f", r.median_ns);
    os << to_string(r.variant) << ',' << r.T << ',' << (r.skipped ? "" : buf) << ',' << r.macs << ','
       << r.peak_bytes << ',' << (r.skipped ? 1 : 0) << '\n';
  }
}

}  // namespace wsm
