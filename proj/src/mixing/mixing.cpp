#include "wsm/mixing.hpp"

#include <algorithm>
#include <cmath>

#include "wsm/errors.hpp"

namespace wsm {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::SM: return "SM";
    case Variant::WSM: return "WSM";
    case Variant::Attention: return "Attention";
  }
  return "?";
}

std::string to_string(BoundaryMode m) {
  return m == BoundaryMode::ZeroPad ? "zero-pad" : "valid-count";
}

Variant parse_variant(const std::string& s) {
  if (s == "SM") return Variant::SM;
  if (s == "WSM") return Variant::WSM;
  if (s == "Attention" || s == "Att") return Variant::Attention;
  throw ConfigError("unknown mixing variant '" + s + "'");
}

BoundaryMode parse_boundary(const std::string& s) {
  if (s == "zero-pad") return BoundaryMode::ZeroPad;
  if (s == "valid-count") return BoundaryMode::ValidCount;
  throw ConfigError("unknown boundary mode '" + s + "' (expected zero-pad or valid-count)");
}

void MixingConfig::validate() const {
  if (d_model < 1) throw ConfigError("d_model must be >= 1");
  if (d_summary < 1) throw ConfigError("d_summary must be >= 1");
  if (window_k < 1) throw ConfigError("window_k must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (variant == Variant::Attention) {
    if (heads < 1 || d_model % heads != 0) {
      throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
  }
}

SequenceMask SequenceMask::full(std::size_t batch, std::size_t frames) {
  return SequenceMask{std::vector<std::size_t>(batch, frames)};
}

void SequenceMask::validate(std::size_t padded_frames) const {
  for (std::size_t n : valid_lengths) {
    if (n < 1 || n > padded_frames) {
      throw ContractError("valid length " + std::to_string(n) + " outside [1, " +
                          std::to_string(padded_frames) + "]");
    }
  }
}

Dense::Dense(const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight(name + ".weight", Tensor({in_dim, out_dim})), bias(name + ".bias", Tensor({out_dim})) {
  const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& w : weight.value.data()) w = dist(rng);
}

Var Dense::operator()(Tape& tape, const Var& x) {
  return linear(x, tape.param(weight), tape.param(bias));
}

void Dense::collect(ParamRefs& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

namespace {

Tape& tape_of(const Var& v) {
  if (v.tape() == nullptr) throw ContractError("Var is not attached to a tape");
  return *v.tape();
}

void check_valid(std::size_t valid, std::size_t rows, const char* op) {
  if (valid == 0) throw EmptySequenceError(std::string(op) + ": sequence has no valid frames");
  if (valid > rows) {
    throw ContractError(std::string(op) + ": valid length " + std::to_string(valid) +
                        " exceeds " + std::to_string(rows) + " frames");
  }
}

// Row prefix sums of the first `valid` rows of x (scaled per row by `row_scale`
// when given): P[0] = 0, P[j+1] = P[j] + x[j].
Tensor row_prefix_sums(const Tensor& x, std::size_t valid, const std::vector<double>* row_scale) {
  const std::size_t d = x.cols();
  Tensor p({valid + 1, d});
  for (std::size_t j = 0; j < valid; ++j) {
    const double* src = x.row(j);
    const double* prev = p.row(j);
    double* dst = p.row(j + 1);
    const double s = row_scale ? (*row_scale)[j] : 1.0;
    for (std::size_t c = 0; c < d; ++c) dst[c] = prev[c] + s * src[c];
  }
  return p;
}

struct WindowBounds {
  std::size_t lo, hi;  // inclusive
};

WindowBounds window_at(std::size_t t, std::size_t k, std::size_t valid) {
  return {t >= k ? t - k : 0, std::min(t + k, valid - 1)};
}

std::vector<double> window_normalizers(std::size_t valid, std::size_t k, BoundaryMode mode) {
  std::vector<double> norm(valid);
  for (std::size_t t = 0; t < valid; ++t) {
    const auto w = window_at(t, k, valid);
    norm[t] = mode == BoundaryMode::ZeroPad ? static_cast<double>(2 * k + 1)
                                            : static_cast<double>(w.hi - w.lo + 1);
  }
  return norm;
}

}  // namespace

Var masked_mean_rows(const Var& x, std::size_t valid) {
  check_valid(valid, x.rows(), "global summary");
  const std::size_t d = x.cols();
  Tensor out({1, d});
  for (std::size_t t = 0; t < valid; ++t) {
    const double* r = x.value().row(t);
    for (std::size_t c = 0; c < d; ++c) out[c] += r[c];
  }
  const double inv = 1.0 / static_cast<double>(valid);
  out *= inv;
  return tape_of(x).make("masked_mean_rows", std::move(out), {&x},
                         [x, valid, inv](const Tensor& g, Tape& t) {
                           Tensor gx(x.shape());
                           for (std::size_t r = 0; r < valid; ++r) {
                             double* dst = gx.row(r);
                             for (std::size_t c = 0; c < gx.cols(); ++c) dst[c] = g[c] * inv;
                           }
                           t.accumulate(x, std::move(gx));
                         });
}

Tensor sliding_window_mean(const Tensor& x, std::size_t valid, std::size_t k, BoundaryMode mode) {
  if (x.rank() != 2) throw DimensionError("windowed summary expects [T×d], got " + to_string(x.shape()));
  check_valid(valid, x.rows(), "windowed summary");
  if (k < 1) throw ConfigError("window_k must be >= 1");
  const std::size_t d = x.cols();
  const Tensor prefix = row_prefix_sums(x, valid, nullptr);
  const auto norm = window_normalizers(valid, k, mode);
  Tensor out(x.shape());
  for (std::size_t t = 0; t < valid; ++t) {
    const auto w = window_at(t, k, valid);
    const double* hi = prefix.row(w.hi + 1);
    const double* lo = prefix.row(w.lo);
    double* dst = out.row(t);
    const double inv = 1.0 / norm[t];
    for (std::size_t c = 0; c < d; ++c) dst[c] = (hi[c] - lo[c]) * inv;
  }
  return out;
}

Var windowed_mean(const Var& x, std::size_t valid, std::size_t k, BoundaryMode mode) {
  Tensor out = sliding_window_mean(x.value(), valid, k, mode);
  return tape_of(x).make(
      "windowed_mean", std::move(out), {&x}, [x, valid, k, mode](const Tensor& g, Tape& t) {
        // Window membership is symmetric, so dx_j = Σ_{t: |t−j|≤k} g_t / norm_t
        // is again a window sum, over g scaled by 1/norm.
        auto inv = window_normalizers(valid, k, mode);
        for (auto& v : inv) v = 1.0 / v;
        const Tensor prefix = row_prefix_sums(g, valid, &inv);
        Tensor gx(x.shape());
        const std::size_t d = gx.cols();
        for (std::size_t j = 0; j < valid; ++j) {
          const auto w = window_at(j, k, valid);
          const double* hi = prefix.row(w.hi + 1);
          const double* lo = prefix.row(w.lo);
          double* dst = gx.row(j);
          for (std::size_t c = 0; c < d; ++c) dst[c] = hi[c] - lo[c];
        }
        t.accumulate(x, std::move(gx));
      });
}

Var attention_core(const Var& q, const Var& k, const Var& v, std::size_t heads, std::size_t valid) {
  if (q.shape() != k.shape() || q.shape() != v.shape() || q.value().rank() != 2) {
    throw DimensionError("attention: Q " + to_string(q.shape()) + ", K " + to_string(k.shape()) +
                         ", V " + to_string(v.shape()) + " must be equal [T×d]");
  }
  const std::size_t rows = q.rows(), d = q.cols();
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  check_valid(valid, rows, "attention");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tape& tape = tape_of(q);
  const bool keep = tape.recording() &&
                    (q.requires_grad() || k.requires_grad() || v.requires_grad());

  Tensor out(q.shape());
  auto probs = keep ? std::make_shared<Tensor>(Shape{heads, valid, valid}) : nullptr;
  Tensor row_buf = keep ? Tensor() : Tensor({valid});
  const Tensor& qv = q.value();
  const Tensor& vv = v.value();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    Tensor kh({valid, dh});
    for (std::size_t j = 0; j < valid; ++j) std::copy_n(k.value().row(j) + off, dh, kh.row(j));
    for (std::size_t i = 0; i < valid; ++i) {
      double* p = keep ? probs->data().data() + (h * valid + i) * valid : row_buf.data().data();
      const double* qi = qv.row(i) + off;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < valid; ++j) {
        const double* kj = kh.row(j);
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        p[j] = s * scale;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < valid; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      const double iz = 1.0 / z;
      double* oi = out.row(i) + off;
      for (std::size_t j = 0; j < valid; ++j) {
        p[j] *= iz;
        const double* vj = vv.row(j) + off;
        const double pj = p[j];
        for (std::size_t c = 0; c < dh; ++c) oi[c] += pj * vj[c];
      }
    }
  }
  counters::macs() += 2ull * heads * valid * valid * dh;

  return tape.make(
      "attention", std::move(out), {&q, &k, &v},
      [q, k, v, probs, heads, valid, dh, scale](const Tensor& g, Tape& t) {
        Tensor dq(q.shape()), dk(k.shape()), dv(v.shape());
        std::vector<double> dp(valid);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < valid; ++i) {
            const double* p = probs->data().data() + (h * valid + i) * valid;
            const double* gi = g.row(i) + off;
            double dot = 0.0;
            for (std::size_t j = 0; j < valid; ++j) {
              const double* vj = v.value().row(j) + off;
              double* dvj = dv.row(j) + off;
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) {
                s += gi[c] * vj[c];
                dvj[c] += p[j] * gi[c];
              }
              dp[j] = s;
              dot += s * p[j];
            }
            const double* qi = q.value().row(i) + off;
            double* dqi = dq.row(i) + off;
            for (std::size_t j = 0; j < valid; ++j) {
              const double ds = p[j] * (dp[j] - dot) * scale;
              const double* kj = k.value().row(j) + off;
              double* dkj = dk.row(j) + off;
              for (std::size_t c = 0; c < dh; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
              }
            }
          }
        }
        t.accumulate(q, std::move(dq));
        t.accumulate(k, std::move(dk));
        t.accumulate(v, std::move(dv));
      });
}

SummaryMixingBlock::SummaryMixingBlock(const std::string& name, const MixingConfig& config,
                                       Rng& rng)
    : config_(config) {
  config_.validate();
  if (config_.variant == Variant::Attention) {
    throw ConfigError("SummaryMixingBlock needs variant SM or WSM");
  }
  const std::size_t d = config_.d_model, ds = config_.d_summary;
  const std::size_t arity = config_.variant == Variant::WSM ? 3 : 2;
  ff_local = Dense(name + ".ff_local", d, ds, rng);
  ff_summary = Dense(name + ".ff_summary", d, ds, rng);
  if (config_.variant == Variant::WSM && !config_.share_summary) {
    ff_window = Dense(name + ".ff_window", d, ds, rng);
  }
  ff_out = Dense(name + ".ff_out", arity * ds, d, rng);
}

Var SummaryMixingBlock::local_features(Tape& tape, const Var& h) { return gelu(ff_local(tape, h)); }

Var SummaryMixingBlock::summary_features(Tape& tape, const Var& h) {
  return gelu(ff_summary(tape, h));
}

Var SummaryMixingBlock::window_features(Tape& tape, const Var& h) {
  return config_.share_summary ? summary_features(tape, h) : gelu(ff_window(tape, h));
}

Var SummaryMixingBlock::global_summary(Tape& tape, const Var& h, std::size_t valid) {
  return masked_mean_rows(summary_features(tape, h), valid);
}

Var SummaryMixingBlock::windowed_summary(Tape& tape, const Var& h, std::size_t valid) {
  return windowed_mean(window_features(tape, h), valid, config_.window_k, config_.boundary);
}

Var SummaryMixingBlock::combine(Tape& tape, const Var& local, const Var& s_g, const Var& s_w,
                                std::size_t valid, const ForwardContext& ctx) {
  std::vector<Var> parts{local, broadcast_rows(s_g, local.rows())};
  if (config_.variant == Variant::WSM) {
    if (!s_w.defined()) throw ContractError("WSM combine needs a windowed summary");
    parts.push_back(s_w);
  }
  Var y = gelu(ff_out(tape, concat(parts, 1)));
  y = dropout(y, config_.dropout, ctx);
  return mask_rows(y, valid);
}

Var SummaryMixingBlock::forward(Tape& tape, const Var& h, std::size_t valid,
                                const ForwardContext& ctx) {
  if (h.value().rank() != 2 || h.cols() != config_.d_model) {
    throw DimensionError("mixing block expects [T×" + std::to_string(config_.d_model) + "], got " +
                         to_string(h.shape()));
  }
  check_valid(valid, h.rows(), "summary mixing");
  Var local = local_features(tape, h);
  Var summaries = summary_features(tape, h);
  Var s_g = masked_mean_rows(summaries, valid);
  Var s_w;
  if (config_.variant == Variant::WSM) {
    Var source = config_.share_summary ? summaries : gelu(ff_window(tape, h));
    s_w = windowed_mean(source, valid, config_.window_k, config_.boundary);
  }
  return combine(tape, local, s_g, s_w, valid, ctx);
}

void SummaryMixingBlock::collect(ParamRefs& out) {
  ff_local.collect(out);
  ff_summary.collect(out);
  if (config_.variant == Variant::WSM && !config_.share_summary) ff_window.collect(out);
  ff_out.collect(out);
}

std::unique_ptr<MixingBlock> SummaryMixingBlock::clone() const {
  return std::make_unique<SummaryMixingBlock>(*this);
}

AttentionBlock::AttentionBlock(const std::string& name, const MixingConfig& config, Rng& rng)
    : config_(config) {
  config_.variant = Variant::Attention;
  config_.validate();
  const std::size_t d = config_.d_model;
  query = Dense(name + ".query", d, d, rng);
  key = Dense(name + ".key", d, d, rng);
  value = Dense(name + ".value", d, d, rng);
  output = Dense(name + ".output", d, d, rng);
}

Var AttentionBlock::forward(Tape& tape, const Var& h, std::size_t valid, const ForwardContext&) {
  if (h.value().rank() != 2 || h.cols() != config_.d_model) {
    throw DimensionError("attention block expects [T×" + std::to_string(config_.d_model) +
                         "], got " + to_string(h.shape()));
  }
  Var ctx = attention_core(query(tape, h), key(tape, h), value(tape, h), config_.heads, valid);
  return mask_rows(output(tape, ctx), valid);
}

void AttentionBlock::collect(ParamRefs& out) {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

std::unique_ptr<MixingBlock> AttentionBlock::clone() const {
  return std::make_unique<AttentionBlock>(*this);
}

std::unique_ptr<MixingBlock> make_mixing_block(const std::string& name, const MixingConfig& config,
                                               Rng& rng) {
  if (config.variant == Variant::Attention) {
    return std::make_unique<AttentionBlock>(name, config, rng);
  }
  return std::make_unique<SummaryMixingBlock>(name, config, rng);
}

std::size_t parameter_count(MixingBlock& block) {
  ParamRefs refs;
  block.collect(refs);
  std::size_t n = 0;
  for (const auto* p : refs) n += p->value.size();
  return n;
}

}  // namespace wsm
