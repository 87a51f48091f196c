#include "wsm/io.hpp"

namespace wsm {

void to_json(json& j, const DatasetSpec& s) {
  j = json{{"n", s.n},
           {"min_labels", s.min_labels},
           {"max_labels", s.max_labels},
           {"min_run", s.min_run},
           {"max_run", s.max_run},
           {"noise", s.noise},
           {"feature_dim", s.feature_dim},
           {"alphabet", s.alphabet},
           {"prototype_seed", s.prototype_seed},
           {"adjacent_repeats", s.adjacent_repeats}};
}

void from_json(const json& j, DatasetSpec& s) {
  DatasetSpec d;
  s.n = j.value("n", d.n);
  s.min_labels = j.value("min_labels", d.min_labels);
  s.max_labels = j.value("max_labels", d.max_labels);
  s.min_run = j.value("min_run", d.min_run);
  s.max_run = j.value("max_run", d.max_run);
  s.noise = j.value("noise", d.noise);
  s.feature_dim = j.value("feature_dim", d.feature_dim);
  s.alphabet = j.value("alphabet", d.alphabet);
  s.prototype_seed = j.value("prototype_seed", d.prototype_seed);
  s.adjacent_repeats = j.value("adjacent_repeats", d.adjacent_repeats);
}

void to_json(json& j, const MixingConfig& c) {
  j = json{{"d_model", c.d_model},
           {"d_summary", c.d_summary},
           {"window_k", c.window_k},
           {"boundary", to_string(c.boundary)},
           {"variant", to_string(c.variant)},
           {"heads", c.heads},
           {"share_summary", c.share_summary},
           {"dropout", c.dropout}};
}

void from_json(const json& j, MixingConfig& c) {
  MixingConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.d_summary = j.value("d_summary", d.d_summary);
  c.window_k = j.value("window_k", d.window_k);
  c.boundary = parse_boundary(j.value("boundary", to_string(d.boundary)));
  c.variant = parse_variant(j.value("variant", to_string(d.variant)));
  c.heads = j.value("heads", d.heads);
  c.share_summary = j.value("share_summary", d.share_summary);
  c.dropout = j.value("dropout", d.dropout);
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"d_in", c.d_in},     {"d_model", c.d_model}, {"layers", c.layers},
           {"heads", c.heads},   {"d_ff", c.d_ff},       {"vocab", c.vocab}};
}

void from_json(const json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.d_in = j.value("d_in", d.d_in);
  c.d_model = j.value("d_model", d.d_model);
  c.layers = j.value("layers", d.layers);
  c.heads = j.value("heads", d.heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.vocab = j.value("vocab", d.vocab);
}

void to_json(json& j, const ReplacementPlan& p) {
  j = json{{"replace_last_n", p.replace_last_n}, {"variant", to_string(p.variant)}, {"seed", p.seed}};
}

void from_json(const json& j, ReplacementPlan& p) {
  p.replace_last_n = j.at("replace_last_n").get<std::size_t>();
  p.variant = parse_plan_variant(j.at("variant").get<std::string>());
  p.seed = j.value("seed", std::uint64_t{0});
}

namespace binary {

void write_string(std::ostream& os, const std::string& s) {
  write<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, std::size_t max_len) {
  const auto n = read<std::uint64_t>(is);
  if (n > max_len) throw FormatError("string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("unexpected end of file in string");
  return s;
}

void expect_magic(std::istream& is, const std::string& magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!is || got != magic) throw FormatError("bad magic, expected " + magic);
}

}  // namespace binary
}  // namespace wsm
