#include "wsm/data.hpp"

#include <fstream>
#include <random>

#include "wsm/errors.hpp"
#include "wsm/io.hpp"

namespace wsm {

namespace {
constexpr const char* kDatasetMagic = "WSMDATA1";
}

void DatasetSpec::validate() const {
  if (min_labels < 1 || max_labels < min_labels) throw ConfigError("bad label length range");
  if (min_run < 1 || max_run < min_run) throw ConfigError("bad frames-per-label range");
  if (noise < 0.0) throw ConfigError("noise must be >= 0");
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (alphabet < 1 || (!adjacent_repeats && alphabet < 2)) throw ConfigError("alphabet too small");
}

Tensor make_prototypes(const DatasetSpec& spec) {
  Rng rng(spec.prototype_seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Tensor protos({spec.alphabet, spec.feature_dim});
  for (auto& v : protos.data()) v = unit(rng);
  return protos;
}

Dataset make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Tensor protos = make_prototypes(spec);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> label_len(spec.min_labels, spec.max_labels);
  std::uniform_int_distribution<std::size_t> run_len(spec.min_run, spec.max_run);
  std::uniform_int_distribution<int> letter(1, static_cast<int>(spec.alphabet));
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset out;
  out.reserve(spec.n);
  for (std::size_t s = 0; s < spec.n; ++s) {
    LabeledSequence seq;
    const std::size_t n_labels = label_len(rng);
    std::vector<std::size_t> runs;
    for (std::size_t i = 0; i < n_labels; ++i) {
      int c = letter(rng);
      while (!spec.adjacent_repeats && !seq.labels.empty() && c == seq.labels.back()) c = letter(rng);
      seq.labels.push_back(c);
      runs.push_back(run_len(rng));
    }
    std::size_t frames = 0;
    for (auto r : runs) frames += r;
    seq.features = Tensor({frames, spec.feature_dim});
    std::size_t t = 0;
    for (std::size_t i = 0; i < n_labels; ++i) {
      const double* proto = protos.row(static_cast<std::size_t>(seq.labels[i] - 1));
      for (std::size_t r = 0; r < runs[i]; ++r, ++t) {
        double* row = seq.features.row(t);
        for (std::size_t c = 0; c < spec.feature_dim; ++c) {
          row[c] = proto[c] + (spec.noise > 0.0 ? spec.noise * noise(rng) : 0.0);
        }
      }
    }
    seq.valid_length = frames;
    out.push_back(std::move(seq));
  }
  return out;
}

void save_dataset(const std::string& path, const DatasetSnapshot& snapshot) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(kDatasetMagic, 8);
  json header = {{"spec", snapshot.spec}, {"seed", snapshot.seed}, {"split", snapshot.split}};
  binary::write_string(os, header.dump());
  binary::write<std::uint64_t>(os, snapshot.samples.size());
  for (const auto& s : snapshot.samples) {
    binary::write<std::uint64_t>(os, s.features.dim(0));
    binary::write<std::uint64_t>(os, s.features.dim(1));
    for (double v : s.features.data()) binary::write(os, v);
    binary::write<std::uint64_t>(os, s.labels.size());
    for (int l : s.labels) binary::write<std::int32_t>(os, l);
  }
  if (!os) throw FormatError("write failed for " + path);
}

DatasetSnapshot load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  binary::expect_magic(is, kDatasetMagic);
  DatasetSnapshot snap;
  const json header = json::parse(binary::read_string(is));
  snap.spec = header.at("spec").get<DatasetSpec>();
  snap.seed = header.at("seed").get<std::uint64_t>();
  snap.split = header.value("split", "");
  const auto n = binary::read<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    LabeledSequence s;
    const auto rows = binary::read<std::uint64_t>(is);
    const auto cols = binary::read<std::uint64_t>(is);
    s.features = Tensor({rows, cols});
    for (auto& v : s.features.data()) v = binary::read<double>(is);
    const auto n_labels = binary::read<std::uint64_t>(is);
    for (std::uint64_t k = 0; k < n_labels; ++k) s.labels.push_back(binary::read<std::int32_t>(is));
    s.valid_length = rows;
    snap.samples.push_back(std::move(s));
  }
  return snap;
}

}  // namespace wsm
