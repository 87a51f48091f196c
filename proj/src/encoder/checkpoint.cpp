#include "wsm/checkpoint.hpp"

#include <fstream>
#include <unordered_map>

#include "wsm/io.hpp"

namespace wsm {

namespace {
constexpr const char* kCheckpointMagic = "WSMCKPT1";
}

void save_checkpoint(const std::string& path, FinetuneModel& model, const json& extra) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(kCheckpointMagic, 8);
  const json header = {{"encoder", model.stack.config},
                       {"mixing", model.summary},
                       {"plan", model.plan},
                       {"head_seed", model.head_seed},
                       {"extra", extra}};
  binary::write_string(os, header.dump());
  const ParamRefs params = model.all_parameters();
  binary::write<std::uint64_t>(os, params.size());
  for (const auto* p : params) {
    binary::write_string(os, p->name);
    binary::write<std::uint64_t>(os, p->value.rank());
    for (auto d : p->value.shape()) binary::write<std::uint64_t>(os, d);
    for (double v : p->value.data()) binary::write(os, v);
  }
  if (!os) throw FormatError("write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  binary::expect_magic(is, kCheckpointMagic);
  const json header = json::parse(binary::read_string(is));
  const auto config = header.at("encoder").get<EncoderConfig>();
  const auto summary = header.at("mixing").get<MixingConfig>();
  const auto plan = header.at("plan").get<ReplacementPlan>();
  const auto head_seed = header.at("head_seed").get<std::uint64_t>();

  // Build the architecture, then overwrite every parameter by name.
  Rng rng(0);
  const EncoderStack skeleton(config, rng);
  LoadedCheckpoint out{FinetuneModel(skeleton, plan, summary, head_seed), header.value("extra", json::object())};
  std::unordered_map<std::string, Parameter*> by_name;
  for (auto* p : out.model.all_parameters()) by_name.emplace(p->name, p);

  const auto count = binary::read<std::uint64_t>(is);
  if (count != by_name.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(by_name.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = binary::read_string(is, 4096);
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("unknown parameter " + name);
    const auto rank = binary::read<std::uint64_t>(is);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(binary::read<std::uint64_t>(is));
    Parameter& p = *it->second;
    if (shape != p.value.shape()) {
      throw FormatError("parameter " + name + " has shape " + to_string(shape) + ", expected " +
                        to_string(p.value.shape()));
    }
    for (auto& v : p.value.data()) v = binary::read<double>(is);
    by_name.erase(it);
  }
  return out;
}

}  // namespace wsm
