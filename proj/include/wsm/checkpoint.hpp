#pragma once

#include <string>

#include "json.hpp"
#include "wsm/encoder.hpp"

namespace wsm {

// Checkpoint layout (all integers little-endian):
//   "WSMCKPT1"
//   u64 header length, JSON header {encoder, mixing, plan, head_seed, extra}
//   u64 parameter count
//   per parameter: u64 name length, name, u64 rank, u64 dims[rank],
//                  product(dims) little-endian doubles
void save_checkpoint(const std::string& path, FinetuneModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  FinetuneModel model;
  nlohmann::json extra;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace wsm
