#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "json.hpp"
#include "wsm/data.hpp"
#include "wsm/encoder.hpp"
#include "wsm/errors.hpp"
#include "wsm/mixing.hpp"

namespace wsm {

using json = nlohmann::json;

void to_json(json& j, const DatasetSpec& s);
void from_json(const json& j, DatasetSpec& s);
void to_json(json& j, const MixingConfig& c);
void from_json(const json& j, MixingConfig& c);
void to_json(json& j, const EncoderConfig& c);
void from_json(const json& j, EncoderConfig& c);
void to_json(json& j, const ReplacementPlan& p);
void from_json(const json& j, ReplacementPlan& p);

// Little-endian binary primitives.
namespace binary {

template <class T>
T to_little(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void write(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("unexpected end of file");
  return to_little(v);
}

void write_string(std::ostream& os, const std::string& s);
std::string read_string(std::istream& is, std::size_t max_len = 1u << 26);
void expect_magic(std::istream& is, const std::string& magic);

}  // namespace binary
}  // namespace wsm
