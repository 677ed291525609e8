#pragma once

// Binary parameter container.
//
//   bytes 0..7   magic "BXCKPT\0\0"
//   bytes 8..11  container version, uint32 little-endian
//   bytes 12..19 header length N, uint64 little-endian
//   N bytes      JSON header: {"format", "meta", "rng_state",
//                "tensors": [{"name", "rows", "cols", "offset"}]}
//   payload      tensors as row-major float64 little-endian; offsets are
//                relative to the payload start

#include "brantx/common.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace brantx {

using Json = nlohmann::json;

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointFormat = "bx-checkpoint/1";

struct Checkpoint {
  Json meta = Json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;
  std::string rng_state;

  const Matrix& tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return m;
    throw ValidationError("checkpoint has no tensor named '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.first == name) return true;
    return false;
  }
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<T>(u);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return data;
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Json header;
  header["format"] = kCheckpointFormat;
  header["meta"] = ckpt.meta;
  header["rng_state"] = ckpt.rng_state;
  Json table = Json::array();
  std::string payload;
  for (const auto& [name, m] : ckpt.tensors) {
    table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", payload.size()}});
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) detail::put_le(payload, m(r, c));
  }
  header["tensors"] = std::move(table);
  const std::string head = header.dump();
  std::string out("BXCKPT\0\0", 8);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint64_t>(head.size()));
  out += head;
  out += payload;
  detail::write_file(path, out);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  if (data.size() < 20 || std::memcmp(data.data(), "BXCKPT\0\0", 8) != 0)
    throw ValidationError(path.string() + ": not a checkpoint file");
  const auto version = detail::get_le<std::uint32_t>(data.data() + 8);
  if (version != kCheckpointVersion)
    throw ValidationError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto head_len = detail::get_le<std::uint64_t>(data.data() + 12);
  if (20 + head_len > data.size()) throw ValidationError(path.string() + ": truncated checkpoint header");
  Json header;
  try {
    header = Json::parse(data.substr(20, head_len));
  } catch (const Json::exception& e) {
    throw ValidationError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", Json::object());
  ckpt.rng_state = header.value("rng_state", std::string{});
  const std::size_t base = 20 + head_len;
  for (const auto& t : header.at("tensors")) {
    const Index rows = t.at("rows").get<Index>();
    const Index cols = t.at("cols").get<Index>();
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * 8;
    if (base + offset + bytes > data.size())
      throw ValidationError(path.string() + ": tensor '" + t.at("name").get<std::string>() + "' is truncated");
    Matrix m(rows, cols);
    const char* p = data.data() + base + offset;
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c, p += 8) m(r, c) = detail::get_le<double>(p);
    ckpt.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ckpt;
}

}  // namespace brantx
