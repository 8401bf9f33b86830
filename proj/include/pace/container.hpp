#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pace {

/// Binary container used for grids, weights and checkpoints:
///   8-byte magic | u64 header length | JSON header | u64 payload length |
///   payload | u64 FNV-1a checksum of everything before it.
/// All integers little-endian.
struct Container {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
};

void write_container(const std::string& path, std::string_view magic, const Container& c);
Container read_container(const std::string& path, std::string_view magic);

std::vector<std::uint8_t> encode_container(std::string_view magic, const Container& c);
Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic);

// Little-endian append/read helpers for payload construction.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace pace
