#include "pace/container.hpp"

#include "pace/error.hpp"
#include "pace/rng.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) throw Error(ErrorKind::Corrupt, "unexpected end of data");
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
  pos_ += 8;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

namespace {

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_container(std::string_view magic, const Container& c) {
  require(magic.size() == 8, "container magic must be 8 bytes");
  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  const std::string header = c.header.dump();
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  put_u64(out, c.payload.size());
  out.insert(out.end(), c.payload.begin(), c.payload.end());
  put_u64(out, checksum(out));
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic) {
  if (bytes.size() < 8 + 8 + 8 + 8) throw Error(ErrorKind::Corrupt, "container truncated");
  if (!std::equal(magic.begin(), magic.end(), bytes.begin()))
    throw Error(ErrorKind::Malformed, "bad container magic, expected " + std::string(magic));
  const auto body = bytes.first(bytes.size() - 8);
  ByteReader tail(bytes.last(8));
  if (tail.u64() != checksum(body)) throw Error(ErrorKind::Corrupt, "container checksum mismatch");

  ByteReader r(body.subspan(8));
  const auto header_len = r.u64();
  if (header_len > r.remaining()) throw Error(ErrorKind::Corrupt, "header length exceeds data");
  const auto* hp = body.data() + 16;
  Container c;
  try {
    c.header = nlohmann::json::parse(hp, hp + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Corrupt, std::string("container header: ") + e.what());
  }
  ByteReader rest(body.subspan(16 + header_len));
  const auto payload_len = rest.u64();
  if (payload_len != rest.remaining()) throw Error(ErrorKind::Corrupt, "payload length mismatch");
  const auto* pp = body.data() + 24 + header_len;
  c.payload.assign(pp, pp + payload_len);
  return c;
}

void write_container(const std::string& path, std::string_view magic, const Container& c) {
  const auto bytes = encode_container(magic, c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

Container read_container(const std::string& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes, magic);
}

}  // namespace pace
