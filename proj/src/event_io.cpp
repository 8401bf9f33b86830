#include "pace/event_io.hpp"

#include "pace/container.hpp"
#include "pace/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

namespace pace {

const char* to_string(GridMode mode) noexcept { return mode == GridMode::Bin ? "bin" : "int"; }

GridMode grid_mode_from_string(std::string_view s) {
  if (s == "bin") return GridMode::Bin;
  if (s == "int") return GridMode::Int;
  throw Error(ErrorKind::Value, "grid mode must be 'bin' or 'int', got '" + std::string(s) + "'");
}

EventGrid::EventGrid(int t, int c, int h, int w, GridMode m)
    : steps(t), channels(c), height(h), width(w), mode(m) {
  require(t >= 1 && c >= 1 && h >= 1 && w >= 1, "grid dimensions must be positive");
  values = Values::Zero(static_cast<Eigen::Index>(t) * c * h * w);
}

void EventGrid::clamp(std::uint32_t max_value) { values = values.min(max_value); }

namespace {

void sort_by_time(std::vector<EventRecord>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const EventRecord& a, const EventRecord& b) { return a.t < b.t; });
}

}  // namespace

std::vector<EventRecord> parse_nmnist(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 5 != 0)
    throw Error(ErrorKind::Malformed,
                "N-MNIST length " + std::to_string(bytes.size()) + " is not a multiple of 5");
  std::vector<EventRecord> events;
  events.reserve(bytes.size() / 5);
  for (std::size_t off = 0; off < bytes.size(); off += 5) {
    const auto* e = bytes.data() + off;
    if (e[0] >= kNmnistSensorSize || e[1] >= kNmnistSensorSize)
      throw Error(ErrorKind::OutOfRange, "coordinate (" + std::to_string(e[0]) + "," +
                                             std::to_string(e[1]) + ") outside 34x34 sensor at byte offset " +
                                             std::to_string(off));
    EventRecord r;
    r.x = e[0];
    r.y = e[1];
    r.p = (e[2] >> 7) & 1u;
    r.t = (std::uint64_t{e[2] & 0x7Fu} << 16) | (std::uint64_t{e[3]} << 8) | e[4];
    events.push_back(r);
  }
  sort_by_time(events);
  return events;
}

std::vector<std::uint8_t> serialize_nmnist(std::span<const EventRecord> events) {
  std::vector<std::uint8_t> out;
  out.reserve(events.size() * 5);
  for (const auto& e : events) {
    require(e.x < kNmnistSensorSize && e.y < kNmnistSensorSize && e.p <= 1 && e.t < (1u << 23),
            "event does not fit the N-MNIST layout");
    out.push_back(static_cast<std::uint8_t>(e.x));
    out.push_back(static_cast<std::uint8_t>(e.y));
    out.push_back(static_cast<std::uint8_t>((e.p << 7) | ((e.t >> 16) & 0x7F)));
    out.push_back(static_cast<std::uint8_t>((e.t >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(e.t & 0xFF));
  }
  return out;
}

std::vector<EventRecord> parse_evt_text(std::string_view text) {
  std::vector<EventRecord> events;
  std::size_t line_no = 0;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream tokens(line);
    std::string tok;
    std::uint64_t fields[4] = {};
    int count = 0;
    while (tokens >> tok) {
      if (count == 4)
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 4 fields");
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw Error(ErrorKind::Parse,
                    "line " + std::to_string(line_no) + ": '" + tok + "' is not a non-negative integer");
      fields[count++] = v;
    }
    if (count != 4)
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected 4 fields");
    if (fields[3] > 1)
      throw Error(ErrorKind::Value,
                  "line " + std::to_string(line_no) + ": polarity must be 0 or 1, got " + std::to_string(fields[3]));
    if (fields[1] > UINT32_MAX || fields[2] > UINT32_MAX)
      throw Error(ErrorKind::Value, "line " + std::to_string(line_no) + ": coordinate too large");
    events.push_back({fields[0], static_cast<std::uint32_t>(fields[1]), static_cast<std::uint32_t>(fields[2]),
                      static_cast<std::uint8_t>(fields[3])});
  }
  sort_by_time(events);
  return events;
}

std::string format_evt_text(std::span<const EventRecord> events) {
  std::string out = "# t x y p\n";
  for (const auto& e : events) {
    out += std::to_string(e.t) + ' ' + std::to_string(e.x) + ' ' + std::to_string(e.y) + ' ' +
           std::to_string(int{e.p}) + '\n';
  }
  return out;
}

EventGrid voxelize(std::span<const EventRecord> events, int steps, int channels, int height, int width,
                   GridMode mode) {
  require(channels == 1 || channels == 2, "channel count must be 1 or 2");
  EventGrid grid(steps, channels, height, width, mode);
  if (events.empty()) return grid;

  const std::uint64_t t0 = events.front().t;
  const std::uint64_t t1 = events.back().t;
  require(t1 >= t0, "events must be sorted by timestamp");
  const std::uint64_t duration = events.size() == 1 ? 1 : t1 - t0;
  grid.bin_width_us = (duration + steps) / static_cast<std::uint64_t>(steps);

  for (const auto& e : events) {
    require(e.t >= t0, "events must be sorted by timestamp");
    if (e.x >= static_cast<std::uint32_t>(width) || e.y >= static_cast<std::uint32_t>(height))
      throw Error(ErrorKind::OutOfRange, "event at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                                             ") outside " + std::to_string(width) + "x" + std::to_string(height));
    const auto bin = static_cast<int>((e.t - t0) * static_cast<std::uint64_t>(steps) / (duration + 1));
    const int c = channels == 2 ? e.p : 0;
    auto& v = grid.at(bin, c, static_cast<int>(e.y), static_cast<int>(e.x));
    v = mode == GridMode::Bin ? 1u : v + 1u;
  }
  return grid;
}

EventGrid resample_spatial(const EventGrid& grid, int height_out, int width_out) {
  if (height_out > grid.height || width_out > grid.width)
    throw Error(ErrorKind::Unsupported, "resample_spatial only downsamples (" + std::to_string(grid.height) + "x" +
                                            std::to_string(grid.width) + " -> " + std::to_string(height_out) + "x" +
                                            std::to_string(width_out) + ")");
  require(height_out >= 1 && width_out >= 1, "target size must be positive");
  EventGrid out(grid.steps, grid.channels, height_out, width_out, grid.mode);
  out.bin_width_us = grid.bin_width_us;
  // Source row y maps to output row floor(y * Ho / H); this is the inverse of
  // the proportional ranges [ceil(i*H/Ho), ceil((i+1)*H/Ho)).
  for (int t = 0; t < grid.steps; ++t)
    for (int c = 0; c < grid.channels; ++c)
      for (int y = 0; y < grid.height; ++y) {
        const int oy = static_cast<int>(static_cast<long long>(y) * height_out / grid.height);
        for (int x = 0; x < grid.width; ++x) {
          const int ox = static_cast<int>(static_cast<long long>(x) * width_out / grid.width);
          out.at(t, c, oy, ox) += grid.at(t, c, y, x);
        }
      }
  if (out.mode == GridMode::Bin) out.clamp(1);
  return out;
}

EventGrid pad_spatial(const EventGrid& grid, int height_out, int width_out) {
  require(height_out >= grid.height && width_out >= grid.width, "pad_spatial only enlarges");
  EventGrid out(grid.steps, grid.channels, height_out, width_out, grid.mode);
  out.bin_width_us = grid.bin_width_us;
  const int oy = (height_out - grid.height) / 2;
  const int ox = (width_out - grid.width) / 2;
  for (int t = 0; t < grid.steps; ++t)
    for (int c = 0; c < grid.channels; ++c)
      for (int y = 0; y < grid.height; ++y)
        for (int x = 0; x < grid.width; ++x) out.at(t, c, y + oy, x + ox) = grid.at(t, c, y, x);
  return out;
}

Eigen::MatrixXd to_input(const EventGrid& grid) {
  const Eigen::Index hw = static_cast<Eigen::Index>(grid.height) * grid.width;
  Eigen::MatrixXd input(grid.channels, grid.steps * hw);
  for (int t = 0; t < grid.steps; ++t)
    for (int c = 0; c < grid.channels; ++c)
      for (Eigen::Index p = 0; p < hw; ++p)
        input(c, t * hw + p) = static_cast<double>(grid.values[grid.index(t, c, 0, 0) + p]);
  return input;
}

namespace {
constexpr std::string_view kGridMagic = "PACEGRD1";
}

void write_grid_set(const std::string& path, const GridSet& set) {
  require(set.grids.size() == set.labels.size(), "grid/label count mismatch");
  Container c;
  c.header["count"] = set.grids.size();
  c.header["labels"] = set.labels;
  c.header["code_size"] = set.code_size;
  if (!set.grids.empty()) {
    const auto& g = set.grids.front();
    c.header["mode"] = to_string(g.mode);
    c.header["T"] = g.steps;
    c.header["C"] = g.channels;
    c.header["H"] = g.height;
    c.header["W"] = g.width;
  }
  std::vector<std::uint64_t> widths;
  for (const auto& g : set.grids) {
    widths.push_back(g.bin_width_us);
    require(g.same_shape(set.grids.front()) && g.mode == set.grids.front().mode,
            "all grids in a set must share shape and mode");
    for (auto v : g.values) put_u32(c.payload, v);
  }
  c.header["bin_width_us"] = widths;
  write_container(path, kGridMagic, c);
}

GridSet read_grid_set(const std::string& path) {
  const auto c = read_container(path, kGridMagic);
  GridSet set;
  try {
    const auto count = c.header.at("count").get<std::size_t>();
    set.labels = c.header.at("labels").get<std::vector<int>>();
    set.code_size = c.header.at("code_size").get<int>();
    if (set.labels.size() != count) throw Error(ErrorKind::Corrupt, "label count mismatch in " + path);
    if (count == 0) return set;
    const auto mode = grid_mode_from_string(c.header.at("mode").get<std::string>());
    const int t = c.header.at("T"), ch = c.header.at("C"), h = c.header.at("H"), w = c.header.at("W");
    const auto widths = c.header.at("bin_width_us").get<std::vector<std::uint64_t>>();
    if (widths.size() != count) throw Error(ErrorKind::Corrupt, "bin width count mismatch in " + path);
    ByteReader r(c.payload);
    for (std::size_t i = 0; i < count; ++i) {
      EventGrid g(t, ch, h, w, mode);
      g.bin_width_us = widths[i];
      for (Eigen::Index k = 0; k < g.size(); ++k) g.values[k] = r.u32();
      set.grids.push_back(std::move(g));
    }
    if (r.remaining() != 0) throw Error(ErrorKind::Corrupt, "trailing payload in " + path);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Corrupt, path + ": " + e.what());
  }
  return set;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace pace
