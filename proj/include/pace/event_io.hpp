#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pace {

/// One asynchronous DVS event. Polarity is 1 for ON, 0 for OFF.
struct EventRecord {
  std::uint64_t t = 0;  // microseconds
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint8_t p = 0;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

enum class GridMode { Bin, Int };

const char* to_string(GridMode mode) noexcept;
GridMode grid_mode_from_string(std::string_view s);

/// T x C x H x W event tensor of non-negative counts, stored densely with
/// index ((t * C + c) * H + y) * W + x.
struct EventGrid {
  using Values = Eigen::Array<std::uint32_t, Eigen::Dynamic, 1>;

  int steps = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  GridMode mode = GridMode::Int;
  std::uint64_t bin_width_us = 0;
  Values values;

  EventGrid() = default;
  EventGrid(int t, int c, int h, int w, GridMode m);

  Eigen::Index size() const noexcept { return values.size(); }
  Eigen::Index index(int t, int c, int y, int x) const noexcept {
    return ((static_cast<Eigen::Index>(t) * channels + c) * height + y) * width + x;
  }
  std::uint32_t& at(int t, int c, int y, int x) { return values[index(t, c, y, x)]; }
  std::uint32_t at(int t, int c, int y, int x) const { return values[index(t, c, y, x)]; }

  bool same_shape(const EventGrid& other) const noexcept {
    return steps == other.steps && channels == other.channels && height == other.height &&
           width == other.width;
  }

  /// Clamp every voxel to at most `max_value` (Bin mode uses 1).
  void clamp(std::uint32_t max_value);

  friend bool operator==(const EventGrid& a, const EventGrid& b) {
    return a.same_shape(b) && a.mode == b.mode && a.bin_width_us == b.bin_width_us &&
           (a.values == b.values).all();
  }
};

inline constexpr int kNmnistSensorSize = 34;

/// Decode the 5-byte-per-event N-MNIST layout; result is stably sorted by t.
std::vector<EventRecord> parse_nmnist(std::span<const std::uint8_t> bytes);

/// Inverse of parse_nmnist for records that fit the layout (t < 2^23).
std::vector<std::uint8_t> serialize_nmnist(std::span<const EventRecord> events);

/// Parse "t x y p" lines; '#' lines are comments. Result is stably sorted by t.
std::vector<EventRecord> parse_evt_text(std::string_view text);

std::string format_evt_text(std::span<const EventRecord> events);

/// Bin events into a T x C x height x width grid. Event i goes to bin
/// floor((t_i - t_first) * T / (duration + 1)).
EventGrid voxelize(std::span<const EventRecord> events, int steps, int channels, int height,
                   int width, GridMode mode);

/// Count-preserving sum pooling to a smaller spatial size; Bin grids are
/// re-clamped to {0,1}.
EventGrid resample_spatial(const EventGrid& grid, int height_out, int width_out);

/// Embed a grid centered in a larger zero canvas.
EventGrid pad_spatial(const EventGrid& grid, int height_out, int width_out);

/// Grid as network input: C rows x (T * H * W) columns, column t * H * W + y * W + x.
Eigen::MatrixXd to_input(const EventGrid& grid);

/// Raw container for a batch of labeled grids (header + little-endian
/// uint32 voxels); see FORMATS.md.
struct GridSet {
  std::vector<EventGrid> grids;
  std::vector<int> labels;
  int code_size = 0;  // N of the quantizer that produced the grids, 0 for real data
};

void write_grid_set(const std::string& path, const GridSet& set);
GridSet read_grid_set(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

}  // namespace pace
