#include "pace/render.hpp"

#include "pace/error.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace pace {

namespace {

double saturation(std::uint32_t count, GridMode mode, int code_size) {
  if (count == 0) return 0.0;
  if (mode == GridMode::Bin || code_size < 2) return 1.0;
  return std::min(1.0, static_cast<double>(count) / (code_size - 1));
}

std::uint8_t fade(double s) { return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - s))); }

}  // namespace

std::vector<std::uint8_t> render_bin(const EventGrid& grid, int t, int code_size) {
  if (grid.channels != 2)
    throw Error(ErrorKind::Unsupported, "rendering needs two polarity channels, got " + std::to_string(grid.channels));
  require(t >= 0 && t < grid.steps, "time bin out of range");
  const std::string head = "P6\n" + std::to_string(grid.width) + " " + std::to_string(grid.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.reserve(out.size() + 3 * static_cast<std::size_t>(grid.width) * grid.height);
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x) {
      const double on = saturation(grid.at(t, 1, y, x), grid.mode, code_size);
      const double off = saturation(grid.at(t, 0, y, x), grid.mode, code_size);
      std::uint8_t rgb[3] = {255, 255, 255};
      if (on > 0 && off > 0) {
        rgb[0] = rgb[1] = rgb[2] = 0;
      } else if (on > 0) {
        rgb[1] = rgb[2] = fade(on);
      } else if (off > 0) {
        rgb[0] = rgb[1] = fade(off);
      }
      out.insert(out.end(), rgb, rgb + 3);
    }
  return out;
}

std::vector<std::string> render_grid(const EventGrid& grid, const std::string& dir, const std::string& prefix,
                                     int code_size) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (int t = 0; t < grid.steps; ++t) {
    const auto bytes = render_bin(grid, t, code_size);
    const auto path = (std::filesystem::path(dir) / (prefix + "_t" + std::to_string(t) + ".ppm")).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace pace
