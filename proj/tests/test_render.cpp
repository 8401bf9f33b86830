#include "pace/render.hpp"

#include "pace/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>

using namespace pace;

namespace {

struct Rgb {
  int r, g, b;
};

Rgb pixel(const std::vector<std::uint8_t>& ppm, int width, int x, int y) {
  // Skip the three header lines.
  std::size_t pos = 0;
  for (int lines = 0; lines < 3; ++pos)
    if (ppm[pos] == '\n') ++lines;
  const auto at = pos + 3 * (static_cast<std::size_t>(y) * width + x);
  return {ppm[at], ppm[at + 1], ppm[at + 2]};
}

}  // namespace

TEST(Render, ColourKey) {
  EventGrid g(1, 2, 1, 4, GridMode::Bin);
  g.at(0, 1, 0, 0) = 1;  // ON only
  g.at(0, 0, 0, 1) = 1;  // OFF only
  g.at(0, 0, 0, 2) = 1;  // both
  g.at(0, 1, 0, 2) = 1;
  const auto img = render_bin(g, 0);
  EXPECT_EQ(std::string(img.begin(), img.begin() + 2), "P6");
  const auto on = pixel(img, 4, 0, 0), off = pixel(img, 4, 1, 0), both = pixel(img, 4, 2, 0), none = pixel(img, 4, 3, 0);
  EXPECT_EQ(on.r, 255);
  EXPECT_EQ(on.g, 0);
  EXPECT_EQ(on.b, 0);
  EXPECT_EQ(off.r, 0);
  EXPECT_EQ(off.b, 255);
  EXPECT_EQ(both.r + both.g + both.b, 0);
  EXPECT_EQ(none.r + none.g + none.b, 3 * 255);
}

TEST(Render, IntensityScalesWithCount) {
  EventGrid g(1, 2, 1, 3, GridMode::Int);
  g.at(0, 1, 0, 0) = 1;
  g.at(0, 1, 0, 1) = 7;
  g.at(0, 1, 0, 2) = 12;
  const auto img = render_bin(g, 0, 8);
  // Saturation c / 7; the non-red channels fade from 255 to 0.
  EXPECT_EQ(pixel(img, 3, 0, 0).g, static_cast<int>(std::lround(255.0 * (1 - 1.0 / 7))));
  EXPECT_EQ(pixel(img, 3, 1, 0).g, 0);
  EXPECT_EQ(pixel(img, 3, 2, 0).g, 0);
  EXPECT_EQ(pixel(img, 3, 0, 0).r, 255);
}

TEST(Render, ZeroGridIsWhiteAndFilesPerBin) {
  EventGrid g(3, 2, 2, 2, GridMode::Bin);
  const auto dir = (std::filesystem::temp_directory_path() / "pace_render_test").string();
  std::filesystem::create_directories(dir);
  const auto files = render_grid(g, dir, "s", 0);
  ASSERT_EQ(files.size(), 3u);
  for (const auto& f : files) {
    EXPECT_TRUE(std::filesystem::exists(f));
    const auto img = read_file_bytes(f);
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) EXPECT_EQ(pixel(img, 2, x, y).g, 255);
  }
  std::filesystem::remove_all(dir);
}

TEST(Render, NeedsTwoChannels) {
  EventGrid g(1, 1, 2, 2, GridMode::Bin);
  try {
    render_bin(g, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unsupported);
  }
}
