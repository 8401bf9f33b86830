#pragma once

#include "pace/event_io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pace {

/// P6 image of time bin `t` of a two-channel grid (channel 1 = ON,
/// channel 0 = OFF). ON-only pixels are red, OFF-only blue, both black,
/// neither white. With code_size >= 2 an Int count c is drawn at
/// saturation min(1, c / (code_size - 1)); otherwise any count saturates.
std::vector<std::uint8_t> render_bin(const EventGrid& grid, int t, int code_size = 0);

/// One file per bin, <dir>/<prefix>_t<k>.ppm. Returns the paths written.
std::vector<std::string> render_grid(const EventGrid& grid, const std::string& dir, const std::string& prefix,
                                     int code_size = 0);

}  // namespace pace
