#pragma once

#include "pace/event_io.hpp"
#include "pace/rng.hpp"

#include <cstdint>
#include <vector>

namespace pace {

/// Two-class moving-bar event stream. Class 0 moves toward larger
/// coordinates (right or down), class 1 toward smaller ones (left or up),
/// each axis with probability 1/2. ON events mark the leading edge, OFF
/// events the trailing edge.
struct ToyOptions {
  int per_class = 500;
  int steps = 6;
  int size = 32;
  GridMode mode = GridMode::Bin;
  int noise_events = 40;
  std::uint64_t seed = 0;
};

std::vector<EventRecord> moving_bar_events(int label, int size, int noise_events, Rng& rng);

/// per_class samples of each class, labels alternating 0, 1, 0, 1, ...
GridSet make_moving_bars(const ToyOptions& opts);

}  // namespace pace
