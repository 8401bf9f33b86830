#include "pace/toy_data.hpp"

#include "pace/error.hpp"

#include <algorithm>
#include <cmath>

namespace pace {

namespace {
constexpr std::uint64_t kDurationUs = 60'000;
constexpr int kSubsteps = 30;
}  // namespace

std::vector<EventRecord> moving_bar_events(int label, int size, int noise_events, Rng& rng) {
  require(label == 0 || label == 1, "moving bars have two classes");
  require(size >= 8, "moving-bar canvas must be at least 8 pixels");
  std::uniform_int_distribution<int> width_dist(2, 3);
  std::uniform_int_distribution<int> length_dist(size / 4, size / 2);
  std::uniform_real_distribution<double> speed_dist(0.25, 0.5);  // pixels per substep
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int width = width_dist(rng);
  const int length = length_dist(rng);
  const int top = std::uniform_int_distribution<int>(0, size - length)(rng);
  const double speed = speed_dist(rng);
  const double travel = speed * kSubsteps;
  const double start = unit(rng) * std::max(0.0, size - width - travel);
  const int dir = label == 0 ? 1 : -1;
  const bool vertical = unit(rng) < 0.5;  // motion along y: the generator's x becomes y

  std::vector<EventRecord> events;
  auto emit = [&](std::uint64_t t, int x, int y, int p) {
    if (vertical) std::swap(x, y);
    if (x >= 0 && x < size && y >= 0 && y < size)
      events.push_back({t, static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), static_cast<std::uint8_t>(p)});
  };
  int prev_lo = -1;
  for (int k = 0; k <= kSubsteps; ++k) {
    const double offset = speed * k;
    const double pos = dir > 0 ? start + offset : start + travel - offset;
    const int lo = static_cast<int>(std::floor(pos));
    if (lo == prev_lo) continue;
    const std::uint64_t t = kDurationUs * static_cast<std::uint64_t>(k) / kSubsteps;
    const int lead = dir > 0 ? lo + width - 1 : lo;
    const int trail = dir > 0 ? lo - 1 : lo + width;
    for (int y = top; y < top + length; ++y) {
      emit(t, lead, y, 1);
      if (prev_lo >= 0) emit(t, trail, y, 0);
    }
    prev_lo = lo;
  }
  std::uniform_int_distribution<int> coord(0, size - 1);
  std::uniform_int_distribution<std::uint64_t> time(0, kDurationUs);
  for (int i = 0; i < noise_events; ++i) {
    const auto t = time(rng);
    const int x = coord(rng), y = coord(rng);
    emit(t, x, y, coord(rng) & 1);
  }
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return events;
}

GridSet make_moving_bars(const ToyOptions& opts) {
  require(opts.per_class >= 1, "per_class must be positive");
  GridSet set;
  set.code_size = 0;
  Rng rng(derive_seed(opts.seed, "toy-bars"));
  for (int i = 0; i < 2 * opts.per_class; ++i) {
    const int label = i % 2;
    const auto events = moving_bar_events(label, opts.size, opts.noise_events, rng);
    set.grids.push_back(voxelize(events, opts.steps, 2, opts.size, opts.size, opts.mode));
    set.labels.push_back(label);
  }
  return set;
}

}  // namespace pace
