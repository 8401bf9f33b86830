#pragma once

#include "pace/event_io.hpp"

#include <string>

namespace pace {

/// Reads <root>/<split>/<digit>/*.bin (split "Train" or "Test"), taking the
/// first `per_class` files of each digit in name order. Grids are voxelized
/// at the 34x34 sensor size, then zero-padded to `size` x `size`.
GridSet load_nmnist(const std::string& root, const std::string& split, int per_class, int steps, GridMode mode,
                    int size = 48);

}  // namespace pace
