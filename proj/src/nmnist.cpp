#include "pace/nmnist.hpp"

#include "pace/error.hpp"
#include "pace/parallel.hpp"

#include <algorithm>
#include <filesystem>

namespace fs = std::filesystem;

namespace pace {

GridSet load_nmnist(const std::string& root, const std::string& split, int per_class, int steps, GridMode mode,
                    int size) {
  require(per_class >= 1, "per_class must be positive");
  const fs::path base = fs::path(root) / split;
  if (!fs::is_directory(base)) throw Error(ErrorKind::Io, "N-MNIST split directory not found: " + base.string());

  std::vector<std::pair<fs::path, int>> files;
  for (int digit = 0; digit < 10; ++digit) {
    const fs::path dir = base / std::to_string(digit);
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "missing class directory " + dir.string());
    std::vector<fs::path> names;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".bin") names.push_back(entry.path());
    std::sort(names.begin(), names.end());
    if (names.size() > static_cast<std::size_t>(per_class)) names.resize(per_class);
    for (auto& n : names) files.emplace_back(std::move(n), digit);
  }

  GridSet set;
  set.grids.resize(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    const auto events = parse_nmnist(read_file_bytes(files[i].first.string()));
    const auto grid = voxelize(events, steps, 2, kNmnistSensorSize, kNmnistSensorSize, mode);
    set.grids[i] = size == kNmnistSensorSize ? grid : pad_spatial(grid, size, size);
  });
  for (const auto& f : files) set.labels.push_back(f.second);
  return set;
}

}  // namespace pace
