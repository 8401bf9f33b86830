#pragma once

#include "pace/coreset.hpp"
#include "pace/distill.hpp"
#include "pace/eval.hpp"
#include "pace/snn.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace pace {

/// Everything a CLI run needs, with defaults filled in. See FORMATS.md for
/// the INI schema.
struct RunConfig {
  std::uint64_t seed = 0;

  // [data]
  std::string source = "toy";  // toy | nmnist
  std::string path;            // N-MNIST root
  int steps = 6;
  int size = 32;
  GridMode mode = GridMode::Bin;
  int train_per_class = 500;
  int test_per_class = 200;
  int noise_events = 40;

  // [network]
  std::string layers = "conv:32:3 pool:2 conv:64:3 pool:2 flatten linear";
  LifParams lif;
  double surrogate_width = 1.0;
  double init_gain = 1.0;

  // [teacher]
  TrainOptions teacher{.epochs = 10, .lr = 1e-3, .batch_size = 32, .seed = 0, .adam = true, .momentum = 0.9};
  std::string teacher_weights;  // load instead of training when set

  DistillConfig distill;  // [distill]
  EvalOptions eval;       // [eval]
  int n_sets = 3;

  // [coreset]
  CoresetMethod coreset_method = CoresetMethod::Random;
  int coreset_ipc = 1;

  int classes() const { return source == "toy" ? 2 : 10; }
  NetworkSpec network() const;
  /// Push the master seed into every sub-config.
  void apply_seed(std::uint64_t master);
  nlohmann::json to_json() const;
};

/// INI text with [sections]. Unknown sections or keys raise a Config error
/// that names every offending key.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

}  // namespace pace
