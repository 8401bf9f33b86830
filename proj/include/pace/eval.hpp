#pragma once

#include "pace/event_io.hpp"
#include "pace/snn.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pace {

/// Network inputs for every grid of `set`.
Dataset to_dataset(const GridSet& set, int classes);

/// Rows `indices` of a dataset, in the given order.
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

struct AccuracySummary {
  double mean = 0;
  double std = 0;  // population
  int trials = 0;
  bool single_trial = false;
};

/// Sorts before reducing so the result does not depend on trial order.
AccuracySummary summarize(std::vector<double> accuracies);

struct EvalOptions {
  int n_models = 3;
  TrainOptions train{.epochs = 100, .lr = 1e-3, .batch_size = 32, .seed = 0, .adam = true, .momentum = 0.9};
  std::uint64_t seed = 0;
};

struct Trial {
  int set = 0;
  int model = 0;
  std::uint64_t seed = 0;
  double accuracy = 0;
};

struct ProtocolResult {
  std::vector<Trial> trials;
  AccuracySummary summary;
};

/// Train n_models fresh students on each training set and score them on
/// `test`. Student seeds come from the "students" stream of opts.seed.
ProtocolResult evaluate_protocol(std::span<const GridSet> sets, const NetworkSpec& spec, const Dataset& test,
                                 const EvalOptions& opts);

/// Columns: row,set,model,seed,accuracy,std,trials. One "trial" row per
/// student and a final "summary" row.
void write_results_csv(const std::string& path, const ProtocolResult& result);
std::string results_csv(const ProtocolResult& result);

struct EfficiencyReport {
  std::optional<double> accuracy;
  int iterations = 0;
  std::optional<double> seconds_per_iteration;  // empty for zero-iteration runs
  long long stored_samples = 0;
  long long full_samples = 0;
  double storage_ratio = 0;
  long long peak_rss_bytes = 0;
};

EfficiencyReport efficiency_report(int iterations, double seconds, long long stored_samples,
                                   long long full_samples, std::optional<double> accuracy = std::nullopt);

/// Peak resident set size of this process in bytes.
long long peak_rss_bytes();

std::string format_report(const EfficiencyReport& r);

}  // namespace pace
