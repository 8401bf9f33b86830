#include "pace/eval.hpp"

#include "pace/error.hpp"
#include "pace/rng.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pace {

Dataset to_dataset(const GridSet& set, int classes) {
  require(set.grids.size() == set.labels.size(), "grid set needs one label per grid");
  Dataset out;
  out.classes = classes;
  out.inputs.reserve(set.grids.size());
  for (const auto& g : set.grids) out.inputs.push_back(to_input(g));
  out.labels = set.labels;
  return out;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.classes = data.classes;
  for (auto i : indices) {
    require(i < data.size(), "subset index out of range");
    out.inputs.push_back(data.inputs[i]);
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

AccuracySummary summarize(std::vector<double> accuracies) {
  require(!accuracies.empty(), "no trials to summarize");
  std::sort(accuracies.begin(), accuracies.end());
  AccuracySummary s;
  s.trials = static_cast<int>(accuracies.size());
  s.single_trial = s.trials == 1;
  for (double a : accuracies) s.mean += a;
  s.mean /= s.trials;
  double var = 0;
  for (double a : accuracies) var += (a - s.mean) * (a - s.mean);
  s.std = std::sqrt(var / s.trials);
  return s;
}

ProtocolResult evaluate_protocol(std::span<const GridSet> sets, const NetworkSpec& spec, const Dataset& test,
                                 const EvalOptions& opts) {
  require(!test.empty(), "evaluation needs a non-empty test set");
  require(!sets.empty(), "evaluation needs at least one training set");
  require(opts.n_models >= 1, "n_models must be at least 1");
  ProtocolResult result;
  std::vector<double> accs;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const Dataset train = to_dataset(sets[s], spec.classes);
    for (int m = 0; m < opts.n_models; ++m) {
      const auto index = static_cast<std::uint64_t>(s) * opts.n_models + m;
      const auto seed = derive_seed(opts.seed, "students", index);
      TrainOptions t = opts.train;
      t.seed = derive_seed(seed, "train");
      Network net(spec, derive_seed(seed, "init"));
      auto trained = train_student(std::move(net), train, {}, t);
      const double acc = accuracy(trained.net, test);
      result.trials.push_back({static_cast<int>(s), m, seed, acc});
      accs.push_back(acc);
    }
  }
  result.summary = summarize(std::move(accs));
  return result;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string results_csv(const ProtocolResult& result) {
  std::ostringstream out;
  out << "row,set,model,seed,accuracy,std,trials\n";
  for (const auto& t : result.trials)
    out << "trial," << t.set << ',' << t.model << ',' << t.seed << ',' << num(t.accuracy) << ",,\n";
  out << "summary,,,," << num(result.summary.mean) << ',' << num(result.summary.std) << ','
      << result.summary.trials << '\n';
  return out.str();
}

void write_results_csv(const std::string& path, const ProtocolResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  out << results_csv(result);
}

long long peak_rss_bytes() {
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<long long>(usage.ru_maxrss) * 1024;  // Linux reports KiB
}

EfficiencyReport efficiency_report(int iterations, double seconds, long long stored_samples,
                                   long long full_samples, std::optional<double> accuracy) {
  require(full_samples > 0, "full set size must be positive");
  EfficiencyReport r;
  r.accuracy = accuracy;
  r.iterations = iterations;
  if (iterations > 0) r.seconds_per_iteration = seconds / iterations;
  r.stored_samples = stored_samples;
  r.full_samples = full_samples;
  r.storage_ratio = static_cast<double>(stored_samples) / static_cast<double>(full_samples);
  r.peak_rss_bytes = peak_rss_bytes();
  return r;
}

std::string format_report(const EfficiencyReport& r) {
  std::ostringstream out;
  out << "accuracy       " << (r.accuracy ? num(*r.accuracy) : "-") << '\n'
      << "iterations     " << r.iterations << '\n'
      << "sec/iteration  " << (r.seconds_per_iteration ? num(*r.seconds_per_iteration) : "-") << '\n'
      << "stored samples " << r.stored_samples << " / " << r.full_samples << " (ratio " << r.storage_ratio << ")\n"
      << "peak RSS bytes " << r.peak_rss_bytes << '\n';
  return out.str();
}

}  // namespace pace
