#include "pace/distill.hpp"

#include "pace/container.hpp"
#include "pace/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace pace {

DistillConfig DistillConfig::defaults_for(GridMode mode) {
  DistillConfig cfg;
  cfg.mode = mode;
  if (mode == GridMode::Bin) {
    cfg.code_size = 2;
    cfg.lr = 1.0;
  } else {
    cfg.code_size = 8;
    cfg.lr = 1e-2;
  }
  return cfg;
}

void DistillConfig::validate() const {
  require(ipc >= 1, "ipc must be at least 1");
  require(iterations >= 0, "iterations must be non-negative");
  require(lr >= 0.0, "learning rate must be non-negative");
  require(direction_scale > 0.0, "direction scale must be positive");
  require(code_size >= 2, "code size N must be at least 2");
  require(mode != GridMode::Bin || code_size == 2, "bin mode requires N = 2");
  require(!init_from_real || init_margin > 0.0, "init margin must be positive");
  require(directions >= 1, "direction count M must be at least 1");
  require(real_batch >= 1, "real batch size must be positive");
  require(temperature > 0.0 && temperature_end > 0.0, "PEQ temperature must be positive");
  require(augment.crop_fraction > 0.0 && augment.crop_fraction <= 1.0, "crop fraction must lie in (0, 1]");
  weights.validate();
}

TeacherHandle pretrain_teacher(const NetworkSpec& spec, const Dataset& train, const Dataset& held_out,
                               const TrainOptions& opts) {
  auto trained = train_student(Network(spec, derive_seed(opts.seed, "teacher-init")), train, held_out, opts);
  if (opts.epochs == 0)
    std::fprintf(stderr, "warning: teacher was not trained (epochs = 0); distillation uses a random network\n");
  return TeacherHandle{std::move(trained.net), true, trained.accuracy};
}

AugmentDraw draw_augment(const AugmentOptions& opts, int steps, std::uint64_t seed) {
  require(steps >= 1, "augmentation needs T >= 1");
  Rng rng(seed);
  AugmentDraw d;
  if (opts.flip) d.flip = std::bernoulli_distribution(0.5)(rng);
  if (opts.crop) {
    d.crop_length = std::clamp(static_cast<int>(std::lround(opts.crop_fraction * steps)), 1, steps);
    d.crop_start = std::uniform_int_distribution<int>(0, steps - d.crop_length)(rng);
  }
  return d;
}

namespace {

// Source column of every output column, or -1 where the output is zero.
std::vector<Eigen::Index> augment_sources(const AugmentDraw& d, int steps, int height, int width) {
  const int length = d.crop_length > 0 ? d.crop_length : steps;
  require(d.crop_start >= 0 && d.crop_start + length <= steps, "crop window outside the time axis");
  const Eigen::Index hw = static_cast<Eigen::Index>(height) * width;
  std::vector<Eigen::Index> src(static_cast<std::size_t>(steps * hw), -1);
  for (int t = 0; t < length; ++t)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        src[t * hw + y * width + x] = (d.crop_start + t) * hw + y * width + (d.flip ? width - 1 - x : x);
  return src;
}

}  // namespace

Eigen::MatrixXd apply_augment(const Eigen::MatrixXd& x, const AugmentDraw& d, int steps, int height, int width) {
  const auto src = augment_sources(d, steps, height, width);
  require(x.cols() == static_cast<Eigen::Index>(src.size()), "augment: input shape mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (std::size_t j = 0; j < src.size(); ++j)
    if (src[j] >= 0) out.col(static_cast<Eigen::Index>(j)) = x.col(src[j]);
  return out;
}

Eigen::MatrixXd augment_adjoint(const Eigen::MatrixXd& g, const AugmentDraw& d, int steps, int height, int width) {
  const auto src = augment_sources(d, steps, height, width);
  require(g.cols() == static_cast<Eigen::Index>(src.size()), "augment: gradient shape mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.rows(), g.cols());
  for (std::size_t j = 0; j < src.size(); ++j)
    if (src[j] >= 0) out.col(src[j]) += g.col(static_cast<Eigen::Index>(j));
  return out;
}

std::vector<AugmentDraw> iteration_augment(const DistillConfig& cfg, int classes, int steps, int iteration) {
  std::vector<AugmentDraw> out;
  if (!cfg.augment.any()) return out;
  for (int c = 0; c < classes; ++c)
    out.push_back(draw_augment(cfg.augment, steps,
                               derive_seed(cfg.seed, "augment", static_cast<std::uint64_t>(iteration) * classes + c)));
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
  std::vector<std::vector<std::size_t>> out(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(data.labels[i] >= 0 && data.labels[i] < data.classes, "real label out of range");
    out[data.labels[i]].push_back(i);
  }
  for (int c = 0; c < data.classes; ++c)
    require(!out[c].empty(), "real dataset has no samples of class " + std::to_string(c));
  return out;
}

std::vector<std::size_t> sample_batch(const std::vector<std::size_t>& pool, int batch, std::uint64_t seed) {
  std::vector<std::size_t> idx = pool;
  const auto k = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(batch));
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

SimOptions sim_options(const DistillConfig& cfg, bool full) {
  SimOptions o;
  o.relaxed = cfg.relaxed;
  o.full_trace = full;
  return o;
}

// Feature rows of real samples; cached for the whole run when small enough.
class RealFeatures {
 public:
  RealFeatures(const DistillConfig& cfg, const Network& net, const Dataset& real, bool cache)
      : cfg_(cfg), net_(net), real_(real) {
    if (!cache) return;
    const auto opts = sim_options(cfg, false);
    cached_.resize(real.size());
    parallel_for(real.size(), [&](std::size_t i) {
      const auto trace = forward(net, real.inputs[i], opts);
      cached_[i] = flatten_features(std::span(&trace, 1), net.feature_cell(), cfg.match.features).data;
    });
  }

  FeatureBatch<double> batch(const std::vector<std::size_t>& idx, const AugmentDraw* augment) const {
    FeatureBatch<double> out;
    out.batch = static_cast<int>(idx.size());
    out.steps = net_.spec().steps;
    out.data.resize(static_cast<Eigen::Index>(out.batch) * out.steps, net_.feature_dim(net_.feature_cell()));
    const auto opts = sim_options(cfg_, false);
    parallel_for(idx.size(), [&](std::size_t k) {
      auto rows = out.data.middleRows(static_cast<Eigen::Index>(k) * out.steps, out.steps);
      if (!augment && !cached_.empty()) {
        rows = cached_[idx[k]];
      } else {
        const auto& in = net_.spec().input;
        const auto trace = augment ? forward(net_, apply_augment(real_.inputs[idx[k]], *augment, out.steps, in.height,
                                                                 in.width),
                                             opts)
                                   : forward(net_, real_.inputs[idx[k]], opts);
        rows = flatten_features(std::span(&trace, 1), net_.feature_cell(), cfg_.match.features).data;
      }
    });
    return out;
  }

 private:
  const DistillConfig& cfg_;
  const Network& net_;
  const Dataset& real_;
  std::vector<Eigen::MatrixXd> cached_;
};

constexpr double kFeatureCacheBytes = 512.0 * 1024 * 1024;

std::vector<RealStats> stats_from(const DistillConfig& cfg, const RealFeatures& features,
                                  const std::vector<std::vector<std::size_t>>& by_class,
                                  const DirectionSet<double>& dirs, int iteration,
                                  std::span<const AugmentDraw> augment) {
  std::vector<RealStats> out;
  const auto classes = static_cast<int>(by_class.size());
  require(augment.empty() || augment.size() == by_class.size(), "need one augmentation draw per class");
  for (int c = 0; c < classes; ++c) {
    const auto idx = sample_batch(by_class[c], cfg.real_batch,
                                  derive_seed(cfg.seed, "data", static_cast<std::uint64_t>(iteration) * classes + c));
    out.push_back(real_stats(features.batch(idx, augment.empty() ? nullptr : &augment[c]), dirs, cfg.match));
  }
  return out;
}

DirectionSet<double> iteration_directions(const DistillConfig& cfg, const Network& net, int iteration) {
  const std::uint64_t index = cfg.fixed_directions ? 0 : static_cast<std::uint64_t>(iteration);
  auto dirs = sample_directions(cfg.directions, net.feature_dim(net.feature_cell()),
                                derive_seed(cfg.seed, "directions", index));
  dirs.omega *= cfg.direction_scale;
  return dirs;
}

}  // namespace

std::vector<RealStats> class_stats(const DistillConfig& cfg, const TeacherHandle& teacher, const Dataset& real,
                                   const DirectionSet<double>& dirs, int iteration,
                                   std::span<const AugmentDraw> augment) {
  RealFeatures features(cfg, teacher.net, real, false);
  return stats_from(cfg, features, indices_by_class(real), dirs, iteration, augment);
}

IterationGrad distill_gradient(const DistillConfig& cfg, const TeacherHandle& teacher, const SynthSet& set,
                               const std::vector<RealStats>& stats, const DirectionSet<double>& dirs,
                               std::span<const AugmentDraw> augment) {
  require(static_cast<int>(stats.size()) == set.classes, "need real statistics for every class");
  require(augment.empty() || static_cast<int>(augment.size()) == set.classes, "need one augmentation draw per class");
  const auto& net = teacher.net;
  const auto opts = sim_options(cfg, true);
  IterationGrad out;
  out.grad = Eigen::MatrixXd::Zero(set.logits.rows(), set.logits.cols());
  for (int c = 0; c < set.classes; ++c) {
    const auto members = set.class_samples(c);
    const auto quant = quantize_set(set, members, cfg.relaxed);
    const AugmentDraw* aug = augment.empty() ? nullptr : &augment[c];
    std::vector<LayerTrace> traces(quant.size());
    parallel_for(quant.size(), [&](std::size_t k) {
      traces[k] = aug ? forward(net, apply_augment(quant[k].input, *aug, set.steps, set.height, set.width), opts)
                      : forward(net, quant[k].input, opts);
    });
    const std::vector<int> labels(members.size(), c);
    const auto loss = condense_loss(net, traces, stats[c], labels, cfg.weights, dirs, cfg.match);
    parallel_for(quant.size(), [&](std::size_t k) {
      const auto report = backward(net, traces[k], loss.grads[k], opts);
      const auto input_grad = aug ? augment_adjoint(report.input, *aug, set.steps, set.height, set.width) : report.input;
      out.grad.middleCols(quant[k].index * set.voxels(), set.voxels()) = logit_gradient(set, quant[k], input_grad);
    });
    out.loss += loss.total;
    out.records.push_back({0, c, loss.amplitude, loss.phase, loss.matching, loss.cross_entropy, loss.total});
  }
  return out;
}

void seed_from_real(SynthSet& set, const Dataset& real, std::span<const std::size_t> indices, double margin) {
  require(indices.size() == static_cast<std::size_t>(set.samples()), "one real sample per synthetic sample");
  const Eigen::Index hw = static_cast<Eigen::Index>(set.height) * set.width;
  for (int i = 0; i < set.samples(); ++i) {
    const auto& x = real.inputs[indices[i]];
    require(x.rows() == set.channels && x.cols() == set.steps * hw, "real sample shape differs from the set");
    require(real.labels[indices[i]] == set.labels[i], "real sample label differs from the slot label");
    auto z = set.sample_logits(i);
    z.setZero();
    for (int t = 0; t < set.steps; ++t)
      for (int c = 0; c < set.channels; ++c)
        for (Eigen::Index p = 0; p < hw; ++p) {
          const auto v = std::clamp<long>(std::lround(x(c, t * hw + p)), 0, set.code_size - 1);
          z(v, (static_cast<Eigen::Index>(t) * set.channels + c) * hw + p) = margin;
        }
  }
}

DistillResult distill_run(const DistillConfig& cfg, const TeacherHandle& teacher, const Dataset& real,
                          const std::function<void(int, double)>& progress) {
  cfg.validate();
  require(teacher.frozen, "distillation needs a frozen teacher");
  const auto& net = teacher.net;
  const auto& spec = net.spec();
  require(real.classes == spec.classes, "real dataset class count differs from the teacher");
  const auto by_class = indices_by_class(real);

  DistillResult result;
  result.set = SynthSet::init(spec.classes, cfg.ipc, spec.steps, spec.input.channels, spec.input.height,
                              spec.input.width, cfg.mode, cfg.code_size, cfg.temperature,
                              derive_seed(cfg.seed, "init"), cfg.init_zero_bias);
  auto& set = result.set;
  if (cfg.init_from_real) {
    std::vector<std::size_t> picks;
    for (int c = 0; c < spec.classes; ++c) {
      require(by_class[c].size() >= static_cast<std::size_t>(cfg.ipc), "real class smaller than ipc");
      const auto idx = sample_batch(by_class[c], cfg.ipc, derive_seed(cfg.seed, "init-real", c));
      picks.insert(picks.end(), idx.begin(), idx.end());
    }
    seed_from_real(set, real, picks, cfg.init_margin);
  }

  const double cache_bytes = static_cast<double>(real.size()) * spec.steps *
                             static_cast<double>(net.feature_dim(net.feature_cell())) * sizeof(double);
  const bool cache = cfg.iterations > 0 && !cfg.augment.any() && cache_bytes <= kFeatureCacheBytes;
  const RealFeatures features(cfg, net, real, cache);

  Optimizer optim(cfg.optimizer, cfg.lr, cfg.momentum);
  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.temperature_end != cfg.temperature && cfg.iterations > 1)
      set.temperature = cfg.temperature + (cfg.temperature_end - cfg.temperature) * it / (cfg.iterations - 1);
    const auto dirs = iteration_directions(cfg, net, it);
    const auto augment = iteration_augment(cfg, spec.classes, spec.steps, it);
    const auto stats = stats_from(cfg, features, by_class, dirs, it, augment);

    auto step = distill_gradient(cfg, teacher, set, stats, dirs, augment);
    for (auto& r : step.records) {
      r.iteration = it;
      result.history.push_back(r);
    }
    optim.step(0, set.logits, step.grad);
    optim.tick();
    const double total = step.loss;
    result.iteration_loss.push_back(total);
    if (progress) progress(it, total);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::string_view kCheckpointMagic = "PACECKP1";
}

std::string config_hash(const SynthSet& set) {
  std::ostringstream key;
  key << "classes=" << set.classes << ";ipc=" << set.ipc << ";T=" << set.steps << ";C=" << set.channels
      << ";H=" << set.height << ";W=" << set.width << ";N=" << set.code_size << ";mode=" << to_string(set.mode);
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(key.str());
  return hex.str();
}

void checkpoint(const SynthSet& set, const std::string& path) {
  set.validate();
  Container c;
  c.header["classes"] = set.classes;
  c.header["ipc"] = set.ipc;
  c.header["T"] = set.steps;
  c.header["C"] = set.channels;
  c.header["H"] = set.height;
  c.header["W"] = set.width;
  c.header["N"] = set.code_size;
  c.header["mode"] = to_string(set.mode);
  c.header["temperature"] = set.temperature;
  c.header["labels"] = set.labels;
  c.header["config_hash"] = config_hash(set);
  c.payload.reserve(static_cast<std::size_t>(set.logits.size()) * 8);
  for (Eigen::Index k = 0; k < set.logits.size(); ++k) put_f64(c.payload, set.logits.data()[k]);
  write_container(path, kCheckpointMagic, c);
}

SynthSet restore(const std::string& path, const std::optional<std::string>& expected_hash) {
  const auto c = read_container(path, kCheckpointMagic);
  SynthSet set;
  try {
    set.classes = c.header.at("classes");
    set.ipc = c.header.at("ipc");
    set.steps = c.header.at("T");
    set.channels = c.header.at("C");
    set.height = c.header.at("H");
    set.width = c.header.at("W");
    set.code_size = c.header.at("N");
    set.mode = grid_mode_from_string(c.header.at("mode").get<std::string>());
    set.temperature = c.header.at("temperature");
    set.labels = c.header.at("labels").get<std::vector<int>>();
    const auto stored = c.header.at("config_hash").get<std::string>();
    if (stored != config_hash(set)) throw Error(ErrorKind::Corrupt, path + ": header does not match its hash");
    if (expected_hash && *expected_hash != stored)
      throw Error(ErrorKind::Incompatible, path + ": checkpoint layout " + stored +
                                               " does not match the configured layout " + *expected_hash);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Corrupt, path + ": " + e.what());
  }
  set.logits.resize(set.code_size, static_cast<Eigen::Index>(set.samples()) * set.voxels());
  if (c.payload.size() != static_cast<std::size_t>(set.logits.size()) * 8)
    throw Error(ErrorKind::Corrupt, path + ": logit payload has the wrong size");
  ByteReader r(c.payload);
  for (Eigen::Index k = 0; k < set.logits.size(); ++k) set.logits.data()[k] = r.f64();
  set.validate();
  return set;
}

void write_loss_csv(const std::string& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  out << "iteration,class,amp,phase,matching,ce,total\n";
  out << std::setprecision(10);
  for (const auto& r : history)
    out << r.iteration << ',' << r.label << ',' << r.amplitude << ',' << r.phase << ',' << r.matching << ','
        << r.cross_entropy << ',' << r.total << '\n';
}

}  // namespace pace
