#include "pace/distill.hpp"

#include "pace/eval.hpp"
#include "pace/toy_data.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace pace;

namespace {

struct Fixture {
  NetworkSpec spec;
  TeacherHandle teacher;
  Dataset real;
};

Fixture tiny(std::uint64_t seed = 7) {
  auto spec = NetworkSpec::parse("conv:4:3 pool:2 conv:6:3 flatten linear", 4, Shape3{2, 8, 8}, 2, LifParams{});
  spec.init_gain = 3;
  Fixture f{spec, TeacherHandle{Network(spec, seed), true, 0}, Dataset{}};
  f.real.classes = 2;
  Rng rng(3);
  std::bernoulli_distribution on(0.3);
  for (int i = 0; i < 16; ++i) {
    Eigen::MatrixXd x(2, 4 * 64);
    for (auto& v : x.reshaped()) v = on(rng);
    f.real.inputs.push_back(x);
    f.real.labels.push_back(i % 2);
  }
  return f;
}

DistillConfig tiny_config() {
  auto cfg = DistillConfig::defaults_for(GridMode::Bin);
  cfg.ipc = 2;
  cfg.iterations = 3;
  cfg.directions = 8;
  cfg.real_batch = 4;
  cfg.seed = 11;
  return cfg;
}

std::string temp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST(DistillConfig, DefaultsAndValidation) {
  const auto bin = DistillConfig::defaults_for(GridMode::Bin);
  EXPECT_EQ(bin.code_size, 2);
  EXPECT_EQ(bin.lr, 1.0);
  EXPECT_EQ(bin.directions, 64);
  EXPECT_EQ(bin.iterations, 5000);
  const auto integer = DistillConfig::defaults_for(GridMode::Int);
  EXPECT_EQ(integer.code_size, 8);
  EXPECT_EQ(integer.lr, 1e-2);
  auto bad = bin;
  bad.code_size = 4;
  EXPECT_THROW(bad.validate(), Error);
  bad = bin;
  bad.direction_scale = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Distill, RelaxedGradientMatchesFiniteDifferences) {
  auto f = tiny();
  for (auto kind : {MatchKind::StDsm, MatchKind::Spatial, MatchKind::CharFn, MatchKind::Dm}) {
    DistillConfig cfg = DistillConfig::defaults_for(GridMode::Int);
    cfg.code_size = 4;
    cfg.relaxed = true;
    cfg.ipc = 2;
    cfg.directions = 16;
    cfg.real_batch = 8;
    cfg.match.kind = kind;
    const auto dirs = sample_directions(16, f.teacher.net.feature_dim(f.teacher.net.feature_cell()), 5);
    const auto stats = class_stats(cfg, f.teacher, f.real, dirs, 0);
    const auto set = SynthSet::init(2, 2, 4, 2, 8, 8, GridMode::Int, 4, 1.0, 9);
    const auto g = distill_gradient(cfg, f.teacher, set, stats, dirs);
    Rng rng(5);
    std::uniform_int_distribution<Eigen::Index> pick(0, set.logits.size() - 1);
    double worst = 0;
    for (int k = 0; k < 24; ++k) {
      const auto i = pick(rng);
      const double h = 1e-5;
      auto p = set, m = set;
      p.logits(i) += h;
      m.logits(i) -= h;
      const double fd =
          (distill_gradient(cfg, f.teacher, p, stats, dirs).loss - distill_gradient(cfg, f.teacher, m, stats, dirs).loss) /
          (2 * h);
      worst = std::max(worst, std::abs(fd - g.grad(i)) / std::max(1e-6, std::max(std::abs(fd), std::abs(g.grad(i)))));
    }
    EXPECT_LT(worst, 1e-4) << to_string(kind);
  }
}

TEST(Augment, Examples) {
  // C = 1, T = 2, 1 x 3 frames: bin 0 = [1 2 3], bin 1 = [4 5 6].
  Eigen::MatrixXd x(1, 6);
  x << 1, 2, 3, 4, 5, 6;
  Eigen::MatrixXd flipped(1, 6);
  flipped << 3, 2, 1, 6, 5, 4;
  EXPECT_EQ(apply_augment(x, AugmentDraw{true, 0, 0}, 2, 1, 3), flipped);
  Eigen::MatrixXd late(1, 6);
  late << 4, 5, 6, 0, 0, 0;
  EXPECT_EQ(apply_augment(x, AugmentDraw{false, 1, 1}, 2, 1, 3), late);
  EXPECT_EQ(apply_augment(x, AugmentDraw{}, 2, 1, 3), x);
  EXPECT_THROW(apply_augment(x, AugmentDraw{false, 2, 1}, 2, 1, 3), Error);
}

TEST(Augment, AdjointIdentityOnFuzzedDraws) {
  Rng rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  const AugmentOptions opts{.flip = true, .crop = true, .crop_fraction = 0.6};
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 1 + trial % 6, h = 1 + trial % 3, w = 1 + trial % 5;
    Eigen::MatrixXd x(2, t * h * w), g(2, t * h * w);
    for (auto& v : x.reshaped()) v = n(rng);
    for (auto& v : g.reshaped()) v = n(rng);
    const auto d = draw_augment(opts, t, static_cast<std::uint64_t>(trial));
    ASSERT_GE(d.crop_length, 1);
    ASSERT_LE(d.crop_start + d.crop_length, t);
    const double lhs = (apply_augment(x, d, t, h, w).array() * g.array()).sum();
    const double rhs = (x.array() * augment_adjoint(g, d, t, h, w).array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Augment, DrawsAreDeterministicAndOffByDefault) {
  const AugmentOptions opts{.flip = true, .crop = true};
  const auto a = draw_augment(opts, 6, 4), b = draw_augment(opts, 6, 4);
  EXPECT_EQ(a.flip, b.flip);
  EXPECT_EQ(a.crop_start, b.crop_start);
  EXPECT_EQ(a.crop_length, 5);  // round(0.75 * 6) rounds half away from zero
  EXPECT_TRUE(iteration_augment(DistillConfig{}, 2, 6, 0).empty());
}

TEST(Distill, AugmentedRelaxedGradientMatchesFiniteDifferences) {
  auto f = tiny();
  DistillConfig cfg = DistillConfig::defaults_for(GridMode::Int);
  cfg.code_size = 4;
  cfg.relaxed = true;
  cfg.ipc = 2;
  cfg.directions = 16;
  cfg.real_batch = 8;
  cfg.augment = {.flip = true, .crop = true, .crop_fraction = 0.5};
  const std::vector<AugmentDraw> draws{{true, 1, 2}, {true, 0, 3}};
  const auto dirs = sample_directions(16, f.teacher.net.feature_dim(f.teacher.net.feature_cell()), 5);
  const auto stats = class_stats(cfg, f.teacher, f.real, dirs, 0, draws);
  EXPECT_NE(stats[0].spectral.spectrum, class_stats(cfg, f.teacher, f.real, dirs, 0)[0].spectral.spectrum);
  const auto set = SynthSet::init(2, 2, 4, 2, 8, 8, GridMode::Int, 4, 1.0, 9);
  const auto g = distill_gradient(cfg, f.teacher, set, stats, dirs, draws);
  Rng rng(6);
  std::uniform_int_distribution<Eigen::Index> pick(0, set.logits.size() - 1);
  double worst = 0;
  for (int k = 0; k < 24; ++k) {
    const auto i = pick(rng);
    const double h = 1e-5;
    auto p = set, m = set;
    p.logits(i) += h;
    m.logits(i) -= h;
    const double fd = (distill_gradient(cfg, f.teacher, p, stats, dirs, draws).loss -
                       distill_gradient(cfg, f.teacher, m, stats, dirs, draws).loss) /
                      (2 * h);
    worst = std::max(worst, std::abs(fd - g.grad(i)) / std::max(1e-6, std::max(std::abs(fd), std::abs(g.grad(i)))));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Distill, AugmentedRunIsDeterministic) {
  auto f = tiny();
  auto cfg = tiny_config();
  cfg.augment.flip = true;
  cfg.augment.crop = true;
  const auto a = distill_run(cfg, f.teacher, f.real), b = distill_run(cfg, f.teacher, f.real);
  EXPECT_EQ(a.set.logits, b.set.logits);
  cfg.augment = {};
  EXPECT_NE(distill_run(cfg, f.teacher, f.real).set.logits, a.set.logits);
}

TEST(Distill, ZeroIterationsReturnsInit) {
  auto f = tiny();
  auto cfg = tiny_config();
  cfg.iterations = 0;
  const auto r = distill_run(cfg, f.teacher, f.real);
  const auto init = SynthSet::init(2, 2, 4, 2, 8, 8, GridMode::Bin, 2, 1.0, derive_seed(cfg.seed, "init"));
  EXPECT_EQ(r.set.logits, init.logits);
  EXPECT_TRUE(r.history.empty());
}

TEST(Distill, DeterministicOnlyLogitsChangeTeacherUntouched) {
  auto f = tiny();
  const Params before = f.teacher.net.params();
  const auto cfg = tiny_config();
  const auto a = distill_run(cfg, f.teacher, f.real);
  const auto b = distill_run(cfg, f.teacher, f.real);
  EXPECT_TRUE(f.teacher.net.params() == before);
  EXPECT_EQ(a.set.logits, b.set.logits);
  EXPECT_EQ(a.iteration_loss, b.iteration_loss);
  EXPECT_EQ(a.history.size(), 3u * 2);
  const auto init = SynthSet::init(2, 2, 4, 2, 8, 8, GridMode::Bin, 2, 1.0, derive_seed(cfg.seed, "init"));
  EXPECT_NE(a.set.logits, init.logits);
  EXPECT_EQ(a.set.labels, init.labels);
  EXPECT_EQ(a.set.temperature, init.temperature);
  setenv("PACE_THREADS", "2", 1);
  const auto c = distill_run(cfg, f.teacher, f.real);
  unsetenv("PACE_THREADS");
  EXPECT_EQ(a.set.logits, c.set.logits);
}

TEST(Distill, Contracts) {
  auto f = tiny();
  auto cfg = tiny_config();
  auto missing = f.real;
  for (auto& y : missing.labels) y = 0;
  EXPECT_THROW(distill_run(cfg, f.teacher, missing), Error);
  auto thawed = f.teacher;
  thawed.frozen = false;
  EXPECT_THROW(distill_run(cfg, thawed, f.real), Error);
}

TEST(Distill, SeedFromRealReproducesSamples) {
  auto f = tiny();
  auto set = SynthSet::init(2, 2, 4, 2, 8, 8, GridMode::Bin, 2, 1.0, 1);
  const std::vector<std::size_t> idx{0, 2, 1, 3};
  seed_from_real(set, f.real, idx, 2.0);
  const auto grids = to_grid_set(set);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(to_input(grids.grids[i]), f.real.inputs[idx[i]]);
  const std::vector<std::size_t> wrong{1, 2, 1, 3};
  EXPECT_THROW(seed_from_real(set, f.real, wrong, 2.0), Error);
}

TEST(Checkpoint, RoundTripCorruptionAndIncompatibility) {
  const auto set = SynthSet::init(2, 1, 3, 2, 4, 4, GridMode::Int, 8, 0.5, 3);
  const auto path = temp_path("pace_ckpt_test.ckpt");
  checkpoint(set, path);
  const auto back = restore(path, config_hash(set));
  EXPECT_EQ(back.logits, set.logits);
  EXPECT_EQ(back.labels, set.labels);
  EXPECT_EQ(back.temperature, set.temperature);
  EXPECT_EQ(back.mode, set.mode);

  const auto other = SynthSet::init(2, 1, 4, 2, 4, 4, GridMode::Int, 4, 0.5, 3);
  try {
    restore(path, config_hash(other));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Incompatible);
  }
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
  try {
    restore(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Corrupt);
  }
  std::filesystem::remove(path);
  try {
    restore(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

TEST(Checkpoint, SameConfigSameBytes) {
  auto f = tiny();
  const auto cfg = tiny_config();
  const auto a = temp_path("pace_ckpt_a.ckpt"), b = temp_path("pace_ckpt_b.ckpt");
  checkpoint(distill_run(cfg, f.teacher, f.real).set, a);
  checkpoint(distill_run(cfg, f.teacher, f.real).set, b);
  EXPECT_EQ(read_file_bytes(a), read_file_bytes(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Teacher, PretrainIsFrozenAndDeterministic) {
  ToyOptions o;
  o.per_class = 20;
  o.size = 16;
  o.steps = 3;
  o.seed = 1;
  const auto train = to_dataset(make_moving_bars(o), 2);
  auto spec = NetworkSpec::parse("conv:4:3 pool:16 flatten linear", 3, Shape3{2, 16, 16}, 2, {});
  spec.init_gain = 4;
  TrainOptions t;
  t.epochs = 0;
  const auto untrained = pretrain_teacher(spec, train, train, t);
  EXPECT_TRUE(untrained.frozen);
  t.epochs = 2;
  t.seed = 4;
  const auto a = pretrain_teacher(spec, train, train, t);
  const auto b = pretrain_teacher(spec, train, train, t);
  EXPECT_TRUE(a.net.params() == b.net.params());
  EXPECT_EQ(a.accuracy, b.accuracy);
}

TEST(LossCsv, Rows) {
  const std::vector<LossRecord> h{{0, 0, 0.1, 0.2, 0.3, 0.4, 0.5}, {0, 1, 1, 2, 3, 4, 5}};
  const auto path = temp_path("pace_loss.csv");
  write_loss_csv(path, h);
  const auto bytes = read_file_bytes(path);
  const std::string text(bytes.begin(), bytes.end());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.rfind("iteration,", 0), 0u);
  std::filesystem::remove(path);
}
