// Acceptance harness: `pace_acceptance <n>` runs one criterion and prints a
// single "criterion <n> PASS|FAIL|SKIP" line. Exit codes: 0 pass, 1 fail,
// 77 skip.

#include "pace/config.hpp"
#include "pace/coreset.hpp"
#include "pace/distill.hpp"
#include "pace/eval.hpp"
#include "pace/nmnist.hpp"
#include "pace/quantizer.hpp"
#include "pace/toy_data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

using namespace pace;
using cd = std::complex<double>;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

Outcome gate(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string config_path(const char* name) { return (fs::path(PACE_SOURCE_DIR) / "configs" / name).string(); }

// ---- independent oracles -------------------------------------------------

double soft_oracle(const Eigen::VectorXd& z, double tau) {
  long double mx = z.maxCoeff(), sum = 0, acc = 0;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const long double e = std::exp((z(k) - mx) / tau);
    sum += e;
    acc += e * k;
  }
  return static_cast<double>(acc / sum);
}

ComplexMatrix<double> cf_oracle(const FeatureBatch<double>& x, const RealMatrix<double>& omega) {
  ComplexMatrix<double> z = ComplexMatrix<double>::Zero(omega.rows(), x.steps);
  for (Eigen::Index m = 0; m < omega.rows(); ++m)
    for (int t = 0; t < x.steps; ++t) {
      double re = 0, im = 0;
      for (int b = 0; b < x.batch; ++b) {
        double dot = 0;
        for (Eigen::Index d = 0; d < omega.cols(); ++d) dot += omega(m, d) * x.data(b * x.steps + t, d);
        re += std::cos(dot);
        im += std::sin(dot);
      }
      z(m, t) = cd(re / x.batch, im / x.batch);
    }
  return z;
}

ComplexMatrix<double> dft_oracle(const ComplexMatrix<double>& z) {
  const auto T = z.cols();
  ComplexMatrix<double> f = ComplexMatrix<double>::Zero(z.rows(), T);
  for (Eigen::Index m = 0; m < z.rows(); ++m)
    for (Eigen::Index nu = 0; nu < T; ++nu) {
      double re = 0, im = 0;
      for (Eigen::Index t = 0; t < T; ++t) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>(nu * t % T) / static_cast<double>(T);
        re += z(m, t).real() * std::cos(ang) - z(m, t).imag() * std::sin(ang);
        im += z(m, t).real() * std::sin(ang) + z(m, t).imag() * std::cos(ang);
      }
      f(m, nu) = cd(re / T, im / T);
    }
  return f;
}

FeatureBatch<double> random_batch(Rng& rng, int b, int t, int d, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  FeatureBatch<double> x{b, t, RealMatrix<double>(b * t, d)};
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data(i) = n(rng);
  return x;
}

// ---- criteria ------------------------------------------------------------

Outcome peq_analytics() {
  Rng rng(2024);
  std::uniform_real_distribution<double> tau_d(0.1, 4.0);
  std::normal_distribution<double> logit(0.0, 2.0);
  const int codes[] = {2, 4, 8, 16};
  double worst_cf = 0, worst_fd = 0;
  int bound_violations = 0;
  for (int site = 0; site < 10000; ++site) {
    const int n = codes[site % 4];
    const double tau = tau_d(rng);
    Eigen::VectorXd z(n);
    for (auto& v : z) v = logit(rng);
    const auto q = peq_forward(Eigen::MatrixXd(z), tau);
    const auto jac = peq_soft_jacobian(q, tau);
    const double y = soft_oracle(z, tau);
    long double mx = z.maxCoeff(), sum = 0;
    for (int k = 0; k < n; ++k) sum += std::exp((z(k) - mx) / tau);
    for (int j = 0; j < n; ++j) {
      const double pj = static_cast<double>(std::exp((z(j) - mx) / tau) / sum);
      const double closed = pj * (j - y) / tau;
      // Relative to the gradient's natural scale 1/tau, so entries that are
      // zero in closed form do not divide by zero.
      worst_cf = std::max(worst_cf, std::abs(closed - jac(j, 0)) / std::max(std::abs(closed), 1.0 / tau));
      const double h = 1e-6 * std::max(1.0, tau);
      Eigen::VectorXd p = z, m = z;
      p(j) += h;
      m(j) -= h;
      const double fd = (soft_oracle(p, tau) - soft_oracle(m, tau)) / (2 * h);
      worst_fd = std::max(worst_fd, std::abs(fd - jac(j, 0)) / std::max(std::abs(fd), 1.0 / tau));
      if (std::abs(jac(j, 0)) > (n - 1) / tau) ++bound_violations;
    }
  }
  double worst_peak = 0;
  for (double tau : {0.1, 0.25, 0.5, 1.0, 2.0, 4.0}) {
    const auto jac = peq_soft_jacobian(peq_forward(Eigen::MatrixXd::Zero(2, 1), tau), tau);
    worst_peak = std::max(worst_peak, std::abs(jac(1, 0) - 1 / (4 * tau)));
  }
  return gate(worst_cf <= 1e-6 && worst_fd <= 1e-6 && bound_violations == 0 && worst_peak <= 1e-9,
              fmt("closed-form rel err %.2e, finite-difference rel err %.2e, bound violations %d, N=2 peak err %.2e",
                  worst_cf, worst_fd, bound_violations, worst_peak));
}

Outcome spectral_oracles() {
  Rng rng(77);
  std::uniform_int_distribution<int> steps(1, 16), dirs_n(1, 64), batch(1, 8), dim(1, 12);
  double worst_cf = 0, worst_dft = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int t = steps(rng), m = dirs_n(rng), d = dim(rng);
    const auto x = random_batch(rng, batch(rng), t, d, 1.0);
    const auto dirs = sample_directions(m, d, static_cast<std::uint64_t>(trial));
    worst_cf = std::max(worst_cf, (empirical_cf(x, dirs) - cf_oracle(x, dirs.omega)).cwiseAbs().maxCoeff());
    std::normal_distribution<double> n(0.0, 1.0);
    ComplexMatrix<double> z(m, t);
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = cd(n(rng), n(rng));
    worst_dft = std::max(worst_dft, (temporal_dft(z) - dft_oracle(z)).cwiseAbs().maxCoeff());
  }
  double max_modulus = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto x = random_batch(rng, 1 + trial % 5, 1 + trial % 4, 3, 5.0);
    const auto dirs = sample_directions(4, 3, static_cast<std::uint64_t>(trial) + 1000);
    max_modulus = std::max(max_modulus, empirical_cf(x, dirs).cwiseAbs().maxCoeff());
  }
  return gate(worst_cf <= 1e-12 && worst_dft <= 1e-12 && max_modulus <= 1.0 + 1e-15,
              fmt("cf err %.2e, dft err %.2e, max |Z| over 10^4 batches %.17g", worst_cf, worst_dft, max_modulus));
}

Outcome phase_discrimination() {
  Rng rng(31);
  double min_stdsm = 1e300, max_dm = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int t = 2 + trial % 7;
    auto real = random_batch(rng, 4, t, 3, 1.0);
    for (int b = 0; b < real.batch; ++b) real.row(b, 0).array() += 2.0;
    FeatureBatch<double> syn = real;
    for (int b = 0; b < real.batch; ++b)
      for (int s = 0; s < t; ++s) syn.row(b, (s + 1) % t) = real.row(b, s);
    const auto dirs = sample_directions(8, 3, static_cast<std::uint64_t>(trial));
    const auto fr = temporal_dft(empirical_cf(real, dirs));
    const auto fs = temporal_dft(empirical_cf(syn, dirs));
    min_stdsm = std::min(min_stdsm, stdsm_loss(fr, fs, LossWeights{}).value);
    max_dm = std::max(max_dm, dm_loss(real.time_mean(), syn.time_mean()));
  }
  return gate(min_stdsm > 0 && max_dm <= 1e-12,
              fmt("min stdsm %.3e over 100 shifted cases, max dm %.2e", min_stdsm, max_dm));
}

Outcome gradient_integrity() {
  auto spec = NetworkSpec::parse("conv:4:3 pool:2 conv:6:3 flatten linear", 4, Shape3{2, 8, 8}, 2, LifParams{});
  spec.init_gain = 3;
  TeacherHandle teacher{Network(spec, 7), true, 0};
  Dataset real;
  real.classes = 2;
  Rng rng(3);
  std::bernoulli_distribution on(0.3);
  for (int i = 0; i < 16; ++i) {
    Eigen::MatrixXd x(2, 4 * 64);
    for (auto& v : x.reshaped()) v = on(rng);
    real.inputs.push_back(x);
    real.labels.push_back(i % 2);
  }
  auto cfg = DistillConfig::defaults_for(GridMode::Bin);
  cfg.relaxed = true;
  cfg.ipc = 2;
  cfg.directions = 16;
  cfg.real_batch = 8;
  const auto dirs = sample_directions(16, teacher.net.feature_dim(teacher.net.feature_cell()), 5);
  const auto stats = class_stats(cfg, teacher, real, dirs, 0);
  const auto set = SynthSet::init(2, 2, 4, 2, 8, 8, GridMode::Bin, 2, 1.0, 9);
  const auto g = distill_gradient(cfg, teacher, set, stats, dirs);
  std::uniform_int_distribution<Eigen::Index> pick(0, set.logits.size() - 1);
  double worst = 0;
  const int coords = 64;
  for (int k = 0; k < coords; ++k) {
    const auto i = pick(rng);
    const double h = 1e-5;
    auto p = set, m = set;
    p.logits(i) += h;
    m.logits(i) -= h;
    const double fd =
        (distill_gradient(cfg, teacher, p, stats, dirs).loss - distill_gradient(cfg, teacher, m, stats, dirs).loss) /
        (2 * h);
    worst = std::max(worst, std::abs(fd - g.grad(i)) / std::max(1e-6, std::max(std::abs(fd), std::abs(g.grad(i)))));
  }
  return gate(worst <= 1e-4, fmt("worst relative error %.2e over %d logit coordinates", worst, coords));
}

// Toy task shared by the end-to-end criteria.
struct ToyTask {
  RunConfig cfg;
  GridSet train_grids;
  Dataset train, test;
  TeacherHandle teacher;
};

ToyTask toy_task() {
  const auto cfg = load_config(config_path("toy.ini"));
  ToyOptions opts{.per_class = cfg.train_per_class, .steps = cfg.steps, .size = cfg.size, .mode = cfg.mode,
                  .noise_events = cfg.noise_events, .seed = derive_seed(cfg.seed, "data-train")};
  auto train_grids = make_moving_bars(opts);
  opts.per_class = cfg.test_per_class;
  opts.seed = derive_seed(cfg.seed, "data-test");
  auto train = to_dataset(train_grids, 2);
  auto test = to_dataset(make_moving_bars(opts), 2);
  auto teacher = pretrain_teacher(cfg.network(), train, test, cfg.teacher);
  return ToyTask{cfg, std::move(train_grids), std::move(train), std::move(test), std::move(teacher)};
}

std::vector<GridSet> distilled_sets(const ToyTask& t, DistillConfig cfg) {
  std::vector<GridSet> sets;
  for (int s = 0; s < t.cfg.n_sets; ++s) {
    cfg.seed = derive_seed(t.cfg.seed, "set", static_cast<std::uint64_t>(s));
    sets.push_back(to_grid_set(distill_run(cfg, t.teacher, t.train).set));
  }
  return sets;
}

std::vector<GridSet> random_sets(const ToyTask& t, int ipc) {
  std::vector<GridSet> sets;
  for (int s = 0; s < t.cfg.n_sets; ++s) {
    GridSet g;
    for (auto i : random_select(t.train.labels, 2, ipc, derive_seed(t.cfg.seed, "random", static_cast<std::uint64_t>(s)))) {
      g.grids.push_back(t.train_grids.grids[i]);
      g.labels.push_back(t.train_grids.labels[i]);
    }
    sets.push_back(std::move(g));
  }
  return sets;
}

AccuracySummary students(const ToyTask& t, const std::vector<GridSet>& sets) {
  return evaluate_protocol(sets, t.cfg.network(), t.test, t.cfg.eval).summary;
}

Outcome toy_reproduction() {
  const auto t = toy_task();
  const auto pace = students(t, distilled_sets(t, t.cfg.distill));
  const auto rand = students(t, random_sets(t, t.cfg.distill.ipc));
  const bool ok = t.teacher.accuracy >= 0.95 && pace.mean - rand.mean >= 0.10 && pace.mean - 0.5 >= 0.25;
  return gate(ok, fmt("teacher %.3f, PACE %.3f +- %.3f, random coreset %.3f +- %.3f (%d x %d trials each)",
                      t.teacher.accuracy, pace.mean, pace.std, rand.mean, rand.std, t.cfg.n_sets, t.cfg.eval.n_models));
}

Outcome ablation_direction() {
  const auto t = toy_task();
  auto cfg = t.cfg.distill;
  cfg.iterations = 300;
  auto run = [&](MatchKind kind, FeatureKind features) {
    auto c = cfg;
    c.match.kind = kind;
    c.match.features = features;
    return students(t, distilled_sets(t, c));
  };
  const auto spatial_spikes = run(MatchKind::Spatial, FeatureKind::Spikes);
  const auto spatial_dense = run(MatchKind::Spatial, FeatureKind::Dense);
  const auto temporal_spikes = run(MatchKind::StDsm, FeatureKind::Spikes);
  const auto full = run(MatchKind::StDsm, FeatureKind::Dense);
  const auto& best_single = spatial_dense.mean >= temporal_spikes.mean ? spatial_dense : temporal_spikes;
  const double pooled = std::sqrt((full.std * full.std + best_single.std * best_single.std) / 2);
  const bool dsr_helps = spatial_dense.mean > spatial_spikes.mean;
  const bool full_holds = full.mean >= best_single.mean - pooled;
  return gate(dsr_helps && full_holds,
              fmt("spatial/spikes %.3f, spatial/dense %.3f, temporal/spikes %.3f, full %.3f +- %.3f, pooled std %.3f",
                  spatial_spikes.mean, spatial_dense.mean, temporal_spikes.mean, full.mean, full.std, pooled));
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism_and_efficiency() {
  auto cfg = load_config(config_path("smoke.ini"));
  ToyOptions opts{.per_class = cfg.train_per_class, .steps = cfg.steps, .size = cfg.size, .mode = cfg.mode,
                  .noise_events = cfg.noise_events, .seed = derive_seed(cfg.seed, "data-train")};
  const auto train = to_dataset(make_moving_bars(opts), 2);
  opts.seed = derive_seed(cfg.seed, "data-test");
  const auto test = to_dataset(make_moving_bars(opts), 2);
  const auto dir = fs::temp_directory_path() / "pace_acceptance_determinism";
  fs::create_directories(dir);
  std::string ckpt[2], csv[2];
  EfficiencyReport report;
  for (int run = 0; run < 2; ++run) {
    const auto teacher = pretrain_teacher(cfg.network(), train, test, cfg.teacher);
    const auto result = distill_run(cfg.distill, teacher, train);
    const auto path = (dir / ("run" + std::to_string(run) + ".ckpt")).string();
    checkpoint(result.set, path);
    ckpt[run] = file_bytes(path);
    const std::vector<GridSet> sets{to_grid_set(result.set)};
    csv[run] = results_csv(evaluate_protocol(sets, cfg.network(), test, cfg.eval));
    report = efficiency_report(cfg.distill.iterations, result.seconds, result.set.samples(),
                               static_cast<long long>(train.size()));
  }
  fs::remove_all(dir);
  const bool same = !ckpt[0].empty() && ckpt[0] == ckpt[1] && csv[0] == csv[1];
  const auto mnist_like = efficiency_report(100, 1.0, 10 * 1, 60000);
  const bool ratios = report.storage_ratio == static_cast<double>(2 * cfg.distill.ipc) / static_cast<double>(train.size()) &&
                      mnist_like.storage_ratio == 10.0 / 60000.0;
  return gate(same && ratios, fmt("checkpoints %s (%zu bytes), results CSV %s, storage ratio %lld/%lld = %.6g, 10/60000 = %.6g",
                                  ckpt[0] == ckpt[1] ? "identical" : "differ", ckpt[0].size(),
                                  csv[0] == csv[1] ? "identical" : "differ", report.stored_samples,
                                  report.full_samples, report.storage_ratio, mnist_like.storage_ratio));
}

Outcome nmnist_subset() {
  const char* root = std::getenv("PACE_NMNIST_DIR");
  if (!root || !*root) return {Verdict::Skip, "PACE_NMNIST_DIR not set"};
  auto cfg = load_config(config_path("nmnist.ini"));
  const auto train_grids = load_nmnist(root, "Train", cfg.train_per_class, cfg.steps, cfg.mode, cfg.size);
  const auto train = to_dataset(train_grids, 10);
  const auto test = to_dataset(load_nmnist(root, "Test", cfg.test_per_class, cfg.steps, cfg.mode, cfg.size), 10);
  const auto teacher = pretrain_teacher(cfg.network(), train, test, cfg.teacher);
  auto score = [&](const GridSet& set) {
    const std::vector<GridSet> sets{set};
    return evaluate_protocol(sets, cfg.network(), test, cfg.eval).summary.mean;
  };
  auto distilled = [&](MatchKind kind) {
    auto c = cfg.distill;
    c.match.kind = kind;
    return score(to_grid_set(distill_run(c, teacher, train).set));
  };
  const double pace = distilled(MatchKind::StDsm);
  const double cf = distilled(MatchKind::CharFn);
  const double dm = distilled(MatchKind::Dm);
  GridSet coreset;
  for (auto i : random_select(train.labels, 10, cfg.distill.ipc, derive_seed(cfg.seed, "random"))) {
    coreset.grids.push_back(train_grids.grids[i]);
    coreset.labels.push_back(train_grids.labels[i]);
  }
  const double rand = score(coreset);
  const bool ok = pace >= rand && pace >= 0.5 && pace > cf && cf > dm;
  return gate(ok, fmt("teacher %.3f, PACE %.3f, spatial CF %.3f, DM %.3f, random coreset %.3f", teacher.accuracy, pace,
                      cf, dm, rand));
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria = {
      {1, {"quantizer analytics", peq_analytics}},
      {2, {"spectral oracles", spectral_oracles}},
      {3, {"phase discrimination", phase_discrimination}},
      {4, {"full-path gradient integrity", gradient_integrity}},
      {5, {"toy distillation beats random coreset", toy_reproduction}},
      {6, {"ablation direction", ablation_direction}},
      {7, {"determinism and storage accounting", determinism_and_efficiency}},
      {8, {"N-MNIST subset", nmnist_subset}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [n, _] : criteria) selected.push_back(n);

  int status = 0;
  for (int n : selected) {
    const auto it = criteria.find(n);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", n);
      return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    std::printf("criterion %d %s: %s: %s [%.1fs]\n", n, tag, it->second.first, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (o.verdict == Verdict::Fail) status = 1;
    if (o.verdict == Verdict::Skip && selected.size() == 1) status = 77;
  }
  return status;
}
