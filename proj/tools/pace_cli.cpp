#include "pace/config.hpp"
#include "pace/coreset.hpp"
#include "pace/distill.hpp"
#include "pace/error.hpp"
#include "pace/eval.hpp"
#include "pace/nmnist.hpp"
#include "pace/render.hpp"
#include "pace/rng.hpp"
#include "pace/toy_data.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace pace;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_config("") : load_config(c.config);
  if (c.seed) cfg.apply_seed(*c.seed);
  return cfg;
}

struct RealData {
  GridSet train;
  GridSet test;
};

RealData load_real(const RunConfig& cfg) {
  if (cfg.source == "nmnist") {
    if (cfg.path.empty()) throw Error(ErrorKind::Config, "data.path is required for nmnist");
    return {load_nmnist(cfg.path, "Train", cfg.train_per_class, cfg.steps, cfg.mode, cfg.size),
            load_nmnist(cfg.path, "Test", cfg.test_per_class, cfg.steps, cfg.mode, cfg.size)};
  }
  ToyOptions opts{.per_class = cfg.train_per_class, .steps = cfg.steps, .size = cfg.size, .mode = cfg.mode,
                  .noise_events = cfg.noise_events, .seed = derive_seed(cfg.seed, "data-train")};
  RealData d;
  d.train = make_moving_bars(opts);
  opts.per_class = cfg.test_per_class;
  opts.seed = derive_seed(cfg.seed, "data-test");
  d.test = make_moving_bars(opts);
  return d;
}

TeacherHandle obtain_teacher(const RunConfig& cfg, const Dataset& train, const Dataset& test) {
  const auto spec = cfg.network();
  if (!cfg.teacher_weights.empty()) {
    Network net = load_network(cfg.teacher_weights);
    if (!(net.spec() == spec))
      throw Error(ErrorKind::Incompatible, "teacher weights " + cfg.teacher_weights + " do not match [network]");
    const double acc = accuracy(net, test);
    return TeacherHandle{std::move(net), true, acc};
  }
  return pretrain_teacher(spec, train, test, cfg.teacher);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_distill(const Common& c) {
  const auto cfg = resolve(c);
  fs::create_directories(c.out);
  const auto real = load_real(cfg);
  const auto train = to_dataset(real.train, cfg.classes());
  const auto test = to_dataset(real.test, cfg.classes());

  const auto teacher = obtain_teacher(cfg, train, test);
  std::cout << "teacher accuracy " << teacher.accuracy << '\n';
  save_network((fs::path(c.out) / "teacher.wts").string(), teacher.net);

  const int every = std::max(1, cfg.distill.iterations / 20);
  auto result = distill_run(cfg.distill, teacher, train, [&](int it, double loss) {
    if (it % every == 0 || it + 1 == cfg.distill.iterations) std::cout << "iteration " << it << " loss " << loss << '\n';
  });
  checkpoint(result.set, (fs::path(c.out) / "synthetic.ckpt").string());
  write_loss_csv((fs::path(c.out) / "loss.csv").string(), result.history);

  const auto report =
      efficiency_report(cfg.distill.iterations, result.seconds, result.set.samples(), static_cast<long long>(train.size()));
  std::cout << format_report(report);
  nlohmann::json manifest = {
      {"command", "distill"},
      {"config", cfg.to_json()},
      {"teacher_accuracy", teacher.accuracy},
      {"config_hash", config_hash(result.set)},
      {"outputs", {"teacher.wts", "synthetic.ckpt", "loss.csv"}},
      {"efficiency",
       {{"iterations", report.iterations},
        {"seconds_per_iteration", report.seconds_per_iteration ? nlohmann::json(*report.seconds_per_iteration) : nlohmann::json()},
        {"stored_samples", report.stored_samples},
        {"full_samples", report.full_samples},
        {"storage_ratio", report.storage_ratio},
        {"peak_rss_bytes", report.peak_rss_bytes}}},
  };
  write_json(fs::path(c.out) / "manifest.json", manifest);
  return 0;
}

bool is_manifest(const std::string& path) { return fs::path(path).extension() == ".json"; }

int cmd_eval(const Common& c, const std::vector<std::string>& inputs) {
  const auto cfg = resolve(c);
  const auto real = load_real(cfg);
  const auto test = to_dataset(real.test, cfg.classes());

  std::vector<GridSet> sets;
  long long stored = 0;
  for (const auto& in : inputs) {
    if (!fs::exists(in)) throw Error(ErrorKind::Io, "input not found: " + in);
    if (is_manifest(in)) {
      const auto m = read_manifest(in);
      GridSet s;
      for (auto i : m.indices) {
        if (i >= real.train.grids.size()) throw Error(ErrorKind::Incompatible, in + " indexes past the training set");
        s.grids.push_back(real.train.grids[i]);
        s.labels.push_back(real.train.labels[i]);
      }
      stored = static_cast<long long>(s.grids.size());
      sets.push_back(std::move(s));
    } else {
      const auto set = restore(in);
      stored = set.samples();
      sets.push_back(to_grid_set(set));
    }
  }
  const auto result = evaluate_protocol(sets, cfg.network(), test, cfg.eval);
  fs::create_directories(c.out);
  write_results_csv((fs::path(c.out) / "results.csv").string(), result);
  std::cout << results_csv(result);
  const auto report = efficiency_report(0, 0.0, stored, static_cast<long long>(real.train.grids.size()), result.summary.mean);
  std::cout << format_report(report);
  if (result.summary.single_trial) std::cout << "note: single trial, std is not meaningful\n";
  write_json(fs::path(c.out) / "eval_manifest.json",
             {{"command", "eval"}, {"config", cfg.to_json()}, {"inputs", inputs}, {"outputs", {"results.csv"}}});
  return 0;
}

int cmd_coreset(const Common& c, const std::string& method_name, std::optional<int> ipc_flag) {
  auto cfg = resolve(c);
  const auto method = coreset_method_from_string(method_name);
  const int ipc = ipc_flag.value_or(cfg.coreset_ipc);
  const auto real = load_real(cfg);
  const auto train = to_dataset(real.train, cfg.classes());

  CoresetManifest m{method, ipc, cfg.seed, {}, {}};
  if (method == CoresetMethod::Random) {
    m.indices = random_select(train.labels, train.classes, ipc, derive_seed(cfg.seed, "coreset"));
  } else {
    const auto test = to_dataset(real.test, cfg.classes());
    const auto teacher = obtain_teacher(cfg, train, test);
    const auto features = teacher_features(teacher.net, train);
    m.indices = method == CoresetMethod::Herding ? herding_select(features, train.labels, train.classes, ipc)
                                                 : kcenter_select(features, train.labels, train.classes, ipc);
  }
  for (auto i : m.indices) m.labels.push_back(train.labels[i]);
  fs::create_directories(c.out);
  const auto path = (fs::path(c.out) / "coreset.json").string();
  write_manifest(path, m);
  std::cout << "wrote " << path << " (" << m.indices.size() << " samples)\n";
  return 0;
}

GridSet load_grids(const std::string& path, int& code_size) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "input not found: " + path);
  char magic[8] = {};
  std::ifstream(path, std::ios::binary).read(magic, 8);
  if (std::string_view(magic, 8) == "PACECKP1") {
    const auto set = restore(path);
    code_size = set.code_size;
    return to_grid_set(set);
  }
  auto grids = read_grid_set(path);
  code_size = grids.code_size;
  return grids;
}

int cmd_render(const Common& c, const std::string& input) {
  int code_size = 0;
  const auto grids = load_grids(input, code_size);
  std::size_t files = 0;
  for (std::size_t i = 0; i < grids.grids.size(); ++i)
    files += render_grid(grids.grids[i], c.out, "sample" + std::to_string(i) + "_class" + std::to_string(grids.labels[i]),
                         code_size)
                 .size();
  std::cout << "wrote " << files << " images to " << c.out << '\n';
  return 0;
}

int cmd_inspect(const std::string& input) {
  int code_size = 0;
  const auto grids = load_grids(input, code_size);
  std::cout << "samples " << grids.grids.size() << "\n";
  if (grids.grids.empty()) return 0;
  const auto& g0 = grids.grids.front();
  std::cout << "shape T=" << g0.steps << " C=" << g0.channels << " H=" << g0.height << " W=" << g0.width
            << " mode=" << to_string(g0.mode) << " N=" << code_size << '\n';
  for (std::size_t i = 0; i < grids.grids.size(); ++i) {
    const auto& g = grids.grids[i];
    const auto active = (g.values > 0u).count();
    std::printf("%4zu class %d  active %.4f  events %llu  max %u\n", i, grids.labels[i],
                static_cast<double>(active) / static_cast<double>(g.size()),
                static_cast<unsigned long long>(g.values.cast<std::uint64_t>().sum()), g.values.maxCoeff());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-data condensation for spiking networks"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides [run] seed)");
    sub->add_option("--out", common.out, "output directory");
  };

  auto* distill = app.add_subcommand("distill", "pretrain a teacher and distill a synthetic set");
  add_common(distill);

  std::vector<std::string> eval_inputs;
  auto* eval = app.add_subcommand("eval", "train students on checkpoints or coreset manifests");
  add_common(eval);
  eval->add_option("--input", eval_inputs, "synthetic checkpoint(s) or coreset manifest")->required();

  std::string method;
  std::optional<int> ipc;
  auto* coreset = app.add_subcommand("coreset", "select a real-sample coreset");
  add_common(coreset);
  coreset->add_option("--method", method, "random | herding | kcenter")->required();
  coreset->add_option("--ipc", ipc, "samples per class");

  std::string input;
  auto* render = app.add_subcommand("render", "write one PPM per time bin");
  render->add_option("--input", input, "checkpoint or grid file")->required();
  render->add_option("--out", common.out, "output directory");

  auto* inspect = app.add_subcommand("inspect", "print grid statistics");
  inspect->add_option("--input", input, "checkpoint or grid file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (auto* sub : {distill, eval, coreset})
    if (sub->parsed() && sub->count("--seed")) common.seed = seed;

  try {
    if (distill->parsed()) return cmd_distill(common);
    if (eval->parsed()) return cmd_eval(common, eval_inputs);
    if (coreset->parsed()) return cmd_coreset(common, method, ipc);
    if (render->parsed()) return cmd_render(common, input);
    if (inspect->parsed()) return cmd_inspect(input);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Value ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
