#include "pace/config.hpp"

#include "pace/error.hpp"
#include "pace/rng.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace pt = boost::property_tree;

namespace pace {

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"run", {"seed"}},
      {"data", {"source", "path", "steps", "size", "mode", "train_per_class", "test_per_class", "noise_events"}},
      {"network", {"layers", "tau", "v_th", "v_reset", "surrogate_width", "init_gain"}},
      {"teacher", {"epochs", "lr", "batch_size", "optimizer", "momentum", "weights"}},
      {"distill",
       {"ipc", "iterations", "lr", "optimizer", "momentum", "code_size", "directions", "direction_scale", "real_batch",
        "temperature", "temperature_end", "alpha", "beta", "lambda_in", "lambda_inter", "match", "features", "root",
        "fixed_directions", "relaxed", "init_zero_bias", "init", "init_margin", "augment", "crop_fraction"}},
      {"eval", {"n_sets", "n_models", "epochs", "lr", "batch_size", "optimizer", "momentum"}},
      {"coreset", {"method", "ipc"}},
  };
  return s;
}

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& out) {
  const auto node = tree.get_child_optional(pt::ptree::path_type(key, '.'));
  if (!node) return;
  const auto value = node->get_value_optional<T>();
  if (!value) throw Error(ErrorKind::Config, "bad value '" + node->data() + "' for " + key);
  out = *value;
}

void read_bool(const pt::ptree& tree, const std::string& key, bool& out) {
  std::string s;
  read(tree, key, s);
  if (s.empty()) return;
  if (s == "true" || s == "1" || s == "yes") out = true;
  else if (s == "false" || s == "0" || s == "no") out = false;
  else throw Error(ErrorKind::Config, "bad boolean '" + s + "' for " + key);
}

template <typename Fn>
void read_enum(const pt::ptree& tree, const std::string& key, Fn&& convert) {
  std::string s;
  read(tree, key, s);
  if (s.empty()) return;
  try {
    convert(s);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, key + ": " + e.what());
  }
}

FeatureKind feature_kind_from_string(std::string_view s) {
  if (s == "dense") return FeatureKind::Dense;
  if (s == "spikes") return FeatureKind::Spikes;
  throw Error(ErrorKind::Value, "unknown feature kind '" + std::string(s) + "' (dense | spikes)");
}

RootPlacement root_from_string(std::string_view s) {
  if (s == "per-term") return RootPlacement::PerTerm;
  if (s == "whole") return RootPlacement::Whole;
  throw Error(ErrorKind::Value, "unknown root placement '" + std::string(s) + "' (per-term | whole)");
}

void read_train(const pt::ptree& tree, const std::string& section, TrainOptions& t) {
  read(tree, section + ".epochs", t.epochs);
  read(tree, section + ".lr", t.lr);
  read(tree, section + ".batch_size", t.batch_size);
  read(tree, section + ".momentum", t.momentum);
  read_enum(tree, section + ".optimizer",
            [&](const std::string& s) { t.adam = optimizer_from_string(s) == OptimizerKind::Adam; });
  if (t.epochs < 0 || t.batch_size < 1 || !(t.lr >= 0))
    throw Error(ErrorKind::Config, "[" + section + "] needs epochs >= 0, batch_size >= 1, lr >= 0");
}

}  // namespace

NetworkSpec RunConfig::network() const {
  auto spec = NetworkSpec::parse(layers, steps, Shape3{2, size, size}, classes(), lif);
  spec.surrogate_width = surrogate_width;
  spec.init_gain = init_gain;
  spec.validate();
  return spec;
}

void RunConfig::apply_seed(std::uint64_t master) {
  seed = master;
  teacher.seed = derive_seed(master, "teacher");
  distill.seed = master;
  eval.seed = derive_seed(master, "eval");
}

RunConfig parse_config(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::Config, std::string("config syntax: ") + e.what());
  }

  std::vector<std::string> unknown;
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end() || !body.data().empty()) {
      unknown.push_back(section);
      continue;
    }
    for (const auto& [key, value] : body)
      if (!it->second.contains(key)) unknown.push_back(section + "." + key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw Error(ErrorKind::Config, msg);
  }

  RunConfig c;
  read(tree, "run.seed", c.seed);

  read(tree, "data.source", c.source);
  if (c.source != "toy" && c.source != "nmnist")
    throw Error(ErrorKind::Config, "data.source must be toy or nmnist, got '" + c.source + "'");
  read(tree, "data.path", c.path);
  read(tree, "data.steps", c.steps);
  if (c.source == "nmnist") c.size = 48;
  read(tree, "data.size", c.size);
  read_enum(tree, "data.mode", [&](const std::string& s) { c.mode = grid_mode_from_string(s); });
  read(tree, "data.train_per_class", c.train_per_class);
  read(tree, "data.test_per_class", c.test_per_class);
  read(tree, "data.noise_events", c.noise_events);
  if (c.steps < 1 || c.size < 8 || c.train_per_class < 1 || c.test_per_class < 1)
    throw Error(ErrorKind::Config, "[data] needs steps >= 1, size >= 8 and positive per-class counts");

  read(tree, "network.layers", c.layers);
  read(tree, "network.tau", c.lif.tau);
  read(tree, "network.v_th", c.lif.v_th);
  read(tree, "network.v_reset", c.lif.v_reset);
  read(tree, "network.surrogate_width", c.surrogate_width);
  read(tree, "network.init_gain", c.init_gain);

  read_train(tree, "teacher", c.teacher);
  read(tree, "teacher.weights", c.teacher_weights);

  c.distill = DistillConfig::defaults_for(c.mode);
  auto& d = c.distill;
  read(tree, "distill.ipc", d.ipc);
  read(tree, "distill.iterations", d.iterations);
  read(tree, "distill.lr", d.lr);
  read_enum(tree, "distill.optimizer", [&](const std::string& s) { d.optimizer = optimizer_from_string(s); });
  read(tree, "distill.momentum", d.momentum);
  read(tree, "distill.code_size", d.code_size);
  read(tree, "distill.directions", d.directions);
  read(tree, "distill.direction_scale", d.direction_scale);
  read(tree, "distill.real_batch", d.real_batch);
  read(tree, "distill.temperature", d.temperature);
  d.temperature_end = d.temperature;
  read(tree, "distill.temperature_end", d.temperature_end);
  read(tree, "distill.alpha", d.weights.alpha);
  read(tree, "distill.beta", d.weights.beta);
  read(tree, "distill.lambda_in", d.weights.lambda_in);
  read(tree, "distill.lambda_inter", d.weights.lambda_inter);
  read_enum(tree, "distill.match", [&](const std::string& s) { d.match.kind = match_kind_from_string(s); });
  read_enum(tree, "distill.features", [&](const std::string& s) { d.match.features = feature_kind_from_string(s); });
  read_enum(tree, "distill.root", [&](const std::string& s) { d.match.root = root_from_string(s); });
  read_bool(tree, "distill.fixed_directions", d.fixed_directions);
  std::string init;
  read(tree, "distill.init", init);
  if (!init.empty() && init != "noise" && init != "real")
    throw Error(ErrorKind::Config, "distill.init must be noise or real, got '" + init + "'");
  d.init_from_real = init == "real";
  read(tree, "distill.init_margin", d.init_margin);
  std::string augment;
  read(tree, "distill.augment", augment);
  if (!augment.empty()) {
    std::istringstream list(augment);
    for (std::string item; std::getline(list, item, ',');) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (item == "flip") d.augment.flip = true;
      else if (item == "crop") d.augment.crop = true;
      else if (item != "none")
        throw Error(ErrorKind::Config, "distill.augment takes none, flip, crop or a comma list, got '" + item + "'");
    }
  }
  read(tree, "distill.crop_fraction", d.augment.crop_fraction);
  double zero_bias = 0;
  if (tree.get_child_optional(pt::ptree::path_type("distill.init_zero_bias", '.'))) {
    read(tree, "distill.init_zero_bias", zero_bias);
    d.init_zero_bias = zero_bias;
  }
  read_bool(tree, "distill.relaxed", d.relaxed);

  read(tree, "eval.n_sets", c.n_sets);
  read(tree, "eval.n_models", c.eval.n_models);
  read_train(tree, "eval", c.eval.train);
  if (c.n_sets < 1 || c.eval.n_models < 1) throw Error(ErrorKind::Config, "[eval] needs n_sets, n_models >= 1");

  read_enum(tree, "coreset.method", [&](const std::string& s) { c.coreset_method = coreset_method_from_string(s); });
  read(tree, "coreset.ipc", c.coreset_ipc);
  if (c.coreset_ipc < 1) throw Error(ErrorKind::Config, "coreset.ipc must be at least 1");

  try {
    c.lif.validate();
    d.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  c.apply_seed(c.seed);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

nlohmann::json RunConfig::to_json() const {
  const auto& d = distill;
  return {
      {"run", {{"seed", seed}}},
      {"data",
       {{"source", source}, {"path", path}, {"steps", steps}, {"size", size}, {"mode", to_string(mode)},
        {"train_per_class", train_per_class}, {"test_per_class", test_per_class}, {"noise_events", noise_events}}},
      {"network",
       {{"layers", layers}, {"tau", lif.tau}, {"v_th", lif.v_th}, {"v_reset", lif.v_reset},
        {"surrogate_width", surrogate_width}, {"init_gain", init_gain}}},
      {"teacher",
       {{"epochs", teacher.epochs}, {"lr", teacher.lr}, {"batch_size", teacher.batch_size},
        {"optimizer", teacher.adam ? "adaptive" : "sgd-momentum"}, {"momentum", teacher.momentum},
        {"seed", teacher.seed}, {"weights", teacher_weights}}},
      {"distill",
       {{"ipc", d.ipc}, {"iterations", d.iterations}, {"lr", d.lr}, {"optimizer", to_string(d.optimizer)},
        {"momentum", d.momentum}, {"mode", to_string(d.mode)}, {"code_size", d.code_size},
        {"directions", d.directions}, {"direction_scale", d.direction_scale}, {"real_batch", d.real_batch},
        {"temperature", d.temperature},
        {"temperature_end", d.temperature_end}, {"alpha", d.weights.alpha}, {"beta", d.weights.beta},
        {"lambda_in", d.weights.lambda_in}, {"lambda_inter", d.weights.lambda_inter},
        {"match", to_string(d.match.kind)},
        {"features", d.match.features == FeatureKind::Dense ? "dense" : "spikes"},
        {"root", d.match.root == RootPlacement::PerTerm ? "per-term" : "whole"},
        {"fixed_directions", d.fixed_directions},
        {"init", d.init_from_real ? "real" : "noise"}, {"init_margin", d.init_margin},
        {"augment", d.augment.flip && d.augment.crop ? "flip,crop" : d.augment.flip ? "flip" : d.augment.crop ? "crop" : "none"},
        {"crop_fraction", d.augment.crop_fraction},
        {"init_zero_bias", d.init_zero_bias ? nlohmann::json(*d.init_zero_bias) : nlohmann::json()}, {"relaxed", d.relaxed}, {"seed", d.seed}}},
      {"eval",
       {{"n_sets", n_sets}, {"n_models", eval.n_models}, {"epochs", eval.train.epochs}, {"lr", eval.train.lr},
        {"batch_size", eval.train.batch_size}, {"optimizer", eval.train.adam ? "adaptive" : "sgd-momentum"},
        {"momentum", eval.train.momentum}, {"seed", eval.seed}}},
      {"coreset", {{"method", to_string(coreset_method)}, {"ipc", coreset_ipc}}},
  };
}

}  // namespace pace
