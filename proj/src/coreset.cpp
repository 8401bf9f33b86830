#include "pace/coreset.hpp"

#include "pace/densify.hpp"
#include "pace/error.hpp"
#include "pace/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

namespace pace {

CoresetMethod coreset_method_from_string(std::string_view s) {
  if (s == "random") return CoresetMethod::Random;
  if (s == "herding") return CoresetMethod::Herding;
  if (s == "kcenter" || s == "k-center") return CoresetMethod::KCenter;
  throw Error(ErrorKind::Value, "unknown coreset method '" + std::string(s) + "' (random | herding | kcenter)");
}

const char* to_string(CoresetMethod m) noexcept {
  switch (m) {
    case CoresetMethod::Random: return "random";
    case CoresetMethod::Herding: return "herding";
    case CoresetMethod::KCenter: return "kcenter";
  }
  return "?";
}

namespace {

std::vector<std::vector<std::size_t>> members_by_class(std::span<const int> labels, int classes, int ipc) {
  require(ipc >= 1, "ipc must be at least 1");
  std::vector<std::vector<std::size_t>> out(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < classes, "label out of range");
    out[labels[i]].push_back(i);
  }
  for (int c = 0; c < classes; ++c)
    require(out[c].size() >= static_cast<std::size_t>(ipc),
            "class " + std::to_string(c) + " has " + std::to_string(out[c].size()) + " samples, fewer than ipc=" +
                std::to_string(ipc));
  return out;
}

void check_features(const Eigen::MatrixXd& features, std::span<const int> labels) {
  require(features.rows() == static_cast<Eigen::Index>(labels.size()), "one feature row per sample");
  require(features.allFinite(), "coreset features must be finite");
}

}  // namespace

std::vector<std::size_t> random_select(std::span<const int> labels, int classes, int ipc, std::uint64_t seed) {
  std::vector<std::size_t> out;
  auto members = members_by_class(labels, classes, ipc);
  for (int c = 0; c < classes; ++c) {
    auto& pool = members[c];
    Rng rng(derive_seed(seed, "coreset-random", static_cast<std::uint64_t>(c)));
    for (int k = 0; k < ipc; ++k) {
      std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      out.push_back(pool[k]);
    }
  }
  return out;
}

std::vector<std::size_t> herding_select(const Eigen::MatrixXd& features, std::span<const int> labels, int classes,
                                        int ipc) {
  check_features(features, labels);
  std::vector<std::size_t> out;
  for (const auto& pool : members_by_class(labels, classes, ipc)) {
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(features.cols());
    for (auto i : pool) mu += features.row(i);
    mu /= static_cast<double>(pool.size());

    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(features.cols());
    std::vector<bool> taken(pool.size(), false);
    for (int k = 0; k < ipc; ++k) {
      std::size_t best = pool.size();
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < pool.size(); ++j) {
        if (taken[j]) continue;
        const double d = (mu - (sum + features.row(pool[j])) / (k + 1.0)).squaredNorm();
        if (d < best_dist) {
          best_dist = d;
          best = j;
        }
      }
      taken[best] = true;
      sum += features.row(pool[best]);
      out.push_back(pool[best]);
    }
  }
  return out;
}

std::vector<std::size_t> kcenter_select(const Eigen::MatrixXd& features, std::span<const int> labels, int classes,
                                        int ipc) {
  check_features(features, labels);
  std::vector<std::size_t> out;
  for (const auto& pool : members_by_class(labels, classes, ipc)) {
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(features.cols());
    for (auto i : pool) mu += features.row(i);
    mu /= static_cast<double>(pool.size());

    std::size_t first = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pool.size(); ++j) {
      const double d = (features.row(pool[j]) - mu).squaredNorm();
      if (d < best) {
        best = d;
        first = j;
      }
    }
    std::vector<double> nearest(pool.size(), std::numeric_limits<double>::infinity());
    std::vector<bool> taken(pool.size(), false);
    std::size_t pick = first;
    for (int k = 0; k < ipc; ++k) {
      taken[pick] = true;
      out.push_back(pool[pick]);
      for (std::size_t j = 0; j < pool.size(); ++j)
        nearest[j] = std::min(nearest[j], (features.row(pool[j]) - features.row(pool[pick])).squaredNorm());
      double far = -1.0;
      for (std::size_t j = 0; j < pool.size(); ++j)
        if (!taken[j] && nearest[j] > far) {
          far = nearest[j];
          pick = j;
        }
    }
  }
  return out;
}

Eigen::MatrixXd teacher_features(const Network& teacher, const Dataset& data) {
  require(!data.empty(), "teacher_features needs samples");
  const int cell = teacher.feature_cell();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), teacher.feature_dim(cell));
  SimOptions opts;
  opts.full_trace = false;
  parallel_for(data.size(), [&](std::size_t i) {
    const auto trace = forward(teacher, data.inputs[i], opts);
    out.row(static_cast<Eigen::Index>(i)) = flatten_features(std::span(&trace, 1), cell).time_mean();
  });
  return out;
}

double coverage_radius(const Eigen::MatrixXd& features, std::span<const int> labels,
                       std::span<const std::size_t> selected) {
  double radius = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (auto s : selected)
      if (labels[s] == labels[i]) nearest = std::min(nearest, (features.row(i) - features.row(s)).norm());
    radius = std::max(radius, nearest);
  }
  return radius;
}

void write_manifest(const std::string& path, const CoresetManifest& m) {
  nlohmann::json j;
  j["kind"] = "coreset";
  j["method"] = to_string(m.method);
  j["ipc"] = m.ipc;
  j["seed"] = m.seed;
  j["indices"] = m.indices;
  j["labels"] = m.labels;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path);
  out << j.dump(2) << '\n';
}

CoresetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("kind") != "coreset") throw Error(ErrorKind::Malformed, path + " is not a coreset manifest");
    CoresetManifest m;
    m.method = coreset_method_from_string(j.at("method").get<std::string>());
    m.ipc = j.at("ipc");
    m.seed = j.at("seed");
    m.indices = j.at("indices").get<std::vector<std::size_t>>();
    m.labels = j.at("labels").get<std::vector<int>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, path + ": " + e.what());
  }
}

}  // namespace pace
