#pragma once

#include "pace/snn.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pace {

enum class CoresetMethod { Random, Herding, KCenter };

CoresetMethod coreset_method_from_string(std::string_view s);
const char* to_string(CoresetMethod m) noexcept;

/// ipc uniform draws per class without replacement; classes in label order.
std::vector<std::size_t> random_select(std::span<const int> labels, int classes, int ipc, std::uint64_t seed);

/// Greedy herding per class: each step adds the sample that brings the
/// running selected mean closest to the class mean. Rows of `features` are
/// samples.
std::vector<std::size_t> herding_select(const Eigen::MatrixXd& features, std::span<const int> labels, int classes,
                                        int ipc);

/// Greedy farthest-point traversal per class, seeded with the sample closest
/// to the class mean.
std::vector<std::size_t> kcenter_select(const Eigen::MatrixXd& features, std::span<const int> labels, int classes,
                                        int ipc);

/// Time-averaged densified feature-cell vectors of every sample (rows).
Eigen::MatrixXd teacher_features(const Network& teacher, const Dataset& data);

/// Largest distance from any class member to its nearest selected sample
/// of the same class.
double coverage_radius(const Eigen::MatrixXd& features, std::span<const int> labels,
                       std::span<const std::size_t> selected);

/// Selection manifest consumed by evaluation.
struct CoresetManifest {
  CoresetMethod method = CoresetMethod::Random;
  int ipc = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> indices;
  std::vector<int> labels;
};

void write_manifest(const std::string& path, const CoresetManifest& m);
CoresetManifest read_manifest(const std::string& path);

}  // namespace pace
