#include "pace/coreset.hpp"

#include "pace/rng.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace pace;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

// Brute force: farthest class member from its nearest selected sample.
double coverage_oracle(const Eigen::MatrixXd& f, const std::vector<int>& labels, const std::vector<std::size_t>& sel) {
  double worst = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (auto s : sel)
      if (labels[s] == labels[i]) {
        double d = 0;
        for (Eigen::Index k = 0; k < f.cols(); ++k) d += (f(i, k) - f(s, k)) * (f(i, k) - f(s, k));
        best = std::min(best, std::sqrt(d));
      }
    worst = std::max(worst, best);
  }
  return worst;
}

void check_selection(const std::vector<std::size_t>& sel, const std::vector<int>& labels, int classes, int ipc) {
  ASSERT_EQ(sel.size(), static_cast<std::size_t>(classes * ipc));
  std::set<std::size_t> unique(sel.begin(), sel.end());
  EXPECT_EQ(unique.size(), sel.size());
  std::vector<int> count(classes, 0);
  for (auto i : sel) {
    ASSERT_LT(i, labels.size());
    ++count[labels[i]];
  }
  for (int c : count) EXPECT_EQ(c, ipc);
}

}  // namespace

TEST(Random, ExactCountsDeterminismAndWholeClass) {
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
  const auto a = random_select(labels, 3, 4, 9);
  check_selection(a, labels, 3, 4);
  EXPECT_EQ(a, random_select(labels, 3, 4, 9));
  EXPECT_NE(a, random_select(labels, 3, 4, 10));
  const auto all = random_select(labels, 3, 10, 1);
  check_selection(all, labels, 3, 10);
  EXPECT_EQ(all, random_select(labels, 3, 10, 1));
  EXPECT_THROW(random_select(labels, 3, 11, 1), Error);
}

TEST(Herding, Examples) {
  const std::vector<int> labels{0, 0, 0};
  EXPECT_EQ(herding_select(column({0, 1, 2}), labels, 1, 1), (std::vector<std::size_t>{1}));
  const auto all = herding_select(column({0, 1, 2}), labels, 1, 3);
  EXPECT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0], 1u);
  EXPECT_EQ(herding_select(column({5, 5, 5}), labels, 1, 1), (std::vector<std::size_t>{0}));
  EXPECT_THROW(herding_select(column({0, NAN, 2}), labels, 1, 1), Error);
}

TEST(Herding, RunningMeanApproachesClassMean) {
  Rng rng(4);
  std::normal_distribution<double> n;
  Eigen::MatrixXd f(40, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = n(rng);
  const std::vector<int> labels(40, 0);
  const auto sel = herding_select(f, labels, 1, 12);
  check_selection(sel, labels, 1, 12);
  const Eigen::RowVectorXd mu = f.colwise().mean();
  // Each greedy pick is the best available one-step extension.
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(3);
  std::set<std::size_t> taken;
  for (std::size_t k = 0; k < sel.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < 40; ++j)
      if (!taken.count(j)) best = std::min(best, (mu - (sum + f.row(j)) / double(k + 1)).norm());
    sum += f.row(sel[k]);
    taken.insert(sel[k]);
    EXPECT_NEAR((mu - sum / double(k + 1)).norm(), best, 1e-12);
  }
}

TEST(KCenter, Examples) {
  const std::vector<int> labels{0, 0, 0};
  EXPECT_EQ(kcenter_select(column({0, 10, 11}), labels, 1, 2), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(kcenter_select(column({0, 10, 11}), labels, 1, 1), (std::vector<std::size_t>{1}));
  EXPECT_EQ(kcenter_select(column({3, 3, 3, 3}), std::vector<int>{0, 0, 0, 0}, 1, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(KCenter, CoverageMatchesBruteForce) {
  Rng rng(8);
  std::normal_distribution<double> n;
  Eigen::MatrixXd f(60, 4);
  for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = n(rng);
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) labels.push_back(i % 2);
  for (int ipc : {1, 3, 7}) {
    const auto sel = kcenter_select(f, labels, 2, ipc);
    check_selection(sel, labels, 2, ipc);
    EXPECT_NEAR(coverage_radius(f, labels, sel), coverage_oracle(f, labels, sel), 1e-12);
    check_selection(herding_select(f, labels, 2, ipc), labels, 2, ipc);
  }
}

TEST(CoresetMethod, Parse) {
  EXPECT_EQ(coreset_method_from_string("random"), CoresetMethod::Random);
  EXPECT_EQ(coreset_method_from_string("herding"), CoresetMethod::Herding);
  EXPECT_EQ(coreset_method_from_string("kcenter"), CoresetMethod::KCenter);
  EXPECT_THROW(coreset_method_from_string("unknown"), Error);
}

TEST(Manifest, RoundTrip) {
  CoresetManifest m{CoresetMethod::Herding, 2, 42, {3, 1, 8, 6}, {0, 0, 1, 1}};
  const auto path = (std::filesystem::temp_directory_path() / "pace_manifest.json").string();
  write_manifest(path, m);
  const auto back = read_manifest(path);
  EXPECT_EQ(back.method, m.method);
  EXPECT_EQ(back.ipc, 2);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.indices, m.indices);
  EXPECT_EQ(back.labels, m.labels);
  std::filesystem::remove(path);
  EXPECT_THROW(read_manifest(path), Error);
}
