#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "stihc/ihc.hpp"
#include "stihc/synth.hpp"

using namespace stihc;

namespace {

std::multiset<int> module_sizes(const SyntheticDataset& d) {
  std::vector<int> count(d.module_names.size(), 0);
  for (int m : d.truth) ++count[std::size_t(m)];
  return {count.begin(), count.end()};
}

}  // namespace

TEST(Synth, ScenarioShapes) {
  SyntheticDataset balanced = generate_dataset(make_scenario("balanced", 1));
  EXPECT_EQ(balanced.expression.gene_count(), 100u);
  EXPECT_EQ(balanced.expression.spot_count(), 2696u);
  EXPECT_EQ(module_sizes(balanced), (std::multiset<int>{25, 25, 25, 25}));

  SyntheticDataset imbalanced = generate_dataset(make_scenario("imbalanced", 1));
  EXPECT_EQ(imbalanced.expression.gene_count(), 49u);
  EXPECT_EQ(module_sizes(imbalanced), (std::multiset<int>{2, 6, 16, 25}));

  SyntheticDataset sparse = generate_dataset(make_scenario("sparse", 1));
  EXPECT_EQ(sparse.expression.gene_count(), 49u);
  EXPECT_EQ(sparse.expression.spot_count(), 260u);
  EXPECT_EQ(sparse.grid.size(), 260u);
  EXPECT_EQ(sparse.fields.front().size(), 260);
  EXPECT_EQ(sparse.expression.genes.front(), "corner_01");
  EXPECT_THROW(make_scenario("dense", 1), Error);
}

TEST(Synth, CountsAreNonnegativeIntegers) {
  SyntheticDataset d = generate_dataset(make_scenario("imbalanced", 3));
  const auto& v = d.expression.values;
  EXPECT_GE(v.minCoeff(), 0.0);
  EXPECT_TRUE((v.array() == v.array().round()).all());
}

TEST(Synth, ConstantFieldSampleMeanMatches) {
  for (NoiseModel noise : {NoiseModel::poisson, NoiseModel::negative_binomial}) {
    Scenario s;
    s.patterns = {{"flat", 10.0, {}, 3}, {"bump", 1.0, {{0.5, 0.5, 0.1, 0.1, 5.0}}, 1}};
    s.scale_min = s.scale_max = 1.0;
    s.noise = noise;
    SyntheticDataset d = generate_dataset(s);
    // variance is 10 (Poisson) or 10 + 10^2 / 10 (negative binomial)
    const double sd = std::sqrt(20.0 / 2696.0);
    for (int g = 0; g < 3; ++g) EXPECT_NEAR(d.expression.values.row(g).mean(), 10.0, 5.0 * sd);
  }
}

TEST(Synth, DeterministicInSeed) {
  SyntheticDataset a = generate_dataset(make_scenario("sparse", 7));
  SyntheticDataset b = generate_dataset(make_scenario("sparse", 7));
  SyntheticDataset c = generate_dataset(make_scenario("sparse", 8));
  EXPECT_EQ(a.expression.values, b.expression.values);
  EXPECT_EQ(a.expression.spots, b.expression.spots);
  EXPECT_NE(a.expression.spots, c.expression.spots);
}

TEST(Synth, ReferencePatternsAreDistinct) {
  SyntheticDataset d = generate_dataset(make_scenario("balanced", 1));
  ASSERT_EQ(d.fields.size(), 4u);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) EXPECT_LT(spearman(d.fields[a], d.fields[b]), 0.5);
  Scenario s;
  s.patterns = {{"a", 1.0, {{0.3, 0.3, 0.1, 0.1, 4.0}}, 2}, {"b", 2.0, {{0.3, 0.3, 0.1, 0.1, 9.0}}, 2}};
  EXPECT_THROW(generate_dataset(s), Error);
}

TEST(Synth, ModuleAverageFollowsItsField) {
  SyntheticDataset d = generate_dataset(make_scenario("balanced", 2));
  for (std::size_t m = 0; m < 4; ++m) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(Eigen::Index(d.grid.size()));
    for (std::size_t g = 0; g < d.truth.size(); ++g)
      if (d.truth[g] == int(m)) sum += d.expression.values.row(Eigen::Index(g)).transpose();
    for (std::size_t other = 0; other < 4; ++other) {
      const double rho = spearman(sum, d.fields[other]);
      if (other == m) {
        EXPECT_GT(rho, 0.6) << d.module_names[m];
      } else {
        EXPECT_LT(rho, spearman(sum, d.fields[m])) << d.module_names[m];
      }
    }
  }
}

TEST(Synth, SubsampleKeepsOrderAndColumns) {
  Scenario s = make_scenario("imbalanced", 4);
  SyntheticDataset full = generate_dataset(s);
  SyntheticDataset same = subsample_spots(full, full.grid.size(), 4);
  EXPECT_EQ(same.expression.values, full.expression.values);
  EXPECT_EQ(same.grid.spot_ids(), full.grid.spot_ids());

  SyntheticDataset sub = subsample_spots(full, 100, 4);
  ASSERT_EQ(sub.grid.size(), 100u);
  std::map<std::string, std::size_t> position;
  for (std::size_t j = 0; j < full.grid.size(); ++j) position[full.grid.spot_ids()[j]] = j;
  std::size_t next = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    const std::size_t j = position.at(sub.grid.spot_ids()[k]);
    EXPECT_GE(j, next);
    next = j + 1;
    EXPECT_EQ(sub.expression.values.col(Eigen::Index(k)), full.expression.values.col(Eigen::Index(j)));
    EXPECT_EQ(sub.fields[1][Eigen::Index(k)], full.fields[1][Eigen::Index(j)]);
  }
  EXPECT_THROW(subsample_spots(full, 2, 4), Error);
  EXPECT_THROW(subsample_spots(full, full.grid.size() + 1, 4), Error);
}

TEST(Synth, HexGridSpacing) {
  SpotGrid g = hex_grid(4, 5, 18);
  ASSERT_EQ(g.size(), 18u);
  const auto& p = g.coords();
  EXPECT_NEAR(std::hypot(p[1].x - p[0].x, p[1].y - p[0].y), 1.0, 1e-15);
  // first point of row 1 is shifted by half a spacing: equilateral neighbors
  EXPECT_NEAR(std::hypot(p[5].x - p[0].x, p[5].y - p[0].y), 1.0, 1e-15);
  EXPECT_NEAR(std::hypot(p[5].x - p[1].x, p[5].y - p[1].y), 1.0, 1e-15);
  EXPECT_THROW(hex_grid(2, 2, 5), Error);
}
