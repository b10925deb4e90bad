#pragma once

// Synthetic spatial expression with planted co-expression modules: each
// module follows a mean field built from 2D Gaussian bumps, and counts are
// drawn per gene and spot from a Poisson or negative-binomial model.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stihc/error.hpp"
#include "stihc/expression.hpp"
#include "stihc/ihc.hpp"
#include "stihc/mesh.hpp"
#include "stihc/rng.hpp"

namespace stihc {

/// Gaussian bump in coordinates normalized to the grid's bounding box.
struct Bump {
  double cx = 0.5, cy = 0.5;
  double sx = 0.1, sy = 0.1;
  double amplitude = 1.0;
};

struct PatternSpec {
  std::string name;
  double baseline = 1.0;
  std::vector<Bump> bumps;
  int module_size = 1;
};

enum class NoiseModel { poisson, negative_binomial };

struct Scenario {
  std::string name = "balanced";
  std::vector<PatternSpec> patterns;
  int grid_rows = 52;
  int grid_cols = 52;
  std::size_t grid_spots = 2696;  // hex grid trimmed to this many spots
  std::size_t keep_spots = 0;     // 0 keeps every spot
  NoiseModel noise = NoiseModel::negative_binomial;
  double dispersion = 10.0;
  double scale_min = 0.8;
  double scale_max = 1.25;
  std::uint64_t seed = 1;
};

/// The four reference patterns: a corner bump, a thin ridge along the top
/// edge, a central blob and a broad diffuse field.
inline std::vector<PatternSpec> reference_patterns(std::span<const int> sizes) {
  if (sizes.size() != 4) throw Error(ErrorKind::invalid_argument, "reference patterns need exactly 4 module sizes");
  std::vector<PatternSpec> p(4);
  p[0] = {"corner", 1.0, {{0.1, 0.12, 0.22, 0.22, 8.0}}, sizes[0]};
  p[1].name = "ridge";
  p[1].baseline = 1.0;
  for (int k = 0; k <= 8; ++k) p[1].bumps.push_back({0.1 + 0.1 * k, 0.93, 0.07, 0.07, 5.0});
  p[1].module_size = sizes[1];
  p[2] = {"blob", 1.0, {{0.5, 0.5, 0.15, 0.15, 8.0}}, sizes[2]};
  p[3] = {"diffuse", 1.0, {{0.85, 0.3, 0.35, 0.35, 3.0}}, sizes[3]};
  return p;
}

inline Scenario make_scenario(std::string_view name, std::uint64_t seed) {
  Scenario s;
  s.seed = seed;
  s.name = std::string(name);
  if (name == "balanced") {
    const int sizes[] = {25, 25, 25, 25};
    s.patterns = reference_patterns(sizes);
  } else if (name == "imbalanced" || name == "sparse") {
    const int sizes[] = {6, 2, 16, 25};
    s.patterns = reference_patterns(sizes);
    if (name == "sparse") s.keep_spots = 260;
  } else {
    throw Error(ErrorKind::invalid_argument,
                "unknown scenario '" + std::string(name) + "' (expected balanced, imbalanced or sparse)");
  }
  return s;
}

/// Hexagonal-offset grid: odd rows shifted by half a spacing, rows sqrt(3)/2
/// apart, filled row by row and truncated to `spots` points.
inline SpotGrid hex_grid(int rows, int cols, std::size_t spots) {
  if (rows < 1 || cols < 1 || spots > std::size_t(rows) * std::size_t(cols))
    throw Error(ErrorKind::invalid_argument, "hex grid cannot hold the requested number of spots");
  std::vector<std::string> ids;
  std::vector<Point2> pts;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (pts.size() == spots) break;
      ids.push_back("spot_" + std::to_string(r) + "_" + std::to_string(c));
      pts.push_back({c + 0.5 * (r % 2), r * std::sqrt(3.0) / 2.0});
    }
  return SpotGrid(std::move(ids), std::move(pts));
}

/// Mean field of a pattern at the grid's spots, with coordinates normalized by
/// `box` = (xmin, ymin, xmax, ymax).
inline Eigen::VectorXd pattern_field(const PatternSpec& pattern, const SpotGrid& grid, const std::array<double, 4>& box) {
  Eigen::VectorXd f(Eigen::Index(grid.size()));
  const double wx = box[2] - box[0], wy = box[3] - box[1];
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double u = (grid.coords()[j].x - box[0]) / wx;
    const double v = (grid.coords()[j].y - box[1]) / wy;
    double value = pattern.baseline;
    for (const Bump& b : pattern.bumps) {
      const double du = (u - b.cx) / b.sx, dv = (v - b.cy) / b.sy;
      value += b.amplitude * std::exp(-0.5 * (du * du + dv * dv));
    }
    f[Eigen::Index(j)] = value;
  }
  return f;
}

inline std::array<double, 4> bounding_box(const SpotGrid& grid) {
  std::array<double, 4> box{grid.coords()[0].x, grid.coords()[0].y, grid.coords()[0].x, grid.coords()[0].y};
  for (const auto& p : grid.coords()) {
    box[0] = std::min(box[0], p.x);
    box[1] = std::min(box[1], p.y);
    box[2] = std::max(box[2], p.x);
    box[3] = std::max(box[3], p.y);
  }
  return box;
}

struct SyntheticDataset {
  ExpressionMatrix expression;
  SpotGrid grid;
  std::vector<int> truth;                   // module index per gene
  std::vector<std::string> module_names;
  std::vector<Eigen::VectorXd> fields;      // module mean fields at the spots
};

/// Uniform random subset of `keep` spots without replacement, in original
/// spot order.
inline SyntheticDataset subsample_spots(const SyntheticDataset& data, std::size_t keep, std::uint64_t seed) {
  const std::size_t n = data.grid.size();
  if (keep < 3) throw Error(ErrorKind::too_few_spots, "subsample needs at least 3 spots");
  if (keep > n) throw Error(ErrorKind::invalid_argument, "cannot keep more spots than exist");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::vector<std::uint64_t> key(n);
  for (std::size_t j = 0; j < n; ++j) key[j] = hash_key({seed, 3, j});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return key[a] != key[b] ? key[a] < key[b] : a < b;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());

  SyntheticDataset out;
  out.grid = data.grid.subset(order);
  out.truth = data.truth;
  out.module_names = data.module_names;
  out.expression.genes = data.expression.genes;
  out.expression.spots = out.grid.spot_ids();
  out.expression.values.resize(data.expression.values.rows(), Eigen::Index(keep));
  for (std::size_t k = 0; k < keep; ++k)
    out.expression.values.col(Eigen::Index(k)) = data.expression.values.col(Eigen::Index(order[k]));
  for (const auto& f : data.fields) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(keep));
    for (std::size_t k = 0; k < keep; ++k) g[Eigen::Index(k)] = f[Eigen::Index(order[k])];
    out.fields.push_back(std::move(g));
  }
  return out;
}

inline SyntheticDataset generate_dataset(const Scenario& scenario) {
  if (scenario.patterns.empty()) throw Error(ErrorKind::invalid_argument, "scenario has no patterns");
  if (!(scenario.scale_min > 0.0 && scenario.scale_max >= scenario.scale_min))
    throw Error(ErrorKind::invalid_argument, "gene scale range must be positive");
  if (scenario.noise == NoiseModel::negative_binomial && !(scenario.dispersion > 0.0))
    throw Error(ErrorKind::invalid_argument, "dispersion must be positive");
  SyntheticDataset data;
  data.grid = hex_grid(scenario.grid_rows, scenario.grid_cols, scenario.grid_spots);
  const auto box = bounding_box(data.grid);
  for (const auto& p : scenario.patterns) {
    if (p.module_size < 1) throw Error(ErrorKind::invalid_argument, "module sizes must be positive");
    if (!(p.baseline > 0.0)) throw Error(ErrorKind::invalid_argument, "pattern baseline must be positive");
    for (const auto& b : p.bumps)
      if (!(b.amplitude >= 0.0) || !(b.sx > 0.0) || !(b.sy > 0.0))
        throw Error(ErrorKind::invalid_argument, "bump amplitudes must be nonnegative and widths positive");
    data.fields.push_back(pattern_field(p, data.grid, box));
    data.module_names.push_back(p.name);
  }
  for (std::size_t a = 0; a < data.fields.size(); ++a)
    for (std::size_t b = a + 1; b < data.fields.size(); ++b)
      if (spearman(data.fields[a], data.fields[b]) >= 0.5)
        throw Error(ErrorKind::invalid_argument,
                    "patterns '" + data.module_names[a] + "' and '" + data.module_names[b] + "' correlate at 0.5 or more");

  const auto n = Eigen::Index(data.grid.size());
  int total = 0;
  for (const auto& p : scenario.patterns) total += p.module_size;
  auto& e = data.expression;
  e.spots = data.grid.spot_ids();
  e.values.resize(total, n);
  std::uint64_t gene = 0;
  for (std::size_t m = 0; m < scenario.patterns.size(); ++m) {
    const auto& p = scenario.patterns[m];
    for (int i = 0; i < p.module_size; ++i, ++gene) {
      const std::string index = std::to_string(i + 1);
      e.genes.push_back(p.name + "_" + std::string(index.size() < 2 ? 2 - index.size() : 0, '0') + index);
      data.truth.push_back(int(m));
      const double scale = scenario.scale_min +
                           (scenario.scale_max - scenario.scale_min) * unit_uniform(hash_key({scenario.seed, 1, gene}));
      for (Eigen::Index j = 0; j < n; ++j) {
        CounterEngine engine(hash_key({scenario.seed, 2, gene, std::uint64_t(j)}));
        double mean = scale * data.fields[m][j];
        if (scenario.noise == NoiseModel::negative_binomial) {
          std::gamma_distribution<double> gamma(scenario.dispersion, mean / scenario.dispersion);
          mean = gamma(engine);
        }
        std::poisson_distribution<long> poisson(std::max(mean, 1e-300));
        e.values(Eigen::Index(gene), j) = double(poisson(engine));
      }
    }
  }
  if (scenario.keep_spots > 0 && scenario.keep_spots < data.grid.size())
    return subsample_spots(data, scenario.keep_spots, scenario.seed);
  return data;
}

}  // namespace stihc
