#pragma once

#include <random>
#include <string>
#include <vector>

#include "stihc/mesh.hpp"

namespace stihc::test {

// m x m lattice on [0, side]^2, row-major from the origin.
inline SpotGrid regular_grid(int m, double side = 1.0) {
  std::vector<std::string> ids;
  std::vector<Point2> pts;
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      ids.push_back("s" + std::to_string(r * m + c));
      pts.push_back({side * c / (m - 1), side * r / (m - 1)});
    }
  return SpotGrid(std::move(ids), std::move(pts));
}

inline SpotGrid random_grid(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::string> ids;
  std::vector<Point2> pts;
  for (std::size_t j = 0; j < n; ++j) {
    ids.push_back("r" + std::to_string(j));
    pts.push_back({u(rng), u(rng)});
  }
  return SpotGrid(std::move(ids), std::move(pts));
}

}  // namespace stihc::test
