#pragma once

// External and internal clustering validity indices.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "stihc/error.hpp"

namespace stihc {

/// Maps arbitrary labels to 0..m-1 in order of first appearance.
inline std::vector<int> canonical_labels(std::span<const int> labels) {
  std::map<int, int> ids;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = ids.try_emplace(labels[i], int(ids.size()));
    out[i] = it->second;
  }
  return out;
}

inline int cluster_count(std::span<const int> labels) {
  std::vector<int> c = canonical_labels(labels);
  return c.empty() ? 0 : *std::max_element(c.begin(), c.end()) + 1;
}

struct ContingencyTable {
  Eigen::MatrixXd counts;  // rows: clusters of the first partition
  Eigen::VectorXd row_sums;
  Eigen::VectorXd col_sums;
  std::size_t total = 0;
};

inline ContingencyTable contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::length_mismatch, "partitions have different lengths");
  const auto ca = canonical_labels(a), cb = canonical_labels(b);
  const int r = a.empty() ? 0 : *std::max_element(ca.begin(), ca.end()) + 1;
  const int c = b.empty() ? 0 : *std::max_element(cb.begin(), cb.end()) + 1;
  ContingencyTable t;
  t.counts = Eigen::MatrixXd::Zero(r, c);
  for (std::size_t i = 0; i < a.size(); ++i) t.counts(ca[i], cb[i]) += 1.0;
  t.row_sums = t.counts.rowwise().sum();
  t.col_sums = t.counts.colwise().sum().transpose();
  t.total = a.size();
  return t;
}

/// Hubert-Arabie adjusted Rand index.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::length_mismatch, "partitions have different lengths");
  if (a.size() < 2) throw Error(ErrorKind::invalid_argument, "adjusted Rand index needs at least 2 items");
  const ContingencyTable t = contingency(a, b);
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  const double index = t.counts.unaryExpr(pairs).sum();
  const double sum_a = t.row_sums.unaryExpr(pairs).sum();
  const double sum_b = t.col_sums.unaryExpr(pairs).sum();
  const double expected = sum_a * sum_b / pairs(double(t.total));
  const double max_index = 0.5 * (sum_a + sum_b);
  // both partitions trivial in the same way
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// Davies-Bouldin index with sigma_p = mean Euclidean distance of members to
/// their centroid.
inline double davies_bouldin(const Eigen::MatrixXd& features, std::span<const int> labels) {
  if (std::size_t(features.rows()) != labels.size())
    throw Error(ErrorKind::length_mismatch, "feature rows must match label count");
  if (!features.allFinite()) throw Error(ErrorKind::invalid_argument, "features must be finite");
  const auto lab = canonical_labels(labels);
  const int m = cluster_count(labels);
  if (m < 2) throw Error(ErrorKind::single_cluster, "Davies-Bouldin index needs at least 2 clusters");
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(m, features.cols());
  Eigen::VectorXd sizes = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    centroids.row(lab[i]) += features.row(Eigen::Index(i));
    sizes[lab[i]] += 1.0;
  }
  for (int p = 0; p < m; ++p) centroids.row(p) /= sizes[p];
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(m);
  for (std::size_t i = 0; i < lab.size(); ++i)
    sigma[lab[i]] += (features.row(Eigen::Index(i)) - centroids.row(lab[i])).norm();
  sigma = sigma.cwiseQuotient(sizes);
  double total = 0.0;
  for (int p = 0; p < m; ++p) {
    double worst = 0.0;
    for (int q = 0; q < m; ++q) {
      if (q == p) continue;
      const double sep = (centroids.row(p) - centroids.row(q)).norm();
      if (sep == 0.0) throw Error(ErrorKind::identical_centroids, "two cluster centroids coincide");
      worst = std::max(worst, (sigma[p] + sigma[q]) / sep);
    }
    total += worst;
  }
  return total / m;
}

/// Per-item silhouette from a distance matrix; items in singleton clusters
/// get 0.
inline Eigen::VectorXd silhouette_values(const Eigen::MatrixXd& d, std::span<const int> labels) {
  const auto n = Eigen::Index(labels.size());
  if (d.rows() != n || d.cols() != n) throw Error(ErrorKind::length_mismatch, "distance matrix must be G x G");
  const auto lab = canonical_labels(labels);
  const int m = cluster_count(labels);
  if (m < 2) throw Error(ErrorKind::single_cluster, "silhouette needs at least 2 clusters");
  std::vector<double> sizes(std::size_t(m), 0.0);
  for (int l : lab) sizes[std::size_t(l)] += 1.0;
  Eigen::VectorXd sil(n);
  std::vector<double> sums(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = lab[std::size_t(i)];
    if (sizes[std::size_t(own)] == 1.0) {
      sil[i] = 0.0;
      continue;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sums[std::size_t(lab[std::size_t(j)])] += d(i, j);
    const double a = sums[std::size_t(own)] / (sizes[std::size_t(own)] - 1.0);
    double b = std::numeric_limits<double>::infinity();
    for (int q = 0; q < m; ++q)
      if (q != own) b = std::min(b, sums[std::size_t(q)] / sizes[std::size_t(q)]);
    const double denom = std::max(a, b);
    sil[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return sil;
}

inline double mean_silhouette(const Eigen::MatrixXd& d, std::span<const int> labels) {
  return silhouette_values(d, labels).mean();
}

}  // namespace stihc
