#pragma once

// Iterative hierarchical clustering of coefficient rows under the Spearman
// distance, with merge/prune refinement and silhouette-based threshold choice.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stihc/error.hpp"
#include "stihc/metrics.hpp"
#include "stihc/parallel.hpp"

namespace stihc {

/// Average ranks (1-based) of v, ties sharing the mean of their positions.
inline Eigen::VectorXd average_ranks(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const auto n = v.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && v[idx[std::size_t(j + 1)]] == v[idx[std::size_t(i)]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) r[idx[std::size_t(k)]] = avg;
    i = j + 1;
  }
  return r;
}

namespace detail {

// Centered, unit-norm ranks; the zero vector for a constant input.
inline Eigen::VectorXd standardized_ranks(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::VectorXd r = average_ranks(v);
  r.array() -= r.mean();
  const double norm = r.norm();
  if (norm > 0.0) r /= norm;
  else r.setZero();
  return r;
}

inline Eigen::MatrixXd standardized_rank_rows(const Eigen::MatrixXd& c) {
  Eigen::MatrixXd out(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) out.row(i) = standardized_ranks(c.row(i).transpose()).transpose();
  return out;
}

inline double clamp_rho(double r) { return std::clamp(r, -1.0, 1.0); }

}  // namespace detail

/// Spearman correlation; 0 when either vector is constant.
inline double spearman(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::length_mismatch, "vectors have different lengths");
  return detail::clamp_rho(detail::standardized_ranks(a).dot(detail::standardized_ranks(b)));
}

struct DistanceMatrix {
  Eigen::MatrixXd d;              // 1 - rho, zero diagonal
  std::vector<bool> degenerate;  // rows with zero rank variance

  Eigen::Index size() const { return d.rows(); }
  double rho(Eigen::Index i, Eigen::Index j) const { return 1.0 - d(i, j); }
};

namespace detail {

inline DistanceMatrix distance_from_ranks(const Eigen::MatrixXd& ranks) {
  const auto g = ranks.rows();
  DistanceMatrix out;
  out.degenerate.resize(std::size_t(g));
  for (Eigen::Index i = 0; i < g; ++i) out.degenerate[std::size_t(i)] = ranks.row(i).squaredNorm() == 0.0;
  const Eigen::MatrixXd rho = ranks * ranks.transpose();
  out.d.resize(g, g);
  for (Eigen::Index i = 0; i < g; ++i)
    for (Eigen::Index j = 0; j < g; ++j) {
      if (i == j) out.d(i, j) = 0.0;
      else out.d(i, j) = 1.0 - clamp_rho(0.5 * (rho(i, j) + rho(j, i)));
    }
  return out;
}

}  // namespace detail

/// d_ij = 1 - Spearman(c_i, c_j). Constant rows are flagged and get rho = 0
/// against every other row.
inline DistanceMatrix spearman_distance(const Eigen::MatrixXd& c) {
  if (c.rows() < 2 || c.cols() < 2) throw Error(ErrorKind::invalid_argument, "Spearman distance needs G >= 2 and K >= 2");
  if (!c.allFinite()) throw Error(ErrorKind::invalid_argument, "coefficients must be finite");
  return detail::distance_from_ranks(detail::standardized_rank_rows(c));
}

/// Average-linkage agglomeration cut at height 1 - alpha: clusters keep
/// merging while the closest pair is at distance <= 1 - alpha. Ties go to the
/// pair with the lexicographically smallest member indices. Rows flagged in
/// `excluded` stay singletons. Returns labels numbered by first appearance.
inline std::vector<int> threshold_cluster(const Eigen::MatrixXd& d, double alpha,
                                          const std::vector<bool>& excluded = {}) {
  if (!(alpha >= -1.0 && alpha <= 1.0)) throw Error(ErrorKind::invalid_argument, "alpha must lie in [-1, 1]");
  const auto g = std::size_t(d.rows());
  const double cut = 1.0 - alpha + 1e-12;
  // slot i holds the cluster whose smallest member is i
  std::vector<bool> active(g, true);
  std::vector<double> size(g, 1.0);
  std::vector<int> parent(g);
  std::iota(parent.begin(), parent.end(), 0);
  Eigen::MatrixXd link = d;
  for (std::size_t i = 0; i < g; ++i)
    if (i < excluded.size() && excluded[i]) active[i] = false;
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = g, bj = g;
    for (std::size_t i = 0; i < g; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < g; ++j) {
        if (!active[j]) continue;
        if (link(Eigen::Index(i), Eigen::Index(j)) < best) {
          best = link(Eigen::Index(i), Eigen::Index(j));
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == g || !(best <= cut)) break;
    const double si = size[bi], sj = size[bj];
    for (std::size_t k = 0; k < g; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double v = (si * link(Eigen::Index(k), Eigen::Index(bi)) + sj * link(Eigen::Index(k), Eigen::Index(bj))) / (si + sj);
      link(Eigen::Index(k), Eigen::Index(bi)) = link(Eigen::Index(bi), Eigen::Index(k)) = v;
    }
    size[bi] = si + sj;
    active[bj] = false;
    parent[bj] = int(bi);
  }
  std::vector<int> root(g);
  for (std::size_t i = 0; i < g; ++i) {
    int r = int(i);
    while (parent[std::size_t(r)] != r) r = parent[std::size_t(r)];
    root[i] = r;
  }
  return canonical_labels(root);
}

inline std::vector<int> threshold_cluster(const DistanceMatrix& dm, double alpha) {
  return threshold_cluster(dm.d, alpha, dm.degenerate);
}

/// Gene-to-cluster labels (0..m-1, by first appearance) with cluster centers
/// equal to the mean of member rows.
struct Partition {
  std::vector<int> labels;
  Eigen::MatrixXd centers;
  std::vector<int> sizes;

  int cluster_count() const { return int(sizes.size()); }

  static Partition from_labels(const Eigen::MatrixXd& c, std::span<const int> labels) {
    if (std::size_t(c.rows()) != labels.size()) throw Error(ErrorKind::length_mismatch, "labels must match coefficient rows");
    Partition p;
    p.labels = canonical_labels(labels);
    const int m = p.labels.empty() ? 0 : *std::max_element(p.labels.begin(), p.labels.end()) + 1;
    p.sizes.assign(std::size_t(m), 0);
    p.centers = Eigen::MatrixXd::Zero(m, c.cols());
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      p.centers.row(p.labels[i]) += c.row(Eigen::Index(i));
      ++p.sizes[std::size_t(p.labels[i])];
    }
    for (int k = 0; k < m; ++k) p.centers.row(k) /= double(p.sizes[std::size_t(k)]);
    return p;
  }
};

namespace detail {

// Standardized rank profile of each cluster: the mean of its members'
// standardized rank rows, re-ranked. Depends on the coefficients only through
// their ranks, so monotone transforms of a gene's row leave it unchanged.
inline Eigen::MatrixXd rank_centers(const Partition& partition, const Eigen::MatrixXd& ranks) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(partition.cluster_count(), ranks.cols());
  for (std::size_t i = 0; i < partition.labels.size(); ++i) sums.row(partition.labels[i]) += ranks.row(Eigen::Index(i));
  return standardized_rank_rows(sums);
}

}  // namespace detail

/// Treats each cluster center as a gene and threshold-clusters the centers;
/// clusters whose centers co-cluster are unioned. Centers are compared
/// through the mean standardized rank profile of their members.
inline Partition merge_step(const Eigen::MatrixXd& c, const Partition& partition, double alpha,
                            const Eigen::MatrixXd* ranks = nullptr) {
  const int m = partition.cluster_count();
  if (m < 2) return partition;
  const Eigen::MatrixXd own = ranks ? Eigen::MatrixXd() : detail::standardized_rank_rows(c);
  const DistanceMatrix dm = detail::distance_from_ranks(detail::rank_centers(partition, ranks ? *ranks : own));
  const std::vector<int> groups = threshold_cluster(dm, alpha);
  if (*std::max_element(groups.begin(), groups.end()) + 1 == m) return partition;
  std::vector<int> labels(partition.labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = groups[std::size_t(partition.labels[i])];
  return Partition::from_labels(c, labels);
}

/// Expels members whose Spearman correlation with their cluster's center is
/// below alpha into singleton clusters.
inline Partition prune_step(const Eigen::MatrixXd& c, const Partition& partition, double alpha,
                            const Eigen::MatrixXd* ranks = nullptr) {
  const Eigen::MatrixXd own = ranks ? Eigen::MatrixXd() : detail::standardized_rank_rows(c);
  const Eigen::MatrixXd& r = ranks ? *ranks : own;
  const Eigen::MatrixXd centers = detail::rank_centers(partition, r);
  const int m = partition.cluster_count();
  std::vector<int> labels = partition.labels;
  int next = m;
  bool changed = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = partition.labels[i];
    if (partition.sizes[std::size_t(k)] < 2) continue;
    const double rho = detail::clamp_rho(r.row(Eigen::Index(i)).dot(centers.row(k)));
    if (rho < alpha) {
      labels[i] = next++;
      changed = true;
    }
  }
  if (!changed) return partition;
  return Partition::from_labels(c, labels);
}

struct ClusterConfig {
  int grid_size = 20;  // U
  int max_inner_iterations = 100;
  unsigned threads = 1;
};

struct AlphaRun {
  Partition partition;
  int rounds = 0;
  bool converged = false;  // fixed point reached (false on cycle or cap)
  bool cycled = false;
};

namespace detail {

inline AlphaRun ihc_at_alpha(const Eigen::MatrixXd& c, const DistanceMatrix& dm, const Eigen::MatrixXd& ranks,
                             double alpha, const ClusterConfig& config) {
  AlphaRun run;
  Partition p = Partition::from_labels(c, threshold_cluster(dm, alpha));
  std::set<std::vector<int>> history{p.labels};
  while (run.rounds < config.max_inner_iterations) {
    ++run.rounds;
    Partition q = prune_step(c, merge_step(c, p, alpha, &ranks), alpha, &ranks);
    if (q.labels == p.labels) {
      run.converged = true;
      break;
    }
    const bool seen = !history.insert(q.labels).second;
    p = std::move(q);
    if (seen) {
      run.cycled = true;
      break;
    }
  }
  // final merges until every pair of centers correlates below alpha
  while (true) {
    Partition q = merge_step(c, p, alpha, &ranks);
    if (q.cluster_count() == p.cluster_count()) break;
    p = std::move(q);
  }
  run.partition = std::move(p);
  return run;
}

}  // namespace detail

inline AlphaRun ihc_at_alpha(const Eigen::MatrixXd& c, double alpha, const ClusterConfig& config = {}) {
  if (!(alpha >= -1.0 && alpha <= 1.0)) throw Error(ErrorKind::invalid_argument, "alpha must lie in [-1, 1]");
  const Eigen::MatrixXd ranks = detail::standardized_rank_rows(c);
  return detail::ihc_at_alpha(c, detail::distance_from_ranks(ranks), ranks, alpha, config);
}

struct AlphaDiagnostic {
  double alpha = 0.0;
  int n_clusters = 0;
  double mean_silhouette = 0.0;  // NaN for a single cluster
  bool converged = false;
};

struct ClusterResult {
  Partition partition;
  double alpha_opt = 0.0;
  std::size_t opt_index = 0;
  std::vector<AlphaDiagnostic> diagnostics;
  std::vector<std::size_t> degenerate_rows;
  bool degenerate_grid = false;
  std::vector<std::string> warnings;
};

/// Runs the merge/prune procedure over U equally spaced thresholds between
/// the smallest and largest pairwise correlation and keeps the partition with
/// the highest mean silhouette (lowest alpha on ties). Partitions with one
/// cluster or only singletons are not eligible.
inline ClusterResult stihc_cluster(const Eigen::MatrixXd& c, const ClusterConfig& config = {}) {
  if (c.rows() < 3) throw Error(ErrorKind::invalid_argument, "clustering needs at least 3 genes");
  if (config.grid_size < 2) throw Error(ErrorKind::invalid_argument, "alpha grid needs at least 2 points");
  if (config.max_inner_iterations < 1) throw Error(ErrorKind::invalid_argument, "max_inner_iterations must be positive");
  const Eigen::MatrixXd ranks = [&] {
    if (c.cols() < 2) throw Error(ErrorKind::invalid_argument, "Spearman distance needs K >= 2");
    if (!c.allFinite()) throw Error(ErrorKind::invalid_argument, "coefficients must be finite");
    return detail::standardized_rank_rows(c);
  }();
  const DistanceMatrix dm = detail::distance_from_ranks(ranks);
  const auto g = dm.size();

  ClusterResult result;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Eigen::Index i = 0; i < g; ++i) {
    if (dm.degenerate[std::size_t(i)]) {
      result.degenerate_rows.push_back(std::size_t(i));
      continue;
    }
    for (Eigen::Index j = i + 1; j < g; ++j) {
      if (dm.degenerate[std::size_t(j)]) continue;
      lo = std::min(lo, dm.rho(i, j));
      hi = std::max(hi, dm.rho(i, j));
    }
  }
  if (!result.degenerate_rows.empty())
    result.warnings.push_back(std::to_string(result.degenerate_rows.size()) +
                              " constant coefficient row(s) kept as singletons");
  if (!std::isfinite(lo)) lo = hi = 0.0;

  std::vector<double> alphas;
  if (lo == hi) {
    result.degenerate_grid = true;
    result.warnings.push_back("all pairwise correlations are identical; alpha grid has one point");
    alphas = {lo};
  } else {
    const int u = config.grid_size;
    for (int k = 0; k < u; ++k) alphas.push_back(k == u - 1 ? hi : lo + (hi - lo) * double(k) / double(u - 1));
  }

  std::vector<AlphaRun> runs(alphas.size());
  parallel_for(alphas.size(), config.threads,
               [&](std::size_t k) { runs[k] = detail::ihc_at_alpha(c, dm, ranks, alphas[k], config); });

  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> score(alphas.size(), neg_inf);
  result.diagnostics.resize(alphas.size());
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    const Partition& p = runs[k].partition;
    AlphaDiagnostic& diag = result.diagnostics[k];
    diag.alpha = alphas[k];
    diag.n_clusters = p.cluster_count();
    diag.converged = runs[k].converged;
    diag.mean_silhouette = diag.n_clusters < 2 ? std::numeric_limits<double>::quiet_NaN()
                                               : mean_silhouette(dm.d, p.labels);
    if (diag.n_clusters > 1 && diag.n_clusters < g) score[k] = diag.mean_silhouette;
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < alphas.size(); ++k)
    if (score[k] > score[best]) best = k;
  if (score[best] == neg_inf) {
    // every grid point is degenerate: prefer all singletons over one cluster
    best = 0;
    for (std::size_t k = 0; k < alphas.size(); ++k)
      if (result.diagnostics[k].n_clusters == g) {
        best = k;
        break;
      }
    result.warnings.push_back("every alpha gave one cluster or only singletons");
  }
  for (std::size_t k = 0; k < alphas.size(); ++k)
    if (!runs[k].converged)
      result.warnings.push_back("alpha " + std::to_string(alphas[k]) +
                                (runs[k].cycled ? ": merge/prune cycle detected" : ": iteration limit reached"));
  result.opt_index = best;
  result.alpha_opt = alphas[best];
  result.partition = std::move(runs[best].partition);
  return result;
}

}  // namespace stihc
