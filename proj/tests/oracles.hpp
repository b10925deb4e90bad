#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the library code it checks.

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "stihc/fem.hpp"
#include "stihc/solver.hpp"

namespace stihc::test {

// ARI from the four pair counts over all C(G,2) pairs
inline double pair_count_ari(const std::vector<int>& a, const std::vector<int>& b) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      if (sa && sb) ++n11;
      else if (sa) ++n10;
      else if (sb) ++n01;
      else ++n00;
    }
  const double denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
  if (denom == 0.0) return 1.0;
  return 2.0 * (n00 * n11 - n01 * n10) / denom;
}

// labels must be 0..m-1 with every cluster nonempty
inline double direct_dbi(const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  const int m = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<Eigen::RowVectorXd> mu(std::size_t(m), Eigen::RowVectorXd::Zero(x.cols()));
  std::vector<double> n(std::size_t(m), 0.0), sigma(std::size_t(m), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    mu[std::size_t(labels[i])] += x.row(Eigen::Index(i));
    n[std::size_t(labels[i])] += 1;
  }
  for (int p = 0; p < m; ++p) mu[std::size_t(p)] /= n[std::size_t(p)];
  for (std::size_t i = 0; i < labels.size(); ++i)
    sigma[std::size_t(labels[i])] += (x.row(Eigen::Index(i)) - mu[std::size_t(labels[i])]).norm() / n[std::size_t(labels[i])];
  double total = 0;
  for (int p = 0; p < m; ++p) {
    double r = -1;
    for (int q = 0; q < m; ++q)
      if (q != p)
        r = std::max(r, (sigma[std::size_t(p)] + sigma[std::size_t(q)]) / (mu[std::size_t(p)] - mu[std::size_t(q)]).norm());
    total += r;
  }
  return total / m;
}

// mean silhouette, singletons counted as 0
inline double direct_silhouette(const Eigen::MatrixXd& d, const std::vector<int>& labels) {
  const int m = *std::max_element(labels.begin(), labels.end()) + 1;
  const auto n = labels.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(std::size_t(m), 0.0), cnt(std::size_t(m), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) {
        sum[std::size_t(labels[j])] += d(Eigen::Index(i), Eigen::Index(j));
        cnt[std::size_t(labels[j])] += 1;
      }
    const auto own = std::size_t(labels[i]);
    if (cnt[own] == 0) continue;
    const double a = sum[own] / cnt[own];
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < std::size_t(m); ++q)
      if (q != own && cnt[q] > 0) b = std::min(b, sum[q] / cnt[q]);
    total += std::max(a, b) == 0 ? 0.0 : (b - a) / std::max(a, b);
  }
  return total / double(n);
}

inline std::vector<int> random_labels(std::size_t n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, k - 1);
  std::vector<int> out(n);
  for (auto& l : out) l = u(rng);
  return out;
}

// labels covering 0..k-1 so every cluster is nonempty
inline std::vector<int> covering_labels(std::size_t n, int k, std::mt19937_64& rng) {
  std::vector<int> out = random_labels(n, k, rng);
  for (int c = 0; c < k; ++c) out[std::size_t(c)] = c;
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

inline Eigen::MatrixXd random_distance(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) d(i, j) = d(j, i) = u(rng);
  return d;
}

// 50 significant digits: the penalized systems on random meshes reach
// condition numbers near 1e12, beyond what long double can check to 1e-8
using Real50 = boost::multiprecision::cpp_bin_float_50;
using MatrixX50 = Eigen::Matrix<Real50, Eigen::Dynamic, Eigen::Dynamic>;

// P = R1 R0^{-1} R1 through dense extended-precision solves
inline MatrixX50 dense_penalty_50(const PenaltyMatrices& p) {
  MatrixX50 r0 = Eigen::MatrixXd(p.mass()).cast<Real50>(), r1 = Eigen::MatrixXd(p.stiffness()).cast<Real50>();
  return r1 * r0.partialPivLu().solve(r1);
}

inline Eigen::MatrixXd dense_penalty(const PenaltyMatrices& p) { return dense_penalty_50(p).cast<double>(); }

// (Phi' Phi + lambda P) c = Phi' y in extended precision
inline Eigen::VectorXd gaussian_closed_form(const RowSparseMatrix& phi, const PenaltyMatrices& pen,
                                            const Eigen::VectorXd& y, double lambda) {
  MatrixX50 f = Eigen::MatrixXd(phi).cast<Real50>();
  MatrixX50 a = f.transpose() * f + Real50(lambda) * dense_penalty_50(pen);
  MatrixX50 b = f.transpose() * y.cast<Real50>();
  return a.partialPivLu().solve(b).cast<double>();
}

// noisy copies of a few random base patterns
inline Eigen::MatrixXd noisy_groups(int groups, int per_group, int k, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd base = Eigen::MatrixXd::NullaryExpr(groups, k, [&] { return z(rng); });
  Eigen::MatrixXd c(groups * per_group, k);
  for (int i = 0; i < c.rows(); ++i)
    c.row(i) = base.row(i % groups) + noise * Eigen::RowVectorXd::NullaryExpr(k, [&] { return z(rng); });
  return c;
}

}  // namespace stihc::test
