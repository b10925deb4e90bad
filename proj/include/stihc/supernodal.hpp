#pragma once

// Supernodal LDL' factorization without pivoting for sparse symmetric
// quasi-definite matrices, with selected inversion: the entries of A^{-1} on
// the sparsity pattern of the factor (Takahashi recurrences in block form).

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stihc/error.hpp"

namespace stihc {

class SupernodalLdlt {
 public:
  using SparseMatrix = Eigen::SparseMatrix<double>;

  SupernodalLdlt() = default;

  /// Pivots smaller than tol * max|pivot| mark the matrix as numerically
  /// singular. Zero disables the check; exact zero pivots always throw.
  void set_pivot_tolerance(double tol) { pivot_tolerance_ = tol; }

  /// Symbolic analysis of the pattern of `a`, a compressed symmetric matrix
  /// with both triangles stored.
  void analyze(const SparseMatrix& a) {
    if (a.rows() != a.cols()) throw Error(ErrorKind::invalid_argument, "matrix must be square");
    if (!a.isCompressed()) throw Error(ErrorKind::invalid_argument, "matrix must be compressed");
    n_ = int(a.rows());
    order(a);
    symbolic(a);
    analyzed_ = true;
    have_inverse_ = false;
  }

  /// Numeric factorization of a matrix with the analyzed pattern.
  void factorize(const SparseMatrix& a) {
    if (!analyzed_) analyze(a);
    if (a.nonZeros() != Eigen::Index(slots_.size()))
      throw Error(ErrorKind::invalid_argument, "factorize() called with a different sparsity pattern");
    for (auto& p : panels_) p.setZero();
    const double* values = a.valuePtr();
    for (std::size_t e = 0; e < slots_.size(); ++e) {
      const Slot& s = slots_[e];
      if (s.sn >= 0) panels_[s.sn](s.row, s.col) += values[e];
    }
    have_inverse_ = false;
    d_.resize(n_);
    const int sn_count = int(first_.size()) - 1;
    for (int s = 0; s < sn_count; ++s) {
      Eigen::MatrixXd& f = panels_[s];
      const int m = int(f.rows()), w = int(f.cols()), r = m - w;
      // LDL' of the diagonal block
      for (int k = 0; k < w; ++k) {
        const double dk = f(k, k);
        if (!std::isfinite(dk) || dk == 0.0)
          throw Error(ErrorKind::singular_system, "zero or non-finite pivot in LDL' factorization");
        d_[first_[s] + k] = dk;
        for (int c = k + 1; c < w; ++c) {
          const double lck = f(c, k) / dk;
          f.col(c).segment(c, w - c).noalias() -= f.col(k).segment(c, w - c) * lck;
        }
        f.col(k).segment(k + 1, w - k - 1) /= dk;
      }
      if (r == 0) continue;
      // L_R = A_R L_J^{-T} D_J^{-1}
      auto lr = f.bottomRows(r);
      f.topRows(w).triangularView<Eigen::UnitLower>().transpose().solveInPlace<Eigen::OnTheRight>(lr);
      scaled_.noalias() = lr;
      lr = lr * d_.segment(first_[s], w).cwiseInverse().asDiagonal();
      update_.resize(r, r);
      update_.triangularView<Eigen::Lower>() = lr * scaled_.transpose();
      // scatter into ancestor panels, one target supernode at a time
      const auto& rows = rows_[s];
      for (int b = 0; b < r;) {
        const int t = sn_of_[rows[w + b]];
        const auto& trows = rows_[t];
        for (int q = 0; q < int(trows.size()); ++q) map_[trows[q]] = q;
        Eigen::MatrixXd& target = panels_[t];
        int e = b;
        for (; e < r && rows[w + e] < first_[t + 1]; ++e) {
          const int col = rows[w + e] - first_[t];
          for (int i = e; i < r; ++i) target(map_[rows[w + i]], col) -= update_(i, e);
        }
        b = e;
      }
    }
    const double scale = d_.cwiseAbs().maxCoeff();
    if (pivot_tolerance_ > 0.0 && d_.cwiseAbs().minCoeff() <= pivot_tolerance_ * scale)
      throw Error(ErrorKind::singular_system, "matrix is numerically singular");
  }

  int size() const { return n_; }

  /// Pivots of the factorization, in elimination order.
  const Eigen::VectorXd& pivots() const { return d_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd x(n_);
    for (int i = 0; i < n_; ++i) x[perm_[i]] = b[i];
    const int sn_count = int(first_.size()) - 1;
    for (int s = 0; s < sn_count; ++s) {
      const Eigen::MatrixXd& f = panels_[s];
      const auto& rows = rows_[s];
      for (int k = 0; k < int(f.cols()); ++k) {
        const double xk = x[first_[s] + k];
        for (int i = k + 1; i < int(f.rows()); ++i) x[rows[i]] -= f(i, k) * xk;
      }
    }
    x = x.cwiseQuotient(d_);
    for (int s = sn_count - 1; s >= 0; --s) {
      const Eigen::MatrixXd& f = panels_[s];
      const auto& rows = rows_[s];
      for (int k = int(f.cols()) - 1; k >= 0; --k) {
        double acc = 0.0;
        for (int i = k + 1; i < int(f.rows()); ++i) acc += f(i, k) * x[rows[i]];
        x[first_[s] + k] -= acc;
      }
    }
    Eigen::VectorXd out(n_);
    for (int i = 0; i < n_; ++i) out[i] = x[perm_[i]];
    return out;
  }

  /// Computes the entries of A^{-1} on the factor pattern.
  void compute_selected_inverse() {
    const int sn_count = int(first_.size()) - 1;
    zpanels_.resize(std::size_t(sn_count));
    Eigen::MatrixXd zrr, linv, m;
    for (int s = sn_count - 1; s >= 0; --s) {
      const Eigen::MatrixXd& f = panels_[s];
      const int w = int(f.cols()), r = int(f.rows()) - w;
      const auto& rows = rows_[s];
      zrr.resize(r, r);
      for (int b = 0; b < r;) {
        const int t = sn_of_[rows[w + b]];
        const auto& trows = rows_[t];
        for (int q = 0; q < int(trows.size()); ++q) map_[trows[q]] = q;
        const Eigen::MatrixXd& zt = zpanels_[t];
        int e = b;
        for (; e < r && rows[w + e] < first_[t + 1]; ++e) {
          const int col = rows[w + e] - first_[t];
          for (int i = e; i < r; ++i) zrr(i, e) = zrr(e, i) = zt(map_[rows[w + i]], col);
        }
        b = e;
      }
      const auto lj = f.topRows(w).triangularView<Eigen::UnitLower>();
      const auto lr = f.bottomRows(r);
      linv = Eigen::MatrixXd::Identity(w, w);
      lj.solveInPlace(linv);
      Eigen::MatrixXd& z = zpanels_[s];
      z.resize(f.rows(), w);
      m.noalias() = linv.transpose() * d_.segment(first_[s], w).cwiseInverse().asDiagonal();
      if (r > 0) {
        scaled_.noalias() = -(zrr.selfadjointView<Eigen::Lower>() * lr);
        z.bottomRows(r).noalias() = scaled_ * linv;
        m.noalias() -= z.bottomRows(r).transpose() * lr;
      }
      update_.noalias() = m * linv;
      z.topRows(w) = 0.5 * (update_ + update_.transpose());
    }
    have_inverse_ = true;
  }

  /// (A^{-1})_{ij}, original ordering; (i, j) must lie in the pattern of A.
  double inverse(int i, int j) const {
    if (!have_inverse_) throw Error(ErrorKind::invalid_argument, "selected inverse not computed");
    const int pi = perm_[i], pj = perm_[j];
    const int c = std::min(pi, pj), r = std::max(pi, pj);
    const int s = sn_of_[c];
    const auto& rows = rows_[s];
    auto it = std::lower_bound(rows.begin(), rows.end(), r);
    if (it == rows.end() || *it != r)
      throw Error(ErrorKind::invalid_argument, "selected inverse queried outside the factor pattern");
    return zpanels_[s](int(it - rows.begin()), c - first_[s]);
  }

  std::size_t factor_nonzeros() const {
    std::size_t nnz = 0;
    for (const auto& p : panels_) nnz += std::size_t(p.size());
    return nnz;
  }

 private:
  struct Slot {
    int sn = -1;
    int row = 0;
    int col = 0;
  };

  // Fill-reducing ordering: AMD followed by an elimination-tree postorder.
  void order(const SparseMatrix& a) {
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    SparseMatrix sym = a;
    Eigen::AMDOrdering<int> amd;
    amd(sym, pinv);
    std::vector<int> amd_new(n_);
    for (int i = 0; i < n_; ++i) amd_new[pinv.indices()[i]] = i;

    auto lower = lower_lists(a, amd_new);
    std::vector<int> parent = etree(lower);
    // postorder
    std::vector<std::vector<int>> children(n_);
    std::vector<int> roots;
    for (int j = 0; j < n_; ++j) (parent[j] < 0 ? roots : children[parent[j]]).push_back(j);
    std::vector<int> post;
    post.reserve(n_);
    std::vector<std::pair<int, std::size_t>> stack;
    for (int root : roots) {
      stack.emplace_back(root, 0);
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < children[node].size()) {
          int child = children[node][next++];
          stack.emplace_back(child, 0);
        } else {
          post.push_back(node);
          stack.pop_back();
        }
      }
    }
    std::vector<int> rank(n_);
    for (int i = 0; i < n_; ++i) rank[post[i]] = i;
    perm_.resize(n_);
    for (int i = 0; i < n_; ++i) perm_[i] = rank[amd_new[i]];
  }

  // For each column j, the rows i > j of the permuted lower triangle.
  std::vector<std::vector<int>> lower_lists(const SparseMatrix& a, const std::vector<int>& p) const {
    std::vector<std::vector<int>> cols(n_);
    for (int j = 0; j < n_; ++j)
      for (SparseMatrix::InnerIterator it(a, j); it; ++it) {
        int r = p[it.row()], c = p[j];
        if (r == c) continue;
        if (r < c) std::swap(r, c);
        cols[c].push_back(r);
      }
    for (auto& col : cols) {
      std::sort(col.begin(), col.end());
      col.erase(std::unique(col.begin(), col.end()), col.end());
    }
    return cols;
  }

  std::vector<int> etree(const std::vector<std::vector<int>>& lower) const {
    // rows of the upper triangle: for column k, the i < k with A(i,k) != 0
    std::vector<std::vector<int>> upper(n_);
    for (int j = 0; j < n_; ++j)
      for (int i : lower[j]) upper[i].push_back(j);
    std::vector<int> parent(n_, -1), ancestor(n_, -1);
    for (int k = 0; k < n_; ++k)
      for (int i : upper[k]) {
        while (i != -1 && i < k) {
          const int next = ancestor[i];
          ancestor[i] = k;
          if (next == -1) {
            parent[i] = k;
            break;
          }
          i = next;
        }
      }
    return parent;
  }

  void symbolic(const SparseMatrix& a) {
    auto lower = lower_lists(a, perm_);
    std::vector<int> parent = etree(lower);
    std::vector<int> child_count(n_, 0);
    for (int j = 0; j < n_; ++j)
      if (parent[j] >= 0) ++child_count[parent[j]];

    // column structures (rows > j), children merged into parents
    std::vector<std::vector<int>> structs(n_);
    std::vector<int> merged;
    for (int j = 0; j < n_; ++j) {
      auto& sj = structs[j];
      merged.clear();
      std::set_union(sj.begin(), sj.end(), lower[j].begin(), lower[j].end(), std::back_inserter(merged));
      sj.swap(merged);
      if (parent[j] >= 0) {
        auto& sp = structs[parent[j]];
        merged.clear();
        auto from = std::upper_bound(sj.begin(), sj.end(), parent[j]);
        std::set_union(sp.begin(), sp.end(), from, sj.end(), std::back_inserter(merged));
        sp.swap(merged);
      }
    }

    // fundamental supernodes, then relaxed amalgamation of a supernode into
    // its parent when the parent starts right after it and the merged panel
    // stays mostly nonzero
    struct Group {
      int first, last;
      std::vector<int> rows;
      double nnz;
    };
    std::vector<Group> groups;
    for (int j = 0; j < n_; ++j) {
      const bool extend = j > 0 && parent[j - 1] == j && child_count[j] == 1 &&
                          structs[j - 1].size() == structs[j].size() + 1;
      if (extend) {
        groups.back().last = j;
        groups.back().nnz += double(structs[j].size() + 1);
        continue;
      }
      groups.push_back({j, j, {}, double(structs[j].size() + 1)});
    }
    std::vector<Group> supers;
    for (auto& g : groups) {
      // rows of a fundamental supernode start with its own columns
      for (int j = g.first; j <= g.last; ++j) g.rows.push_back(j);
      g.rows.insert(g.rows.end(), structs[g.last].begin(), structs[g.last].end());
      if (!supers.empty() && parent[supers.back().last] == g.first) {
        const Group& c = supers.back();
        const double w = double(g.last - c.first + 1);
        const double m = double(c.last - c.first + 1) + double(g.rows.size());
        const double total = w * m - w * (w - 1.0) / 2.0;
        const double zeros = (total - c.nnz - g.nnz) / total;
        const bool relax = w <= 4 || (w <= 16 && zeros < 0.8) || (w <= 48 && zeros < 0.1) || zeros < 0.05;
        if (relax) {
          Group& t = supers.back();
          t.rows.resize(std::size_t(t.last - t.first + 1));
          t.rows.insert(t.rows.end(), g.rows.begin(), g.rows.end());
          t.last = g.last;
          t.nnz += g.nnz;
          continue;
        }
      }
      supers.push_back(std::move(g));
    }

    first_.clear();
    sn_of_.assign(n_, 0);
    map_.assign(n_, 0);
    const int sn_count = int(supers.size());
    rows_.assign(std::size_t(sn_count), {});
    panels_.assign(std::size_t(sn_count), {});
    for (int s = 0; s < sn_count; ++s) {
      first_.push_back(supers[s].first);
      for (int j = supers[s].first; j <= supers[s].last; ++j) sn_of_[j] = s;
      rows_[s] = std::move(supers[s].rows);
      panels_[s].resize(Eigen::Index(rows_[s].size()), supers[s].last - supers[s].first + 1);
    }
    first_.push_back(n_);

    slots_.assign(std::size_t(a.nonZeros()), {});
    for (int j = 0, e = 0; j < n_; ++j)
      for (SparseMatrix::InnerIterator it(a, j); it; ++it, ++e) {
        const int r = perm_[it.row()], c = perm_[j];
        if (r < c) continue;  // each symmetric pair is taken from its lower entry
        const int s = sn_of_[c];
        const auto& rows = rows_[s];
        const int pos = int(std::lower_bound(rows.begin(), rows.end(), r) - rows.begin());
        slots_[std::size_t(e)] = {s, pos, c - first_[s]};
      }
  }

  int n_ = 0;
  bool analyzed_ = false;
  bool have_inverse_ = false;
  double pivot_tolerance_ = 1e-14;
  std::vector<int> perm_;   // original index -> elimination position
  std::vector<int> first_;  // supernode column ranges
  std::vector<int> sn_of_;
  std::vector<std::vector<int>> rows_;
  std::vector<Eigen::MatrixXd> panels_;
  std::vector<Eigen::MatrixXd> zpanels_;
  std::vector<Slot> slots_;
  Eigen::VectorXd d_;
  std::vector<int> map_;  // scratch: row -> position in a target panel
  Eigen::MatrixXd update_, scaled_;
};

}  // namespace stihc
