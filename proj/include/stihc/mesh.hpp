#pragma once

// Delaunay triangulation of spot locations and evaluation of the
// piecewise-linear nodal basis.

#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stihc/error.hpp"

namespace stihc {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

namespace geometry {

// Twice the signed area of (a, b, c); positive when counterclockwise.
inline double orient(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Sign of orient() with collinearity declared when the sine of the angle at
// `a` is below 1e-12.
inline int orient_sign(const Point2& a, const Point2& b, const Point2& c) {
  const double det = orient(a, b, c);
  const double scale = std::hypot(b.x - a.x, b.y - a.y) * std::hypot(c.x - a.x, c.y - a.y);
  if (std::abs(det) <= 1e-12 * scale) return 0;
  return det > 0 ? 1 : -1;
}

// > 0 when d lies strictly inside the circumcircle of counterclockwise (a, b, c),
// 0 when cocircular within a relative tolerance.
inline int incircle_sign(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const long double adx = a.x - d.x, ady = a.y - d.y;
  const long double bdx = b.x - d.x, bdy = b.y - d.y;
  const long double cdx = c.x - d.x, cdy = c.y - d.y;
  const long double alift = adx * adx + ady * ady;
  const long double blift = bdx * bdx + bdy * bdy;
  const long double clift = cdx * cdx + cdy * cdy;
  const long double t1 = alift * (bdx * cdy - cdx * bdy);
  const long double t2 = blift * (cdx * ady - adx * cdy);
  const long double t3 = clift * (adx * bdy - bdx * ady);
  const long double det = t1 + t2 + t3;
  const long double permanent = alift * (std::abs(bdx * cdy) + std::abs(cdx * bdy)) +
                                blift * (std::abs(cdx * ady) + std::abs(adx * cdy)) +
                                clift * (std::abs(adx * bdy) + std::abs(bdx * ady));
  if (std::abs(det) <= 1e-10L * permanent) return 0;
  return det > 0 ? 1 : -1;
}

}  // namespace geometry

/// Spot identifiers and their planar coordinates.
///
/// Construction validates the invariants: at least three spots, unique ids and
/// no two spots at the same location.
class SpotGrid {
 public:
  SpotGrid() = default;

  SpotGrid(std::vector<std::string> spot_ids, std::vector<Point2> coords)
      : spot_ids_(std::move(spot_ids)), coords_(std::move(coords)) {
    if (spot_ids_.size() != coords_.size())
      throw Error(ErrorKind::length_mismatch, "spot id and coordinate counts differ");
    if (coords_.size() < 3)
      throw Error(ErrorKind::too_few_spots, "a spot grid needs at least 3 spots");
    std::unordered_set<std::string> seen;
    for (const auto& id : spot_ids_)
      if (!seen.insert(id).second) throw Error(ErrorKind::invalid_argument, "duplicate spot id '" + id + "'");
    std::vector<std::size_t> order(coords_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::pair(coords_[a].x, coords_[a].y) < std::pair(coords_[b].x, coords_[b].y);
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (coords_[order[i]] == coords_[order[i - 1]])
        throw Error(ErrorKind::duplicate_point,
                    "spots '" + spot_ids_[order[i - 1]] + "' and '" + spot_ids_[order[i]] + "' share coordinates");
    }
    for (const auto& p : coords_)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw Error(ErrorKind::invalid_argument, "non-finite spot coordinate");
  }

  std::size_t size() const noexcept { return coords_.size(); }
  const std::vector<std::string>& spot_ids() const noexcept { return spot_ids_; }
  const std::vector<Point2>& coords() const noexcept { return coords_; }

  SpotGrid subset(std::span<const std::size_t> keep) const {
    std::vector<std::string> ids;
    std::vector<Point2> pts;
    for (std::size_t j : keep) {
      ids.push_back(spot_ids_.at(j));
      pts.push_back(coords_.at(j));
    }
    return SpotGrid(std::move(ids), std::move(pts));
  }

 private:
  std::vector<std::string> spot_ids_;
  std::vector<Point2> coords_;
};

using Triangle = std::array<int, 3>;

/// Conforming triangulation of the convex hull of its nodes.
///
/// Triangles are counterclockwise, rotated so the smallest node index comes
/// first, and sorted; two meshes built from the same input compare equal.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Point2> nodes, std::vector<Triangle> triangles)
      : nodes_(std::move(nodes)), triangles_(std::move(triangles)) {
    build_neighbors();
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t triangle_count() const noexcept { return triangles_.size(); }
  const std::vector<Point2>& nodes() const noexcept { return nodes_; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
  // neighbors()[t][k] is the triangle across the edge opposite vertex k, or -1.
  const std::vector<std::array<int, 3>>& neighbors() const noexcept { return neighbors_; }

  double triangle_area(std::size_t t) const {
    const auto& tri = triangles_[t];
    return 0.5 * geometry::orient(nodes_[tri[0]], nodes_[tri[1]], nodes_[tri[2]]);
  }

  double total_area() const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles_.size(); ++t) a += triangle_area(t);
    return a;
  }

  // Unique undirected edges (a < b), sorted.
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& tri : triangles_)
      for (int k = 0; k < 3; ++k) {
        int a = tri[k], b = tri[(k + 1) % 3];
        out.emplace_back(std::min(a, b), std::max(a, b));
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  double diameter() const {
    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    double xmax = -xmin, ymax = -xmin;
    for (const auto& p : nodes_) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    return std::hypot(xmax - xmin, ymax - ymin);
  }

  friend bool operator==(const Mesh& a, const Mesh& b) {
    return a.nodes_ == b.nodes_ && a.triangles_ == b.triangles_;
  }

 private:
  void build_neighbors() {
    neighbors_.assign(triangles_.size(), {-1, -1, -1});
    std::unordered_map<std::uint64_t, int> directed;
    auto key = [](int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); };
    for (std::size_t t = 0; t < triangles_.size(); ++t)
      for (int k = 0; k < 3; ++k) directed[key(triangles_[t][(k + 1) % 3], triangles_[t][(k + 2) % 3])] = int(t);
    for (std::size_t t = 0; t < triangles_.size(); ++t)
      for (int k = 0; k < 3; ++k) {
        auto it = directed.find(key(triangles_[t][(k + 2) % 3], triangles_[t][(k + 1) % 3]));
        if (it != directed.end()) neighbors_[t][k] = it->second;
      }
  }

  std::vector<Point2> nodes_;
  std::vector<Triangle> triangles_;
  std::vector<std::array<int, 3>> neighbors_;
};

namespace detail {

// Mutable triangulation with directed-edge lookup, used during construction.
class TriangulationBuilder {
 public:
  explicit TriangulationBuilder(const std::vector<Point2>& pts) : pts_(pts) {}

  void add(int a, int b, int c) {
    const int t = int(tris_.size());
    tris_.push_back({a, b, c});
    index(t);
  }

  // Lexicographic sweep producing some triangulation of the convex hull.
  void sweep() {
    const int n = int(pts_.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::pair(pts_[a].x, pts_[a].y) < std::pair(pts_[b].x, pts_[b].y);
    });

    int k = 2;
    while (k < n && geometry::orient_sign(pts_[order[0]], pts_[order[1]], pts_[order[k]]) == 0) ++k;
    if (k == n) throw Error(ErrorKind::collinear_input, "all spot coordinates lie on a line");

    // next_/prev_ form the counterclockwise hull ring.
    next_.assign(n, -1);
    prev_.assign(n, -1);
    const int apex = order[k];
    const bool left = geometry::orient_sign(pts_[order[0]], pts_[order[1]], pts_[apex]) > 0;
    for (int i = 0; i + 1 < k; ++i) {
      if (left)
        add(order[i], order[i + 1], apex);
      else
        add(order[i + 1], order[i], apex);
    }
    std::vector<int> ring;
    if (left) {
      for (int i = 0; i < k; ++i) ring.push_back(order[i]);
      ring.push_back(apex);
    } else {
      ring.push_back(order[0]);
      ring.push_back(apex);
      for (int i = k - 1; i >= 1; --i) ring.push_back(order[i]);
    }
    for (std::size_t i = 0; i < ring.size(); ++i) {
      next_[ring[i]] = ring[(i + 1) % ring.size()];
      prev_[ring[(i + 1) % ring.size()]] = ring[i];
    }
    int last = apex;

    for (int idx = k + 1; idx < n; ++idx) {
      const int q = order[idx];
      // Find one visible edge, starting the walk at the previously inserted
      // point which is always on the hull.
      int start = -1;
      int u = last;
      do {
        if (geometry::orient_sign(pts_[u], pts_[next_[u]], pts_[q]) < 0) {
          start = u;
          break;
        }
        u = next_[u];
      } while (u != last);
      if (start < 0) throw Error(ErrorKind::invalid_argument, "point insertion failed (inconsistent geometry)");
      // Extend the visible chain in both directions.
      int first = start;
      while (geometry::orient_sign(pts_[prev_[first]], pts_[first], pts_[q]) < 0) first = prev_[first];
      int end = next_[start];
      while (geometry::orient_sign(pts_[end], pts_[next_[end]], pts_[q]) < 0) end = next_[end];
      for (int v = first; v != end; v = next_[v]) add(next_[v], v, q);
      for (int v = next_[first]; v != end;) {
        int nv = next_[v];
        next_[v] = prev_[v] = -1;
        v = nv;
      }
      next_[first] = q;
      prev_[q] = first;
      next_[q] = end;
      prev_[end] = q;
      last = q;
    }
  }

  // Lawson flips to the Delaunay triangulation, then canonical resolution of
  // cocircular quadrilaterals toward the diagonal holding the lowest index.
  void make_delaunay() {
    std::vector<std::pair<int, int>> stack;
    for (const auto& [e, t] : directed_) {
      (void)t;
      int a = int(e >> 32), b = int(e & 0xffffffffu);
      if (a < b && directed_.count(key(b, a))) stack.emplace_back(a, b);
    }
    std::sort(stack.begin(), stack.end());
    while (!stack.empty()) {
      auto [a, b] = stack.back();
      stack.pop_back();
      auto quad = quad_of(a, b);
      if (!quad) continue;
      auto [c, d] = *quad;
      if (geometry::incircle_sign(pts_[a], pts_[b], pts_[c], pts_[d]) > 0) {
        flip(a, b);
        stack.emplace_back(a, c);
        stack.emplace_back(c, b);
        stack.emplace_back(b, d);
        stack.emplace_back(d, a);
      }
    }
    // Each tie flip replaces an edge by one with a strictly smaller minimum
    // endpoint, so the passes terminate.
    bool changed = true;
    while (changed) {
      changed = false;
      std::vector<std::pair<int, int>> interior;
      for (const auto& [e, t] : directed_) {
        (void)t;
        int a = int(e >> 32), b = int(e & 0xffffffffu);
        if (a < b && directed_.count(key(b, a))) interior.emplace_back(a, b);
      }
      std::sort(interior.begin(), interior.end());
      for (auto [a, b] : interior) {
        auto quad = quad_of(a, b);
        if (!quad) continue;
        auto [c, d] = *quad;
        if (std::min(a, b) < std::min(c, d)) continue;
        if (geometry::incircle_sign(pts_[a], pts_[b], pts_[c], pts_[d]) != 0) continue;
        if (geometry::orient_sign(pts_[a], pts_[d], pts_[c]) <= 0 ||
            geometry::orient_sign(pts_[d], pts_[b], pts_[c]) <= 0)
          continue;
        flip(a, b);
        changed = true;
      }
    }
  }

  std::vector<Triangle> canonical_triangles() const {
    std::vector<Triangle> out;
    out.reserve(tris_.size());
    for (const auto& t : tris_) {
      if (t[0] < 0) continue;
      int r = int(std::min_element(t.begin(), t.end()) - t.begin());
      out.push_back({t[r], t[(r + 1) % 3], t[(r + 2) % 3]});
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static std::uint64_t key(int a, int b) { return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b); }

  void index(int t) {
    for (int k = 0; k < 3; ++k) directed_[key(tris_[t][k], tris_[t][(k + 1) % 3])] = t;
  }
  void unindex(int t) {
    for (int k = 0; k < 3; ++k) directed_.erase(key(tris_[t][k], tris_[t][(k + 1) % 3]));
  }

  // For directed edge a->b in triangle (a,b,c) and b->a in (b,a,d), returns (c, d).
  std::optional<std::pair<int, int>> quad_of(int a, int b) const {
    auto t1 = directed_.find(key(a, b));
    auto t2 = directed_.find(key(b, a));
    if (t1 == directed_.end() || t2 == directed_.end()) return std::nullopt;
    return std::pair(apex(t1->second, a, b), apex(t2->second, b, a));
  }

  int apex(int t, int a, int b) const {
    for (int v : tris_[t])
      if (v != a && v != b) return v;
    return -1;
  }

  void flip(int a, int b) {
    const int t1 = directed_.at(key(a, b));
    const int t2 = directed_.at(key(b, a));
    const int c = apex(t1, a, b);
    const int d = apex(t2, b, a);
    unindex(t1);
    unindex(t2);
    tris_[t1] = {a, d, c};
    tris_[t2] = {d, b, c};
    index(t1);
    index(t2);
  }

  const std::vector<Point2>& pts_;
  std::vector<Triangle> tris_;
  std::unordered_map<std::uint64_t, int> directed_;
  std::vector<int> next_, prev_;
};

}  // namespace detail

/// Delaunay triangulation with nodes at the spot locations (K = n).
inline Mesh build_delaunay(const SpotGrid& grid) {
  const auto& pts = grid.coords();
  detail::TriangulationBuilder builder(pts);
  builder.sweep();
  builder.make_delaunay();
  return Mesh(pts, builder.canonical_triangles());
}

struct Location {
  std::size_t triangle = 0;
  std::array<double, 3> barycentric{};
};

namespace detail {

inline std::optional<std::array<double, 3>> barycentric_in(const Mesh& mesh, std::size_t t, const Point2& p) {
  const auto& tri = mesh.triangles()[t];
  const auto& a = mesh.nodes()[tri[0]];
  const auto& b = mesh.nodes()[tri[1]];
  const auto& c = mesh.nodes()[tri[2]];
  const double area = geometry::orient(a, b, c);
  std::array<double, 3> w{geometry::orient(p, b, c) / area, geometry::orient(a, p, c) / area,
                          geometry::orient(a, b, p) / area};
  constexpr double tol = 1e-12;
  if (w[0] < -tol || w[1] < -tol || w[2] < -tol) return std::nullopt;
  double sum = 0.0;
  for (double& x : w) {
    x = std::clamp(x, 0.0, 1.0);
    sum += x;
  }
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace detail

/// Containing triangle (lowest index on shared edges/vertices) and barycentric
/// coordinates of `p`; nullopt when `p` lies outside the hull.
inline std::optional<Location> locate_point(const Mesh& mesh, const Point2& p) {
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t)
    if (auto w = detail::barycentric_in(mesh, t, p)) return Location{t, *w};
  return std::nullopt;
}

/// Bucket index over triangle bounding boxes for repeated point location.
/// Returns the same answers as locate_point().
class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(&mesh) {
    xmin_ = ymin_ = std::numeric_limits<double>::infinity();
    double xmax = -xmin_, ymax = -xmin_;
    for (const auto& p : mesh.nodes()) {
      xmin_ = std::min(xmin_, p.x);
      ymin_ = std::min(ymin_, p.y);
      xmax = std::max(xmax, p.x);
      ymax = std::max(ymax, p.y);
    }
    cells_ = std::max<std::size_t>(1, std::size_t(std::sqrt(double(mesh.triangle_count()))));
    const double pad = 1e-9 * std::max(1.0, mesh.diameter());
    xmin_ -= pad;
    ymin_ -= pad;
    cw_ = (xmax + pad - xmin_) / double(cells_);
    ch_ = (ymax + pad - ymin_) / double(cells_);
    buckets_.assign(cells_ * cells_, {});
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles()[t];
      double bx0 = std::numeric_limits<double>::infinity(), by0 = bx0, bx1 = -bx0, by1 = -bx0;
      for (int v : tri) {
        bx0 = std::min(bx0, mesh.nodes()[v].x);
        bx1 = std::max(bx1, mesh.nodes()[v].x);
        by0 = std::min(by0, mesh.nodes()[v].y);
        by1 = std::max(by1, mesh.nodes()[v].y);
      }
      auto [i0, j0] = cell_of(bx0 - pad, by0 - pad);
      auto [i1, j1] = cell_of(bx1 + pad, by1 + pad);
      for (std::size_t j = j0; j <= j1; ++j)
        for (std::size_t i = i0; i <= i1; ++i) buckets_[j * cells_ + i].push_back(t);
    }
  }

  std::optional<Location> locate(const Point2& p) const {
    if (!(p.x >= xmin_ && p.y >= ymin_ && p.x <= xmin_ + cw_ * double(cells_) && p.y <= ymin_ + ch_ * double(cells_)))
      return std::nullopt;
    auto [i, j] = cell_of(p.x, p.y);
    for (std::size_t t : buckets_[j * cells_ + i])
      if (auto w = detail::barycentric_in(*mesh_, t, p)) return Location{t, *w};
    return std::nullopt;
  }

 private:
  std::pair<std::size_t, std::size_t> cell_of(double x, double y) const {
    auto clampi = [&](double v) {
      return std::size_t(std::clamp(v, 0.0, double(cells_ - 1)));
    };
    return {clampi(std::floor((x - xmin_) / cw_)), clampi(std::floor((y - ymin_) / ch_))};
  }

  const Mesh* mesh_;
  double xmin_, ymin_, cw_ = 1.0, ch_ = 1.0;
  std::size_t cells_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

/// Basis functions evaluated at a set of points, stored sparsely (at most
/// three nonzeros per row). Rows of points outside the hull are empty and
/// flagged.
struct BasisMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> values;
  std::vector<bool> outside;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

inline BasisMatrix evaluate_basis(const Mesh& mesh, std::span<const Point2> points) {
  PointLocator locator(mesh);
  BasisMatrix out;
  out.outside.assign(points.size(), false);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(points.size() * 3);
  for (std::size_t j = 0; j < points.size(); ++j) {
    auto loc = locator.locate(points[j]);
    if (!loc) {
      out.outside[j] = true;
      continue;
    }
    const auto& tri = mesh.triangles()[loc->triangle];
    for (int k = 0; k < 3; ++k)
      if (loc->barycentric[k] != 0.0) trips.emplace_back(int(j), tri[k], loc->barycentric[k]);
  }
  out.values.resize(Eigen::Index(points.size()), Eigen::Index(mesh.node_count()));
  out.values.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace stihc
