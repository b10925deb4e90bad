#pragma once

// SVG figures of fitted spatial fields: spots as filled circles, or the FEM
// field sampled on a raster over the convex hull.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "stihc/error.hpp"
#include "stihc/family.hpp"
#include "stihc/ihc.hpp"
#include "stihc/mesh.hpp"

namespace stihc {

struct RenderOptions {
  int width = 480;            // pixels, including margins
  int raster = 200;           // surface resolution per axis
  bool surfaces = false;
};

/// Two-stop linear ramp from pale yellow (t = 0) to dark red (t = 1).
inline std::array<int, 3> ramp_color(double t) {
  constexpr std::array<double, 3> lo{255, 247, 236}, hi{127, 0, 0};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  std::array<int, 3> c{};
  for (int k = 0; k < 3; ++k) c[std::size_t(k)] = int(std::lround(lo[std::size_t(k)] + t * (hi[std::size_t(k)] - lo[std::size_t(k)])));
  return c;
}

namespace detail {

inline std::string hex_color(const std::array<int, 3>& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Canvas {
  double xmin, ymin, scale, margin;
  int width, height;

  double px(double x) const { return margin + (x - xmin) * scale; }
  // SVG y grows downward
  double py(double y) const { return double(height) - margin - (y - ymin) * scale; }
};

inline Canvas make_canvas(const std::vector<Point2>& pts, int width) {
  double xmin = pts[0].x, xmax = xmin, ymin = pts[0].y, ymax = ymin;
  for (const auto& p : pts) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double margin = 12.0;
  const double span = std::max(xmax - xmin, ymax - ymin);
  const double scale = (width - 2 * margin) / (span > 0 ? span : 1.0);
  const int height = int(std::ceil((ymax - ymin) * scale + 2 * margin)) + 24;
  return {xmin, ymin, scale, margin, width, height};
}

inline double min_edge_length(const Mesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (auto [a, b] : mesh.edges()) {
    const auto& p = mesh.nodes()[std::size_t(a)];
    const auto& q = mesh.nodes()[std::size_t(b)];
    best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
  }
  return best;
}

inline void write_svg(const std::filesystem::path& path, const Canvas& canvas, const std::string& body,
                      const std::string& title, double lo, double hi) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::invalid_argument, "cannot write '" + path.string() + "'");
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << canvas.width << "\" height=\""
      << canvas.height << "\" viewBox=\"0 0 " << canvas.width << ' ' << canvas.height << "\">\n"
      << "<title>" << title << "</title>\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
      << body << "<text x=\"" << fmt(canvas.margin) << "\" y=\"" << canvas.height - 8
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << title << "  min " << fmt(lo) << "  max " << fmt(hi)
      << "</text>\n</svg>\n";
}

}  // namespace detail

/// Spots colored by `values`, min-max normalized within the figure.
inline void render_spot_field(const std::filesystem::path& path, const Mesh& mesh, const Eigen::VectorXd& values,
                              const std::string& title, const RenderOptions& options = {}) {
  if (values.size() != Eigen::Index(mesh.node_count()))
    throw Error(ErrorKind::length_mismatch, "field length must equal the mesh node count");
  const auto canvas = detail::make_canvas(mesh.nodes(), options.width);
  const double lo = values.minCoeff(), hi = values.maxCoeff();
  const double radius = 0.5 * detail::min_edge_length(mesh) * canvas.scale;
  std::string body;
  for (std::size_t j = 0; j < mesh.node_count(); ++j) {
    const double t = hi > lo ? (values[Eigen::Index(j)] - lo) / (hi - lo) : 0.0;
    const auto& p = mesh.nodes()[j];
    body += "<circle cx=\"" + detail::fmt(canvas.px(p.x)) + "\" cy=\"" + detail::fmt(canvas.py(p.y)) + "\" r=\"" +
            detail::fmt(radius) + "\" fill=\"" + detail::hex_color(ramp_color(t)) + "\"/>\n";
  }
  detail::write_svg(path, canvas, body, title, lo, hi);
}

/// The piecewise-linear field with nodal values `coefficients`, mapped
/// through the inverse link and sampled on a raster over the hull.
inline void render_surface(const std::filesystem::path& path, const Mesh& mesh, const Eigen::VectorXd& coefficients,
                           const FamilySpec& family, const std::string& title, const RenderOptions& options = {}) {
  if (coefficients.size() != Eigen::Index(mesh.node_count()))
    throw Error(ErrorKind::length_mismatch, "coefficient length must equal the mesh node count");
  const auto canvas = detail::make_canvas(mesh.nodes(), options.width);
  const PointLocator locator(mesh);
  double xmax = canvas.xmin, ymax = canvas.ymin;
  for (const auto& p : mesh.nodes()) {
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
  }
  const int res = options.raster;
  const double cw = (xmax - canvas.xmin) / res, ch = (ymax - canvas.ymin) / res;
  std::vector<double> cell(std::size_t(res) * std::size_t(res), std::numeric_limits<double>::quiet_NaN());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) {
      const Point2 p{canvas.xmin + (c + 0.5) * cw, canvas.ymin + (r + 0.5) * ch};
      auto loc = locator.locate(p);
      if (!loc) continue;
      const auto& tri = mesh.triangles()[loc->triangle];
      double eta = 0.0;
      for (int k = 0; k < 3; ++k) eta += loc->barycentric[std::size_t(k)] * coefficients[tri[std::size_t(k)]];
      const double v = family.inverse_link(eta);
      cell[std::size_t(r) * std::size_t(res) + std::size_t(c)] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  std::string body;
  const std::string w = detail::fmt(cw * canvas.scale + 0.05), h = detail::fmt(ch * canvas.scale + 0.05);
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c) {
      const double v = cell[std::size_t(r) * std::size_t(res) + std::size_t(c)];
      if (std::isnan(v)) continue;
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
      body += "<rect x=\"" + detail::fmt(canvas.px(canvas.xmin + c * cw)) + "\" y=\"" +
              detail::fmt(canvas.py(canvas.ymin + (r + 1) * ch)) + "\" width=\"" + w + "\" height=\"" + h +
              "\" fill=\"" + detail::hex_color(ramp_color(t)) + "\"/>\n";
    }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  detail::write_svg(path, canvas, body, title, lo, hi);
}

/// One figure per cluster of the mean fitted field g^{-1}(Phi mu_p), plus a
/// surface variant per cluster when requested. Returns the written paths.
inline std::vector<std::filesystem::path> render_cluster_means(const Mesh& mesh, const Partition& partition,
                                                               const FamilySpec& family,
                                                               const std::filesystem::path& out_dir,
                                                               const RenderOptions& options = {}) {
  if (partition.centers.cols() != Eigen::Index(mesh.node_count()))
    throw Error(ErrorKind::length_mismatch, "cluster centers do not match the mesh");
  std::vector<std::filesystem::path> written;
  for (int k = 0; k < partition.cluster_count(); ++k) {
    if (partition.sizes[std::size_t(k)] == 0) throw Error(ErrorKind::empty_cluster, "cluster " + std::to_string(k) + " is empty");
    const Eigen::VectorXd center = partition.centers.row(k).transpose();
    const std::string title = "cluster " + std::to_string(k) + " (" + std::to_string(partition.sizes[std::size_t(k)]) +
                              (partition.sizes[std::size_t(k)] == 1 ? " gene)" : " genes)");
    const Eigen::VectorXd field = center.unaryExpr([&](double eta) { return family.inverse_link(eta); });
    auto path = out_dir / ("cluster_" + std::to_string(k) + ".svg");
    render_spot_field(path, mesh, field, title, options);
    written.push_back(path);
    if (options.surfaces) {
      auto surface = out_dir / ("cluster_" + std::to_string(k) + "_surface.svg");
      render_surface(surface, mesh, center, family, title, options);
      written.push_back(surface);
    }
  }
  return written;
}

}  // namespace stihc
