#pragma once

// Text formats: coordinates CSV, counts TSV, label and coefficient CSVs.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "stihc/error.hpp"
#include "stihc/expression.hpp"
#include "stihc/mesh.hpp"

namespace stihc::io {

/// Shortest decimal text that reads back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_double(double v, int significant) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, significant);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw Error(ErrorKind::parse_error, "cannot open '" + path.string() + "'");
  }

  // Next non-empty line, without the trailing carriage return.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!trim(line).empty()) return true;
    }
    return false;
  }

  std::size_t line_number() const { return number_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::parse_error, path_.string() + ":" + std::to_string(number_) + ": " + what);
  }

  double number(std::string_view field) const {
    field = trim(field);
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
      fail("expected a number, got '" + std::string(field) + "'");
    return v;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t number_ = 0;
};

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::invalid_argument, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace detail

/// Coordinates CSV with header `spot_id,x,y`.
inline SpotGrid read_coords(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) reader.fail("empty coordinates file");
  auto header = detail::split(line, ',');
  if (header.size() != 3 || detail::trim(header[0]) != "spot_id" || detail::trim(header[1]) != "x" ||
      detail::trim(header[2]) != "y")
    reader.fail("expected header 'spot_id,x,y'");
  std::vector<std::string> ids;
  std::vector<Point2> pts;
  while (reader.next(line)) {
    auto f = detail::split(line, ',');
    if (f.size() != 3) reader.fail("expected 3 fields, got " + std::to_string(f.size()));
    ids.emplace_back(detail::trim(f[0]));
    if (ids.back().empty()) reader.fail("empty spot id");
    pts.push_back({reader.number(f[1]), reader.number(f[2])});
    if (!std::isfinite(pts.back().x) || !std::isfinite(pts.back().y)) reader.fail("non-finite coordinate");
  }
  return SpotGrid(std::move(ids), std::move(pts));
}

/// Counts TSV: header `gene` followed by spot ids, then one row per gene.
inline ExpressionMatrix read_counts(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) reader.fail("empty counts file");
  auto header = detail::split(line, '\t');
  if (detail::trim(header[0]) != "gene") reader.fail("first header column must be 'gene'");
  ExpressionMatrix e;
  for (std::size_t k = 1; k < header.size(); ++k) e.spots.emplace_back(detail::trim(header[k]));
  if (e.spots.empty()) reader.fail("no spot columns");
  std::vector<std::vector<double>> rows;
  while (reader.next(line)) {
    auto f = detail::split(line, '\t');
    if (f.size() != header.size())
      reader.fail("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    e.genes.emplace_back(detail::trim(f[0]));
    if (e.genes.back().empty()) reader.fail("empty gene name");
    std::vector<double> row(f.size() - 1);
    for (std::size_t k = 1; k < f.size(); ++k) {
      row[k - 1] = reader.number(f[k]);
      if (!std::isfinite(row[k - 1])) reader.fail("non-finite expression value");
    }
    rows.push_back(std::move(row));
  }
  e.values.resize(Eigen::Index(rows.size()), Eigen::Index(e.spots.size()));
  for (std::size_t g = 0; g < rows.size(); ++g)
    for (std::size_t j = 0; j < rows[g].size(); ++j) e.values(Eigen::Index(g), Eigen::Index(j)) = rows[g][j];
  return e;
}

struct LoadedDataset {
  ExpressionMatrix expression;  // spots in coordinate-file order
  SpotGrid grid;
  std::vector<std::string> warnings;
};

/// Reads both files, aligns spots by id and drops genes with zero total
/// expression. Spots present only in the coordinates file are dropped with a
/// warning.
inline LoadedDataset load_dataset(const std::filesystem::path& counts_path, const std::filesystem::path& coords_path) {
  SpotGrid coords = read_coords(coords_path);
  ExpressionMatrix raw = read_counts(counts_path);
  std::unordered_map<std::string, std::size_t> coord_index;
  for (std::size_t j = 0; j < coords.size(); ++j) coord_index.emplace(coords.spot_ids()[j], j);
  std::vector<std::size_t> counts_to_coord(raw.spots.size());
  std::vector<long> coord_to_counts(coords.size(), -1);
  for (std::size_t k = 0; k < raw.spots.size(); ++k) {
    auto it = coord_index.find(raw.spots[k]);
    if (it == coord_index.end())
      throw Error(ErrorKind::unknown_spot, "counts reference spot '" + raw.spots[k] + "' absent from coordinates");
    if (coord_to_counts[it->second] >= 0)
      throw Error(ErrorKind::parse_error, "spot '" + raw.spots[k] + "' appears twice in counts header");
    counts_to_coord[k] = it->second;
    coord_to_counts[it->second] = long(k);
  }
  LoadedDataset out;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < coords.size(); ++j)
    if (coord_to_counts[j] >= 0) keep.push_back(j);
  if (keep.size() < coords.size())
    out.warnings.push_back(std::to_string(coords.size() - keep.size()) + " spot(s) without counts were dropped");
  out.grid = keep.size() < coords.size() ? coords.subset(keep) : std::move(coords);

  std::vector<std::size_t> genes;
  for (Eigen::Index g = 0; g < raw.values.rows(); ++g) {
    if (raw.values.row(g).sum() == 0.0)
      out.warnings.push_back("gene '" + raw.genes[std::size_t(g)] + "' has zero total expression and was dropped");
    else
      genes.push_back(std::size_t(g));
  }
  if (genes.empty()) throw Error(ErrorKind::empty_after_filter, "no genes left after dropping zero-total genes");
  auto& e = out.expression;
  e.spots = out.grid.spot_ids();
  e.values.resize(Eigen::Index(genes.size()), Eigen::Index(keep.size()));
  for (std::size_t g = 0; g < genes.size(); ++g) {
    e.genes.push_back(raw.genes[genes[g]]);
    for (std::size_t j = 0; j < keep.size(); ++j)
      e.values(Eigen::Index(g), Eigen::Index(j)) = raw.values(Eigen::Index(genes[g]), coord_to_counts[keep[j]]);
  }
  return out;
}

/// Elementwise log(1 + x).
inline ExpressionMatrix log1p_normalize(const ExpressionMatrix& e) {
  if ((e.values.array() < 0.0).any()) throw Error(ErrorKind::negative_value, "log1p needs nonnegative values");
  ExpressionMatrix out = e;
  out.values = e.values.unaryExpr([](double v) { return std::log1p(v); });
  return out;
}

inline void write_coords(const std::filesystem::path& path, const SpotGrid& grid) {
  auto out = detail::open_output(path);
  out << "spot_id,x,y\n";
  for (std::size_t j = 0; j < grid.size(); ++j)
    out << grid.spot_ids()[j] << ',' << format_double(grid.coords()[j].x) << ',' << format_double(grid.coords()[j].y)
        << '\n';
}

inline void write_counts(const std::filesystem::path& path, const ExpressionMatrix& e) {
  auto out = detail::open_output(path);
  out << "gene";
  for (const auto& s : e.spots) out << '\t' << s;
  out << '\n';
  for (std::size_t g = 0; g < e.genes.size(); ++g) {
    out << e.genes[g];
    for (Eigen::Index j = 0; j < e.values.cols(); ++j) out << '\t' << format_double(e.values(Eigen::Index(g), j));
    out << '\n';
  }
}

/// Two-column CSV `gene,<column>`.
inline void write_labels(const std::filesystem::path& path, std::string_view column,
                         const std::vector<std::string>& genes, const std::vector<std::string>& labels) {
  if (genes.size() != labels.size()) throw Error(ErrorKind::length_mismatch, "gene and label counts differ");
  auto out = detail::open_output(path);
  out << "gene," << column << '\n';
  for (std::size_t g = 0; g < genes.size(); ++g) out << genes[g] << ',' << labels[g] << '\n';
}

inline void write_labels(const std::filesystem::path& path, std::string_view column,
                         const std::vector<std::string>& genes, const std::vector<int>& labels) {
  std::vector<std::string> text;
  for (int l : labels) text.push_back(std::to_string(l));
  write_labels(path, column, genes, text);
}

struct LabelFile {
  std::vector<std::string> genes;
  std::vector<std::string> labels;
};

/// Reads a `gene,<label>` CSV with any label column name.
inline LabelFile read_labels(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) reader.fail("empty label file");
  auto header = detail::split(line, ',');
  if (header.size() != 2 || detail::trim(header[0]) != "gene") reader.fail("expected header 'gene,<label>'");
  LabelFile out;
  std::unordered_map<std::string, std::size_t> seen;
  while (reader.next(line)) {
    auto f = detail::split(line, ',');
    if (f.size() != 2) reader.fail("expected 2 fields, got " + std::to_string(f.size()));
    std::string gene(detail::trim(f[0]));
    if (!seen.emplace(gene, out.genes.size()).second) reader.fail("duplicate gene '" + gene + "'");
    out.genes.push_back(std::move(gene));
    out.labels.emplace_back(detail::trim(f[1]));
  }
  return out;
}

/// Integer labels for `genes` from a label file; label strings are numbered
/// in order of first appearance. Every gene must be present.
inline std::vector<int> align_labels(const LabelFile& file, const std::vector<std::string>& genes) {
  if (file.genes.size() != genes.size())
    throw Error(ErrorKind::length_mismatch, "label file has " + std::to_string(file.genes.size()) + " genes, expected " +
                                                std::to_string(genes.size()));
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < file.genes.size(); ++i) index.emplace(file.genes[i], i);
  std::map<std::string, int> ids;
  std::vector<int> out;
  for (const auto& g : genes) {
    auto it = index.find(g);
    if (it == index.end()) throw Error(ErrorKind::length_mismatch, "gene '" + g + "' missing from label file");
    auto [id, inserted] = ids.try_emplace(file.labels[it->second], int(ids.size()));
    out.push_back(id->second);
  }
  return out;
}

struct CoefficientTable {
  std::vector<std::string> genes;
  Eigen::MatrixXd values;  // G x K
};

/// Coefficient CSV `gene,c_1,...,c_K` with 17 significant digits.
inline void write_coefficients(const std::filesystem::path& path, const std::vector<std::string>& genes,
                               const Eigen::MatrixXd& c) {
  if (Eigen::Index(genes.size()) != c.rows()) throw Error(ErrorKind::length_mismatch, "gene and row counts differ");
  auto out = detail::open_output(path);
  out << "gene";
  for (Eigen::Index k = 0; k < c.cols(); ++k) out << ",c_" << k + 1;
  out << '\n';
  for (Eigen::Index g = 0; g < c.rows(); ++g) {
    out << genes[std::size_t(g)];
    for (Eigen::Index k = 0; k < c.cols(); ++k) out << ',' << format_double(c(g, k), 17);
    out << '\n';
  }
}

inline CoefficientTable read_coefficients(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::string line;
  if (!reader.next(line)) reader.fail("empty coefficient file");
  auto header = detail::split(line, ',');
  if (detail::trim(header[0]) != "gene" || header.size() < 2) reader.fail("expected header 'gene,c_1,...'");
  for (std::size_t k = 1; k < header.size(); ++k)
    if (detail::trim(header[k]) != "c_" + std::to_string(k)) reader.fail("expected column 'c_" + std::to_string(k) + "'");
  CoefficientTable t;
  std::vector<std::vector<double>> rows;
  while (reader.next(line)) {
    auto f = detail::split(line, ',');
    if (f.size() != header.size())
      reader.fail("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    t.genes.emplace_back(detail::trim(f[0]));
    std::vector<double> row;
    for (std::size_t k = 1; k < f.size(); ++k) row.push_back(reader.number(f[k]));
    rows.push_back(std::move(row));
  }
  t.values.resize(Eigen::Index(rows.size()), Eigen::Index(header.size() - 1));
  for (std::size_t g = 0; g < rows.size(); ++g)
    for (std::size_t k = 0; k < rows[g].size(); ++k) t.values(Eigen::Index(g), Eigen::Index(k)) = rows[g][k];
  return t;
}

/// Generic CSV writer for small tables of preformatted cells.
inline void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  auto out = detail::open_output(path);
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
    out << '\n';
  }
}

}  // namespace stihc::io
