#pragma once

// End-to-end workflow: load, optionally normalize, fit every gene with a
// unified smoothing parameter, cluster the coefficients, evaluate, render.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stihc/error.hpp"
#include "stihc/expression.hpp"
#include "stihc/family.hpp"
#include "stihc/fem.hpp"
#include "stihc/ihc.hpp"
#include "stihc/io.hpp"
#include "stihc/mesh.hpp"
#include "stihc/metrics.hpp"
#include "stihc/parallel.hpp"
#include "stihc/render.hpp"
#include "stihc/solver.hpp"

namespace stihc {

struct RunConfig {
  std::string counts;
  std::string coords;
  std::string truth;  // optional
  std::string out_dir = "stihc_out";
  std::string family = "poisson";
  std::string normalize = "none";  // none or log1p
  // default grid, relative to mean_weight * n / trace(P)
  double lambda_min = 1.0;
  double lambda_max = 1e8;
  std::size_t lambda_count = 20;
  std::vector<double> lambdas;  // explicit absolute grid; overrides the above
  int alpha_grid = 20;
  int max_inner_iterations = 100;
  std::uint64_t seed = 1;
  unsigned threads = default_thread_count();
  bool render = true;
  bool surfaces = false;

  void validate() const {
    FamilySpec::parse(family);
    if (normalize != "none" && normalize != "log1p")
      throw Error(ErrorKind::invalid_argument, "normalize must be 'none' or 'log1p'");
    if (normalize == "log1p" && family != "gaussian")
      throw Error(ErrorKind::invalid_argument, "log1p-normalized data must be fitted with the gaussian family");
    if (lambdas.empty() && !(lambda_min > 0.0 && lambda_max >= lambda_min && lambda_count >= 1))
      throw Error(ErrorKind::invalid_argument, "lambda grid needs 0 < lambda-min <= lambda-max and lambda-count >= 1");
    if (alpha_grid < 2) throw Error(ErrorKind::invalid_argument, "alpha-grid must be at least 2");
    if (max_inner_iterations < 1) throw Error(ErrorKind::invalid_argument, "max-inner-iterations must be positive");
    if (threads < 1) throw Error(ErrorKind::invalid_argument, "threads must be at least 1");
  }

  /// key = value text under a [section] header that the command line reads
  /// back with --config. Clustering and rendering keys are written only for
  /// the pipeline section.
  std::string to_ini(std::string_view section = "pipeline") const {
    const bool full = section == "pipeline";
    std::ostringstream out;
    auto quoted = [](const std::string& s) { return "\"" + s + "\""; };
    out << '[' << section << "]\n"
        << "counts = " << quoted(counts) << '\n'
        << "coords = " << quoted(coords) << '\n';
    if (full && !truth.empty()) out << "truth = " << quoted(truth) << '\n';
    out << "out = " << quoted(out_dir) << '\n'
        << "family = " << quoted(family) << '\n'
        << "normalize = " << quoted(normalize) << '\n'
        << "lambda-min = " << io::format_double(lambda_min) << '\n'
        << "lambda-max = " << io::format_double(lambda_max) << '\n'
        << "lambda-count = " << lambda_count << '\n';
    if (!lambdas.empty()) {
      out << "lambdas = [";
      for (std::size_t i = 0; i < lambdas.size(); ++i) out << (i ? ", " : "") << io::format_double(lambdas[i]);
      out << "]\n";
    }
    if (full)
      out << "alpha-grid = " << alpha_grid << '\n'
          << "max-inner-iterations = " << max_inner_iterations << '\n';
    out << "seed = " << seed << '\n'
        << "threads = " << threads << '\n';
    if (full)
      out << "render = " << (render ? "true" : "false") << '\n'
          << "surfaces = " << (surfaces ? "true" : "false") << '\n';
    return out.str();
  }
};

struct FitOptions {
  FamilySpec family;
  double lambda_min = 1.0;
  double lambda_max = 1e8;
  std::size_t lambda_count = 20;
  std::vector<double> lambdas;
  unsigned threads = 1;
};

/// Mesh, penalty and basis for a spot grid, with nodes at the spots.
struct SpatialModel {
  Mesh mesh;
  PenaltyMatrices penalty;
  BasisMatrix basis;

  explicit SpatialModel(const SpotGrid& grid)
      : mesh(build_delaunay(grid)),
        penalty(assemble_penalty(mesh)),
        basis(evaluate_basis(mesh, grid.coords())) {}
};

inline SelectionOutput fit_expression(const SpatialModel& model, const ExpressionMatrix& e, const FitOptions& options) {
  e.validate();
  const std::vector<double> grid =
      options.lambdas.empty()
          ? default_lambda_grid(e.spot_count(), model.penalty, mean_initial_weight(e.values, options.family),
                                options.lambda_min, options.lambda_max, options.lambda_count)
          : options.lambdas;
  SelectOptions select;
  select.threads = options.threads;
  return select_lambda(model.basis.values, model.penalty, e.values, options.family, grid, select, e.genes);
}

/// Metric rows for a clustering: counts, silhouette, DBI and, with truth
/// labels, the adjusted Rand index.
inline std::vector<std::pair<std::string, double>> evaluate_partition(const Eigen::MatrixXd& coefficients,
                                                                      const std::vector<int>& labels,
                                                                      const std::vector<int>* truth,
                                                                      std::vector<std::string>& warnings) {
  std::vector<std::pair<std::string, double>> rows;
  const int m = cluster_count(labels);
  rows.emplace_back("n_genes", double(labels.size()));
  rows.emplace_back("n_clusters", double(m));
  if (truth) rows.emplace_back("adjusted_rand_index", adjusted_rand_index(labels, *truth));
  if (m >= 2) {
    rows.emplace_back("mean_silhouette", mean_silhouette(spearman_distance(coefficients).d, labels));
    try {
      rows.emplace_back("davies_bouldin", davies_bouldin(coefficients, labels));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::identical_centroids) throw;
      warnings.push_back(std::string("Davies-Bouldin index undefined: ") + e.what());
    }
  } else {
    warnings.push_back("a single cluster: silhouette and Davies-Bouldin index are undefined");
  }
  return rows;
}

struct PipelineResult {
  ExpressionMatrix expression;  // after filtering and normalization
  SelectionOutput fit;
  ClusterResult clusters;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::filesystem::path> figures;
  std::vector<std::string> warnings;
};

/// coefficients.csv, nodes.csv (spot coordinates in coefficient column
/// order), lambda.csv and fits.csv.
inline void write_fit_outputs(const std::filesystem::path& dir, const ExpressionMatrix& e, const SpotGrid& grid,
                              const SelectionOutput& fit) {
  io::write_coefficients(dir / "coefficients.csv", e.genes, fit.coefficients);
  io::write_coords(dir / "nodes.csv", grid);
  std::vector<std::vector<std::string>> rows;
  const auto& sel = fit.selection;
  for (std::size_t i = 0; i < sel.grid.size(); ++i)
    rows.push_back({io::format_double(sel.grid[i]), io::format_double(sel.total_gcv[Eigen::Index(i)]),
                    sel.eligible[i] ? "1" : "0", i == sel.opt_index ? "1" : "0"});
  io::write_table(dir / "lambda.csv", {"lambda", "total_gcv", "eligible", "selected"}, rows);
  rows.clear();
  for (std::size_t g = 0; g < fit.fits.size(); ++g) {
    const FitResult& f = fit.fits[g];
    rows.push_back({e.genes[g], io::format_double(f.deviance), io::format_double(f.edf), io::format_double(f.gcv),
                    std::to_string(f.iterations), f.converged ? "1" : "0"});
  }
  io::write_table(dir / "fits.csv", {"gene", "deviance", "edf", "gcv", "iterations", "converged"}, rows);
}

inline void write_cluster_outputs(const std::filesystem::path& dir, const std::vector<std::string>& genes,
                                  const ClusterResult& result) {
  io::write_labels(dir / "clusters.csv", "cluster", genes, result.partition.labels);
  std::vector<std::vector<std::string>> rows;
  for (const auto& d : result.diagnostics)
    rows.push_back({io::format_double(d.alpha), std::to_string(d.n_clusters), io::format_double(d.mean_silhouette),
                    d.converged ? "1" : "0"});
  io::write_table(dir / "diagnostics.csv", {"alpha", "n_clusters", "mean_silhouette", "converged"}, rows);
}

inline void write_metrics(const std::filesystem::path& path, const std::vector<std::pair<std::string, double>>& metrics) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [name, value] : metrics) rows.push_back({name, io::format_double(value)});
  io::write_table(path, {"metric", "value"}, rows);
}

/// Runs the whole workflow and writes every output under config.out_dir.
/// Inputs are read and validated before anything is written.
inline PipelineResult run_pipeline(const RunConfig& config) {
  config.validate();
  const FamilySpec family = FamilySpec::parse(config.family);
  PipelineResult result;
  io::LoadedDataset data = io::load_dataset(config.counts, config.coords);
  result.warnings = data.warnings;
  result.expression = config.normalize == "log1p" ? io::log1p_normalize(data.expression) : std::move(data.expression);
  std::optional<std::vector<int>> truth;
  if (!config.truth.empty()) {
    // genes dropped while loading may still be listed in the truth file
    io::LabelFile file = io::read_labels(config.truth);
    const std::set<std::string> kept(result.expression.genes.begin(), result.expression.genes.end());
    io::LabelFile restricted;
    for (std::size_t i = 0; i < file.genes.size(); ++i)
      if (kept.count(file.genes[i])) {
        restricted.genes.push_back(file.genes[i]);
        restricted.labels.push_back(file.labels[i]);
      }
    if (restricted.genes.size() < file.genes.size())
      result.warnings.push_back(std::to_string(file.genes.size() - restricted.genes.size()) +
                                " truth labels refer to genes not in the fitted data");
    truth = io::align_labels(restricted, result.expression.genes);
  }

  const SpatialModel model(data.grid);
  FitOptions fit_options{family, config.lambda_min, config.lambda_max, config.lambda_count, config.lambdas,
                         config.threads};
  result.fit = fit_expression(model, result.expression, fit_options);
  for (const auto& w : result.fit.selection.warnings) result.warnings.push_back(w);

  ClusterConfig cluster_config;
  cluster_config.grid_size = config.alpha_grid;
  cluster_config.max_inner_iterations = config.max_inner_iterations;
  cluster_config.threads = config.threads;
  result.clusters = stihc_cluster(result.fit.coefficients, cluster_config);
  for (const auto& w : result.clusters.warnings) result.warnings.push_back(w);
  result.metrics = evaluate_partition(result.fit.coefficients, result.clusters.partition.labels,
                                      truth ? &*truth : nullptr, result.warnings);
  result.metrics.emplace_back("lambda_opt", result.fit.selection.lambda_opt);
  result.metrics.emplace_back("alpha_opt", result.clusters.alpha_opt);

  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream echo(dir / "config.ini", std::ios::binary);
    echo << config.to_ini();
  }
  write_fit_outputs(dir, result.expression, data.grid, result.fit);
  write_cluster_outputs(dir, result.expression.genes, result.clusters);
  write_metrics(dir / "metrics.csv", result.metrics);
  if (config.render) {
    RenderOptions render;
    render.surfaces = config.surfaces;
    result.figures = render_cluster_means(model.mesh, result.clusters.partition, family, dir / "figures", render);
  }
  return result;
}

}  // namespace stihc
