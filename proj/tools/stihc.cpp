// stihc command-line front end.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stihc/stihc.hpp"

namespace fs = std::filesystem;
using namespace stihc;

namespace {

struct Common {
  unsigned threads = default_thread_count();
  std::uint64_t seed = 1;
};

void add_common(CLI::App* sub, Common& common) {
  sub->set_version_flag("--version", version);
  sub->add_option("--threads", common.threads, "worker threads")->check(CLI::Range(1u, 1024u));
  sub->add_option("--seed", common.seed, "seed for all randomness");
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

void add_fit_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--counts", cfg.counts, "counts TSV (gene x spot)")->required();
  sub->add_option("--coords", cfg.coords, "coords CSV (spot_id,x,y)")->required();
  sub->add_option("--family", cfg.family, "poisson or gaussian");
  sub->add_option("--normalize", cfg.normalize, "none or log1p (log1p requires gaussian)");
  sub->add_option("--lambda-min", cfg.lambda_min, "low end of the default grid, relative to the data scale");
  sub->add_option("--lambda-max", cfg.lambda_max, "high end of the default grid, relative to the data scale");
  sub->add_option("--lambda-count", cfg.lambda_count, "number of grid values");
  sub->add_option("--lambdas", cfg.lambdas, "explicit absolute lambda grid")->delimiter(',');
}

void add_cluster_options(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--alpha-grid", cfg.alpha_grid, "number of correlation thresholds");
  sub->add_option("--max-inner-iterations", cfg.max_inner_iterations, "merge/prune cap per threshold");
}

ClusterConfig cluster_config(const RunConfig& cfg) {
  ClusterConfig c;
  c.grid_size = cfg.alpha_grid;
  c.max_inner_iterations = cfg.max_inner_iterations;
  c.threads = cfg.threads;
  return c;
}

int cmd_simulate(const std::string& scenario, const std::string& noise, const fs::path& out, std::uint64_t seed) {
  Scenario s = make_scenario(scenario, seed);
  if (noise == "poisson")
    s.noise = NoiseModel::poisson;
  else if (noise != "nb")
    throw Error(ErrorKind::invalid_argument, "noise must be 'nb' or 'poisson'");
  const SyntheticDataset data = generate_dataset(s);
  io::write_counts(out / "counts.tsv", data.expression);
  io::write_coords(out / "coords.csv", data.grid);
  std::vector<std::string> modules;
  for (int m : data.truth) modules.push_back(data.module_names[std::size_t(m)]);
  io::write_labels(out / "truth.csv", "module", data.expression.genes, modules);
  std::cout << "wrote " << data.expression.gene_count() << " genes x " << data.expression.spot_count()
            << " spots to " << out.string() << '\n';
  return 0;
}

int cmd_fit(RunConfig cfg) {
  cfg.validate();
  io::LoadedDataset data = io::load_dataset(cfg.counts, cfg.coords);
  print_warnings(data.warnings);
  const ExpressionMatrix e = cfg.normalize == "log1p" ? io::log1p_normalize(data.expression) : data.expression;
  const SpatialModel model(data.grid);
  const FitOptions options{FamilySpec::parse(cfg.family), cfg.lambda_min, cfg.lambda_max, cfg.lambda_count,
                           cfg.lambdas, cfg.threads};
  const SelectionOutput fit = fit_expression(model, e, options);
  print_warnings(fit.selection.warnings);
  const fs::path dir(cfg.out_dir);
  write_fit_outputs(dir, e, data.grid, fit);
  std::ofstream(dir / "config.ini", std::ios::binary) << cfg.to_ini("fit");
  std::cout << "lambda_opt " << io::format_double(fit.selection.lambda_opt) << '\n';
  return 0;
}

int cmd_cluster(const RunConfig& cfg, const fs::path& coefficients) {
  cfg.validate();
  const io::CoefficientTable table = io::read_coefficients(coefficients);
  const ClusterResult result = stihc_cluster(table.values, cluster_config(cfg));
  print_warnings(result.warnings);
  write_cluster_outputs(cfg.out_dir, table.genes, result);
  std::cout << "alpha_opt " << io::format_double(result.alpha_opt) << " clusters "
            << result.partition.cluster_count() << '\n';
  return 0;
}

int cmd_eval(const fs::path& pred, const fs::path& truth, const fs::path& coefficients, const fs::path& out) {
  const io::LabelFile predicted = io::read_labels(pred);
  const std::vector<int> labels = io::align_labels(predicted, predicted.genes);
  std::vector<int> reference;
  if (!truth.empty()) reference = io::align_labels(io::read_labels(truth), predicted.genes);
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, double>> metrics;
  if (!coefficients.empty()) {
    const io::CoefficientTable table = io::read_coefficients(coefficients);
    // coefficient rows in prediction order
    Eigen::MatrixXd c(table.values.rows(), table.values.cols());
    std::unordered_map<std::string, Eigen::Index> row;
    for (std::size_t g = 0; g < table.genes.size(); ++g) row.emplace(table.genes[g], Eigen::Index(g));
    if (table.genes.size() != predicted.genes.size())
      throw Error(ErrorKind::length_mismatch, "coefficient and label files list different genes");
    for (std::size_t g = 0; g < predicted.genes.size(); ++g) {
      auto it = row.find(predicted.genes[g]);
      if (it == row.end())
        throw Error(ErrorKind::length_mismatch, "gene '" + predicted.genes[g] + "' missing from coefficients");
      c.row(Eigen::Index(g)) = table.values.row(it->second);
    }
    metrics = evaluate_partition(c, labels, truth.empty() ? nullptr : &reference, warnings);
  } else {
    metrics.emplace_back("n_genes", double(labels.size()));
    metrics.emplace_back("n_clusters", double(cluster_count(labels)));
    if (!truth.empty()) metrics.emplace_back("adjusted_rand_index", adjusted_rand_index(labels, reference));
  }
  print_warnings(warnings);
  if (!out.empty()) write_metrics(out, metrics);
  for (const auto& [name, value] : metrics) std::cout << name << ',' << io::format_double(value) << '\n';
  return 0;
}

int cmd_render(const RunConfig& cfg, const fs::path& coefficients, const fs::path& clusters) {
  cfg.validate();
  const FamilySpec family = FamilySpec::parse(cfg.family);
  const SpotGrid grid = io::read_coords(cfg.coords);
  const io::CoefficientTable table = io::read_coefficients(coefficients);
  if (table.values.cols() != Eigen::Index(grid.size()))
    throw Error(ErrorKind::length_mismatch, "coefficient columns do not match the number of spots");
  const std::vector<int> labels = io::align_labels(io::read_labels(clusters), table.genes);
  const Partition partition = Partition::from_labels(table.values, labels);
  RenderOptions options;
  options.surfaces = cfg.surfaces;
  const auto written = render_cluster_means(build_delaunay(grid), partition, family, cfg.out_dir, options);
  std::cout << "wrote " << written.size() << " figures to " << cfg.out_dir << '\n';
  return 0;
}

int cmd_pipeline(const RunConfig& cfg) {
  const PipelineResult result = run_pipeline(cfg);
  print_warnings(result.warnings);
  for (const auto& [name, value] : result.metrics) std::cout << name << ',' << io::format_double(value) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stihc: spatial FEM regression and iterative hierarchical clustering of genes"};
  app.set_version_flag("--version", version);
  app.require_subcommand(1);
  // options of the main app are accepted after the subcommand, so
  // `stihc pipeline --config run.ini` reads the [pipeline] section
  app.fallthrough();
  app.set_config("--config", "", "key = value config file with one [subcommand] section; command-line options take precedence");
  Common common;
  RunConfig cfg;
  int rc = 0;

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset with planted modules");
  std::string scenario = "balanced", noise = "nb";
  fs::path sim_out = "sim";
  add_common(simulate, common);
  simulate->add_option("--scenario", scenario, "balanced, imbalanced or sparse");
  simulate->add_option("--noise", noise, "nb or poisson");
  simulate->add_option("--out", sim_out, "output directory");

  auto* fit = app.add_subcommand("fit", "fit every gene and select the unified lambda");
  add_common(fit, common);
  add_fit_options(fit, cfg);
  fit->add_option("--out", cfg.out_dir, "output directory");

  auto* cluster = app.add_subcommand("cluster", "cluster fitted coefficients");
  fs::path coefficients, clusters, pred, truth, eval_out;
  add_common(cluster, common);
  add_cluster_options(cluster, cfg);
  cluster->add_option("--coefficients", coefficients, "coefficients CSV from fit")->required();
  cluster->add_option("--out", cfg.out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "compare predicted labels with truth and score the partition");
  add_common(eval, common);
  eval->add_option("--pred", pred, "predicted labels CSV (gene,cluster)")->required();
  eval->add_option("--truth", truth, "truth labels CSV (gene,<label>)");
  eval->add_option("--coefficients", coefficients, "coefficients CSV for silhouette and Davies-Bouldin");
  eval->add_option("--out", eval_out, "metrics CSV");

  auto* render = app.add_subcommand("render", "draw the mean fitted field of each cluster as SVG");
  add_common(render, common);
  render->add_option("--coords", cfg.coords, "nodes.csv written by fit, in coefficient column order")->required();
  render->add_option("--coefficients", coefficients, "coefficients CSV")->required();
  render->add_option("--clusters", clusters, "clusters CSV")->required();
  render->add_option("--family", cfg.family, "poisson or gaussian");
  render->add_flag("--surfaces", cfg.surfaces, "also sample the field on a raster of the hull");
  render->add_option("--out", cfg.out_dir, "output directory");

  auto* pipeline = app.add_subcommand("pipeline", "fit, cluster, evaluate and render in one run");
  add_common(pipeline, common);
  add_fit_options(pipeline, cfg);
  add_cluster_options(pipeline, cfg);
  pipeline->add_option("--truth", cfg.truth, "truth labels CSV; adds the adjusted Rand index");
  pipeline->add_option("--out", cfg.out_dir, "output directory");
  pipeline->add_flag("--render,!--no-render", cfg.render, "write cluster figures");
  pipeline->add_flag("--surfaces", cfg.surfaces, "also write surface figures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  cfg.threads = common.threads;
  cfg.seed = common.seed;
  try {
    if (*simulate) rc = cmd_simulate(scenario, noise, sim_out, common.seed);
    if (*fit) rc = cmd_fit(cfg);
    if (*cluster) rc = cmd_cluster(cfg, coefficients);
    if (*eval) rc = cmd_eval(pred, truth, coefficients, eval_out);
    if (*render) rc = cmd_render(cfg, coefficients, clusters);
    if (*pipeline) rc = cmd_pipeline(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return rc;
}
