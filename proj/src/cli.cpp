#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "panelsvd/csv.hpp"
#include "panelsvd/errors.hpp"
#include "panelsvd/harness.hpp"
#include "panelsvd/io.hpp"
#include "panelsvd/oracle.hpp"
#include "panelsvd/rng.hpp"

namespace panelsvd {

namespace {

constexpr const char* kOutputDirEnv = "PANELSVD_OUTPUT_DIR";

std::filesystem::path default_output(const ExperimentConfig& c) {
  if (!c.output.empty()) return c.output;
  const char* dir = std::getenv(kOutputDirEnv);
  return std::filesystem::path(dir != nullptr && *dir != '\0' ? dir : ".") / (c.name + ".csv");
}

ExperimentConfig resolve_config(const std::string& file, const std::string& preset_name) {
  if (!file.empty() && !preset_name.empty()) throw ConfigError("give either a config file or --preset, not both");
  if (!file.empty()) return load_config(file);
  return preset(preset_name.empty() ? "row-homogeneous" : preset_name);
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

void print_slope(std::ostream& os, const std::vector<std::pair<double, double>>& points) {
  os << "n,median\n";
  for (const auto& [n, v] : points) os << format_number(n) << ',' << format_number(v) << '\n';
  if (points.size() < 2) {
    os << "slope: n/a (fewer than two sizes)\n";
    return;
  }
  if (points.size() < 3) std::cerr << "warning: slope from " << points.size() << " sizes only\n";
  const SlopeFit fit = fit_rate_slope(points);
  os << "slope: " << format_number(fit.slope) << "\nintercept: " << format_number(fit.intercept)
     << "\nr_squared: " << format_number(fit.r_squared) << '\n';
}

int cmd_run(const std::string& file, const std::string& preset_name, std::optional<std::uint64_t> seed,
            const std::string& out_path, unsigned threads, bool timing) {
  ExperimentConfig c = resolve_config(file, preset_name);
  if (seed) c.seed = *seed;
  if (timing) c.diagnostics.timing = true;
  c.validate();
  const std::filesystem::path path = out_path.empty() ? default_output(c) : std::filesystem::path(out_path);
  std::ofstream out = open_output(path);
  SweepOptions options;
  options.threads = threads;
  options.csv = &out;
  std::size_t failed = 0;
  options.on_record = [&](const TrialRecord& r) {
    if (!r.ok()) {
      ++failed;
      std::cerr << "cell n=" << r.n << " trial=" << r.trial << " failed: " << r.error << '\n';
    }
  };
  const auto records = run_sweep(c, options);
  std::cout << "wrote " << records.size() << " rows to " << path.string() << " (" << failed << " failed)\n";
  print_slope(std::cout, medians_by_n(records, "m_two_infty_norm"));
  return 0;
}

int cmd_trial(const std::string& file, const std::string& preset_name, std::optional<std::uint64_t> seed,
              std::optional<Index> n, Index trial, std::optional<double> aspect, std::optional<Index> rank,
              std::optional<double> tau, const std::string& out_path) {
  ExperimentConfig c = resolve_config(file, preset_name);
  if (seed) c.seed = *seed;
  if (aspect) c.signal.aspect_ratio = *aspect;
  if (rank) {
    c.signal.rank = *rank;
    c.estimator.rank_cap = *rank;
  }
  if (tau) c.estimator.threshold = OracleThresholds{*tau, *tau};
  const Index size = n ? *n : c.signal.n_list.front();
  c.signal.n_list = {size};
  c.replications = trial + 1;
  c.validate();
  const TrialRecord rec = run_trial(c, size, trial);
  std::string text = schema_line(kTrialSchema) + csv_line(trial_columns(c)) + csv_line(trial_fields(rec, c));
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out = open_output(out_path);
    out << text;
  }
  return 0;
}

int cmd_slope(const std::string& path, const std::string& column) {
  const CsvTable table = read_csv(path);
  std::vector<TrialRecord> records;
  const std::size_t n_col = table.column("n");
  const std::size_t err_col = table.column("error");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    TrialRecord r;
    r.n = static_cast<Index>(parse_number(table.rows[i][n_col]));
    r.error = table.rows[i][err_col];
    if (r.ok()) r.metrics.add(column, table.number(i, column));
    records.push_back(std::move(r));
  }
  print_slope(std::cout, medians_by_n(records, column));
  return 0;
}

int cmd_validate(const std::string& file, const std::string& preset_name, bool print_config) {
  const ExperimentConfig c = resolve_config(file, preset_name);
  c.validate();
  if (print_config) std::cout << config_to_json(c).dump(2) << '\n';
  bool feasible = true;
  std::cout << "config: " << c.name << '\n';
  for (Index n : c.signal.n_list) {
    const Index m = c.m_for(n);
    std::cout << "[n=" << n << ", m=" << m << "]\n";
    const std::uint64_t seed = cell_seed(c.seed, n, 0);
    std::optional<PanelDesign> built;
    try {
      built = build_design(n, m, c.design, stream_seed(seed, Stream::design));
    } catch (const InfeasibleError& e) {
      std::cout << "  design: infeasible (" << e.what() << ")\n";
      feasible = false;
      continue;
    }
    const PanelDesign& design = *built;
    const DesignParams dp = design_params(design);
    std::cout << "  family: " << to_string(design.family()) << '\n'
              << "  q: " << format_number(dp.q) << '\n'
              << "  r_p: " << format_number(dp.r_p) << '\n'
              << "  p_op_0: " << format_number(dp.p_op_norm[0]) << '\n'
              << "  p_op_1: " << format_number(dp.p_op_norm[1]) << '\n'
              << "  t_0: " << format_number(dp.t[0]) << '\n'
              << "  t_1: " << format_number(dp.t[1]) << '\n';
    if (design.family() == DesignFamily::nonuniform)
      std::cout << "  nu_realized: " << format_number(design.nu_realized) << '\n'
                << "  clip_count: " << design.clip_count << '\n';
    const double floor = c.signal.snr_multiplier * c.k_sum() * static_cast<double>(c.signal.rank) *
                         std::max(dp.t[0], dp.t[1]);
    std::cout << "  snr_floor: " << format_number(floor) << '\n';
    SignalSpec spec{n, m, c.signal.rank, c.signal.k_a, c.signal.spectrum, 0.0};
    const SignalPair signal = generate_signal(spec, stream_seed(seed, Stream::signal));
    const double sigma1 = std::min(signal.singular_values_0(0), signal.singular_values_1(0));
    const bool ok = floor <= sigma1;
    feasible = feasible && ok;
    std::cout << "  planted_sigma1: " << format_number(sigma1) << '\n'
              << "  snr_floor_status: " << (c.signal.snr_multiplier == 0.0 ? "disabled" : ok ? "met" : "violated")
              << '\n';
    for (Action a : kActions) {
      const Incoherence inc = incoherence(signal.of(a), c.signal.rank, c.estimator.svd);
      std::cout << "  mu_" << index_of(a) << ": " << format_number(inc.mu) << '\n';
    }
  }
  std::cout << "feasible: " << (feasible ? "yes" : "no") << '\n';
  return feasible ? 0 : 1;
}

int cmd_fixtures(const std::string& dir_arg, std::uint64_t seed) {
  const std::filesystem::path dir = std::filesystem::path(dir_arg.empty() ? "fixtures" : dir_arg);
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, DenseMatrix>> mats = {
      {"diag321", DenseMatrix::from_rows({{3, 0, 0}, {0, 2, 0}, {0, 0, 1}})},
      {"two_by_two", DenseMatrix::from_rows({{1, 2}, {3, 4}})},
      {"gaussian_20x30", DenseMatrix(gaussian_matrix(20, 30, derive_seed(seed, {1})))},
      {"gaussian_30x40", DenseMatrix(gaussian_matrix(30, 40, derive_seed(seed, {2})))},
      {"rank1_8x12", DenseMatrix(Matrix(gaussian_matrix(8, 1, derive_seed(seed, {3})) *
                                        gaussian_matrix(12, 1, derive_seed(seed, {4})).transpose()))},
  };
  for (const auto& [name, a] : mats) {
    write_matrix_csv(a, dir / (name + ".csv"));
    write_matrix_binary(a, dir / (name + ".bin"));
    const SvdResult ref = oracle::oracle_svd(a);
    write_matrix_csv(DenseMatrix(Matrix(ref.values)), dir / (name + ".singular_values.csv"));
  }
  ExperimentConfig c = preset("constant-bernoulli");
  c.signal.n_list = {8};
  c.signal.rank = 1;
  c.estimator.rank_cap = 1;
  c.signal.snr_multiplier = 0.0;
  c.seed = seed;
  const TrialWorld world = build_world(c, 8, 0);
  save_instance(world.instance, dir / "instance_8x8");
  std::cout << "wrote fixtures to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Row-scaled spectral estimation of heterogeneous treatment effects: simulation harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "panelsvd 1.0");

  std::string file, preset_name, out_path, column = "m_two_infty_norm";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool timing = false;
  bool print_config = false;

  auto* run = app.add_subcommand("run", "Run a seeded Monte Carlo sweep and write one CSV row per trial");
  run->add_option("config", file, "JSON config file")->check(CLI::ExistingFile);
  run->add_option("--preset", preset_name, "Start from a named preset instead of a file");
  run->add_option("--seed", seed, "Override the base seed");
  run->add_option("--out", out_path, std::string("Output CSV (default: $") + kOutputDirEnv + "/<name>.csv)");
  run->add_option("--threads", threads, "Worker threads (default: hardware threads)");
  run->add_flag("--timing", timing, "Add wall-clock columns (output no longer reproducible)");

  std::optional<Index> n, rank;
  Index trial = 0;
  std::optional<double> aspect, tau;
  auto* trial_cmd = app.add_subcommand("trial", "Run a single (n, trial) cell");
  trial_cmd->add_option("config", file, "JSON config file")->check(CLI::ExistingFile);
  trial_cmd->add_option("--preset", preset_name, "Named preset (default row-homogeneous)");
  trial_cmd->add_option("--seed", seed, "Base seed");
  trial_cmd->add_option("--n", n, "Number of units");
  trial_cmd->add_option("--trial", trial, "Trial index")->check(CLI::NonNegativeNumber);
  trial_cmd->add_option("--aspect", aspect, "m / n");
  trial_cmd->add_option("--rank", rank, "Planted rank and rank cap");
  trial_cmd->add_option("--tau", tau, "Oracle threshold for both actions");
  trial_cmd->add_option("--out", out_path, "Output CSV (default: stdout)");

  std::string csv_path;
  auto* slope = app.add_subcommand("slope", "Fit the log-log slope of per-n medians in a trial CSV");
  slope->add_option("csv", csv_path, "Trial CSV")->required()->check(CLI::ExistingFile);
  slope->add_option("--column", column, "Metric column");

  auto* validate = app.add_subcommand("validate", "Report design parameters and SNR-floor feasibility");
  validate->add_option("config", file, "JSON config file")->check(CLI::ExistingFile);
  validate->add_option("--preset", preset_name, "Named preset (default row-homogeneous)");
  validate->add_flag("--print-config", print_config, "Print the effective configuration as JSON");

  std::uint64_t fixture_seed = 7;
  auto* fixtures = app.add_subcommand("fixtures", "Write oracle test matrices and a small instance");
  fixtures->add_option("--out", out_path, "Directory (default: ./fixtures)");
  fixtures->add_option("--seed", fixture_seed, "Seed for the random fixtures");

  auto* presets = app.add_subcommand("presets", "List preset names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(file, preset_name, seed, out_path, threads, timing);
    if (*trial_cmd) return cmd_trial(file, preset_name, seed, n, trial, aspect, rank, tau, out_path);
    if (*slope) return cmd_slope(csv_path, column);
    if (*validate) return cmd_validate(file, preset_name, print_config);
    if (*fixtures) return cmd_fixtures(out_path, fixture_seed);
    if (*presets) {
      for (const auto& p : preset_names()) std::cout << p << '\n';
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace panelsvd
