#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelsvd/diagnostics.hpp"
#include "panelsvd/estimator.hpp"
#include "panelsvd/panel.hpp"

namespace panelsvd {

inline constexpr const char* kTrialSchema = "panelsvd-trials/1";

struct SignalConfig {
  std::vector<Index> n_list{100};
  double aspect_ratio = 1.0;  // m = round(aspect_ratio * n)
  Index rank = 2;
  double k_a = 1.0;
  Spectrum spectrum = Spectrum::flat_with_gap;
  double snr_multiplier = 0.0;  // floor sigma_1 >= snr_multiplier * K * r * max_a T(a); 0 disables
};

struct NoiseConfig {
  double k_e = 1.0;
  NoiseLaw law = NoiseLaw::uniform_symmetric;
};

struct DiagnosticsConfig {
  bool incoherence = true;
  bool bounds = true;
  bool e_decomposition = false;  // four extra top-1 decompositions per trial
  std::vector<std::string> subsets{"all", "first-half", "even-indices", "random-half"};
  bool timing = false;  // wall-clock columns make output run-dependent
};

struct ExperimentConfig {
  std::string name = "experiment";
  DesignSpec design;
  SignalConfig signal;
  NoiseConfig noise;
  EstimatorConfig estimator;
  std::optional<double> k_total;  // paper_constant K; defaults to k_a + k_e
  Index replications = 20;
  std::uint64_t seed = 1;
  std::string output;
  DiagnosticsConfig diagnostics;

  void validate() const;  // throws ConfigError
  [[nodiscard]] Index m_for(Index n) const;
  [[nodiscard]] double k_sum() const { return k_total.value_or(signal.k_a + noise.k_e); }
};

[[nodiscard]] std::vector<std::string> preset_names();
[[nodiscard]] ExperimentConfig preset(const std::string& name);

/// Strict: unknown keys and wrong types are ConfigError. A top-level
/// "preset" key names the base configuration the remaining keys patch.
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json config_to_json(const ExperimentConfig& c);
[[nodiscard]] ExperimentConfig load_config(const std::string& path);

/// Seed of the (n, trial) cell; every random stream of the trial derives from it.
[[nodiscard]] std::uint64_t cell_seed(std::uint64_t base, Index n, Index trial);

struct TrialRecord {
  Index n = 0;
  Index m = 0;
  Index trial = 0;
  std::uint64_t seed = 0;
  std::string error;  // empty on success
  FlatRecord metrics;

  [[nodiscard]] bool ok() const noexcept { return error.empty(); }
};

/// Metric columns run_trial emits under `config`, in order.
[[nodiscard]] std::vector<std::string> metric_columns(const ExperimentConfig& config);
[[nodiscard]] std::vector<std::string> trial_columns(const ExperimentConfig& config);
[[nodiscard]] std::vector<std::string> trial_fields(const TrialRecord& record, const ExperimentConfig& config);

/// Throws on failure; run_sweep turns failures into error rows.
[[nodiscard]] TrialRecord run_trial(const ExperimentConfig& config, Index n, Index trial);

/// All generated objects of one trial, for tests and the validate command.
struct TrialWorld {
  PanelInstance instance;
  ObservedPanel observed;
  DesignParams params;
};
[[nodiscard]] TrialWorld build_world(const ExperimentConfig& config, Index n, Index trial);
/// Estimator config for a cell: seeds the SVD and fills in k_total.
[[nodiscard]] EstimatorConfig cell_estimator(const ExperimentConfig& config, std::uint64_t seed);

struct SweepOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  std::ostream* csv = nullptr;
  std::function<void(const TrialRecord&)> on_record;
};

/// Rows come back sorted by (n, trial) and are written in that order as they
/// complete. Throws ConfigError if two cells share a seed.
std::vector<TrialRecord> run_sweep(const ExperimentConfig& config, const SweepOptions& options = {});

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least squares on (log n, log error); needs at least two distinct n.
[[nodiscard]] SlopeFit fit_rate_slope(const std::vector<std::pair<double, double>>& points);

/// (n, median of `column`) over successful rows, ascending n.
[[nodiscard]] std::vector<std::pair<double, double>> medians_by_n(const std::vector<TrialRecord>& records,
                                                                  const std::string& column);

[[nodiscard]] double median(std::vector<double> values);

/// Command-line entry point; returns 0 on success, 1 on validation errors, 2 on runtime failures.
int cli_main(int argc, char** argv);

}  // namespace panelsvd
