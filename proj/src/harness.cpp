#include "panelsvd/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "panelsvd/csv.hpp"
#include "panelsvd/errors.hpp"
#include "panelsvd/io.hpp"
#include "panelsvd/rng.hpp"

namespace panelsvd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string cell_label(Index n, Index trial) {
  return "n=" + std::to_string(n) + ", trial=" + std::to_string(trial) + ": ";
}

const char* kErrorParts[] = {"two_infty_raw", "two_infty_norm", "frob_norm", "op", "entry_max"};

}  // namespace

std::uint64_t cell_seed(std::uint64_t base, Index n, Index trial) {
  return derive_seed(base, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial)});
}

EstimatorConfig cell_estimator(const ExperimentConfig& config, std::uint64_t seed) {
  EstimatorConfig est = config.estimator;
  est.svd.seed = stream_seed(seed, Stream::svd);
  if (auto* pc = std::get_if<PaperConstantThresholds>(&est.threshold)) pc->k_total = config.k_sum();
  return est;
}

TrialWorld build_world(const ExperimentConfig& config, Index n, Index trial) {
  const std::uint64_t seed = cell_seed(config.seed, n, trial);
  const Index m = config.m_for(n);
  try {
    PanelDesign design = build_design(n, m, config.design, stream_seed(seed, Stream::design));
    DesignParams params = design_params(design);
    SignalSpec spec{n, m, config.signal.rank, config.signal.k_a, config.signal.spectrum, 0.0};
    if (config.signal.snr_multiplier > 0.0)
      spec.snr_floor = config.signal.snr_multiplier * config.k_sum() * static_cast<double>(config.signal.rank) *
                       std::max(params.t[0], params.t[1]);
    SignalPair signal = generate_signal(spec, stream_seed(seed, Stream::signal));
    NoisePair noise = generate_noise(n, m, config.noise.k_e, config.noise.law, stream_seed(seed, Stream::noise));
    auto [instance, observed] = realize(design, signal, noise, stream_seed(seed, Stream::assignment));
    instance.seed = seed;
    return TrialWorld{std::move(instance), std::move(observed), std::move(params)};
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(cell_label(n, trial) + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(cell_label(n, trial) + e.what());
  }
}

std::vector<std::string> metric_columns(const ExperimentConfig& config) {
  std::vector<std::string> cols = {"q",           "r_p",        "p_op_0",      "p_op_1",   "t_0",
                                   "t_1",         "nu_realized", "clip_count", "p_hat_gap", "sigma1_0",
                                   "sigma_r_0",   "sigma1_1",   "sigma_r_1"};
  if (config.diagnostics.incoherence) {
    cols.push_back("mu_0");
    cols.push_back("mu_1");
  }
  for (int a = 0; a < 2; ++a) {
    const std::string s = std::to_string(a);
    for (const char* c : {"selected_rank_", "tau_", "sigma_hat_1_", "sigma_hat_r_", "sigma_hat_r1_"})
      cols.push_back(c + s);
  }
  for (const char* prefix : {"m", "a0", "a1"})
    for (const char* part : kErrorParts) cols.push_back(std::string(prefix) + "_" + part);
  for (const auto& s : config.diagnostics.subsets) cols.push_back("avg_err_max_" + s);
  cols.push_back("cs_violations");
  if (config.diagnostics.bounds)
    for (const char* c : {"bound_main_0", "bound_main_1", "bound_lemma_er"}) cols.push_back(c);
  if (config.diagnostics.e_decomposition)
    for (const char* c : {"e0_op_0", "e0_op_1", "er_op_0", "er_op_1"}) cols.push_back(c);
  if (config.diagnostics.timing)
    for (const char* c : {"time_generate", "time_estimate", "time_diagnose"}) cols.push_back(c);
  return cols;
}

std::vector<std::string> trial_columns(const ExperimentConfig& config) {
  std::vector<std::string> cols = {"n", "m", "trial", "seed", "error"};
  const auto metrics = metric_columns(config);
  cols.insert(cols.end(), metrics.begin(), metrics.end());
  return cols;
}

std::vector<std::string> trial_fields(const TrialRecord& record, const ExperimentConfig& config) {
  std::vector<std::string> fields = {std::to_string(record.n), std::to_string(record.m), std::to_string(record.trial),
                                     std::to_string(record.seed), record.error};
  const std::size_t count = metric_columns(config).size();
  if (record.ok()) {
    if (record.metrics.size() != count) throw std::logic_error("trial record does not match the column set");
    for (double v : record.metrics.values()) fields.push_back(format_number(v));
  } else {
    fields.resize(fields.size() + count);
  }
  return fields;
}

TrialRecord run_trial(const ExperimentConfig& config, Index n, Index trial) {
  config.validate();
  const auto t0 = Clock::now();
  const TrialWorld world = build_world(config, n, trial);
  const double time_generate = seconds_since(t0);

  const PanelInstance& inst = world.instance;
  const DesignParams& dp = world.params;
  const Index m = inst.design.n_times();
  const Index r = config.signal.rank;

  TrialRecord rec;
  rec.n = n;
  rec.m = m;
  rec.trial = trial;
  rec.seed = inst.seed;

  const auto t1 = Clock::now();
  const EstimateResult est = estimate(world.observed, cell_estimator(config, inst.seed), &inst.design);
  const double time_estimate = seconds_since(t1);

  const auto t2 = Clock::now();
  FlatRecord& out = rec.metrics;
  out.append("", dp.flatten());
  out.add("nu_realized", inst.design.nu_realized);
  out.add("clip_count", static_cast<double>(inst.design.clip_count));
  out.add("p_hat_gap", propensity_estimation_gap(inst.assignments, inst.design));
  out.add("sigma1_0", inst.signal.singular_values_0(0));
  out.add("sigma_r_0", inst.signal.singular_values_0(r - 1));
  out.add("sigma1_1", inst.signal.singular_values_1(0));
  out.add("sigma_r_1", inst.signal.singular_values_1(r - 1));

  std::array<double, 2> mu{};
  if (config.diagnostics.incoherence || config.diagnostics.bounds)
    for (Action a : kActions) mu[index_of(a)] = incoherence(inst.signal.of(a), r, config.estimator.svd).mu;
  if (config.diagnostics.incoherence) {
    out.add("mu_0", mu[0]);
    out.add("mu_1", mu[1]);
  }

  const Index cap = config.estimator.rank_cap;
  for (Action a : kActions) {
    const ActionEstimate& e = est.of(a);
    const std::string s = std::to_string(index_of(a));
    out.add("selected_rank_" + s, static_cast<double>(e.selected_rank));
    out.add("tau_" + s, e.tau);
    out.add("sigma_hat_1_" + s, e.singular_values(0));
    out.add("sigma_hat_r_" + s, e.singular_values(cap - 1));
    out.add("sigma_hat_r1_" + s, e.singular_values(cap));
  }

  std::vector<NamedSubset> subsets;
  for (const auto& name : config.diagnostics.subsets)
    subsets.push_back(subset_preset(name, m, stream_seed(inst.seed, Stream::subsets)));
  const ErrorReport report = error_report(est.m_hat.values(), inst.effect(),
                                          {est.of(Action::control).a_hat.values(), est.of(Action::treated).a_hat.values()},
                                          {inst.signal.a0.values(), inst.signal.a1.values()}, subsets);
  out.append("", report.flatten());
  double violations = 0.0;
  for (const SubsetError& s : report.avg_errors) {
    const double bound = std::sqrt(1.0 / static_cast<double>(s.size)) * report.effect.two_infty_raw;
    violations += static_cast<double>((s.per_unit.array() > bound + 1e-12).count());
  }
  out.add("cs_violations", violations);

  if (config.diagnostics.bounds) {
    const double k = config.k_sum();
    for (Action a : kActions) {
      const std::size_t i = index_of(a);
      out.add("bound_main_" + std::to_string(i),
              bound_theorem_main(k, static_cast<double>(r), mu[i], dp.r_p, dp.q, dp.p_op_norm[i], n, m));
    }
    out.add("bound_lemma_er", bound_lemma_er(k, dp.r_p, dp.q, n, m));
  }
  if (config.diagnostics.e_decomposition) {
    std::array<EDecomposition, 2> parts{e_decomposition(world.observed, inst, Action::control),
                                        e_decomposition(world.observed, inst, Action::treated)};
    out.add("e0_op_0", norm(parts[0].e0, NormKind::operator_norm));
    out.add("e0_op_1", norm(parts[1].e0, NormKind::operator_norm));
    out.add("er_op_0", norm(parts[0].e_r, NormKind::operator_norm));
    out.add("er_op_1", norm(parts[1].e_r, NormKind::operator_norm));
  }
  if (config.diagnostics.timing) {
    out.add("time_generate", time_generate);
    out.add("time_estimate", time_estimate);
    out.add("time_diagnose", seconds_since(t2));
  }
  if (out.keys() != metric_columns(config)) throw std::logic_error("trial metrics drifted from metric_columns");
  return rec;
}

std::vector<TrialRecord> run_sweep(const ExperimentConfig& config, const SweepOptions& options) {
  config.validate();
  struct Cell {
    Index n;
    Index trial;
  };
  std::vector<Cell> cells;
  std::set<std::uint64_t> seeds;
  for (Index n : config.signal.n_list)
    for (Index t = 0; t < config.replications; ++t) {
      cells.push_back({n, t});
      if (!seeds.insert(cell_seed(config.seed, n, t)).second)
        throw ConfigError("seed collision at " + cell_label(n, t) + "choose another base seed");
    }

  std::vector<std::optional<TrialRecord>> slots(cells.size());
  std::mutex mutex;
  std::condition_variable ready;
  std::size_t next = 0;

  auto work = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard lock(mutex);
        if (next >= cells.size()) return;
        i = next++;
      }
      TrialRecord rec;
      try {
        rec = run_trial(config, cells[i].n, cells[i].trial);
      } catch (const std::exception& e) {
        rec = TrialRecord{};
        rec.n = cells[i].n;
        rec.m = config.m_for(cells[i].n);
        rec.trial = cells[i].trial;
        rec.seed = cell_seed(config.seed, cells[i].n, cells[i].trial);
        rec.error = e.what();
        if (rec.error.empty()) rec.error = "unknown failure";
      }
      {
        std::lock_guard lock(mutex);
        slots[i] = std::move(rec);
      }
      ready.notify_all();
    }
  };

  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cells.size()));
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);

  // The calling thread is the single writer: it emits rows strictly in cell order.
  if (options.csv) *options.csv << schema_line(kTrialSchema) << csv_line(trial_columns(config)) << std::flush;
  std::vector<TrialRecord> out;
  out.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    TrialRecord rec;
    {
      std::unique_lock lock(mutex);
      ready.wait(lock, [&] { return slots[i].has_value(); });
      rec = std::move(*slots[i]);
      slots[i].reset();
    }
    if (options.csv) *options.csv << csv_line(trial_fields(rec, config)) << std::flush;
    if (options.on_record) options.on_record(rec);
    out.push_back(std::move(rec));
  }
  pool.clear();
  return out;
}

double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t k = values.size() / 2;
  return values.size() % 2 == 1 ? values[k] : 0.5 * (values[k - 1] + values[k]);
}

std::vector<std::pair<double, double>> medians_by_n(const std::vector<TrialRecord>& records,
                                                    const std::string& column) {
  std::map<Index, std::vector<double>> groups;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    const auto v = r.metrics.get(column);
    if (!v) throw ValidationError("records have no column '" + column + "'");
    groups[r.n].push_back(*v);
  }
  std::vector<std::pair<double, double>> out;
  for (auto& [n, vals] : groups) out.emplace_back(static_cast<double>(n), median(std::move(vals)));
  return out;
}

SlopeFit fit_rate_slope(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 2, "slope fit needs at least two points");
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [n, err] : points) {
    if (!(n > 0.0) || !(err > 0.0) || !std::isfinite(n) || !std::isfinite(err))
      throw ValidationError("slope fit needs positive finite values");
    x.push_back(std::log(n));
    y.push_back(std::log(err));
  }
  const double k = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / k;
    my += y[i] / k;
  }
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, "slope fit needs at least two distinct n");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace panelsvd
