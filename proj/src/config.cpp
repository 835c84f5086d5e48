#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "panelsvd/errors.hpp"
#include "panelsvd/harness.hpp"

namespace panelsvd {

namespace {

using nlohmann::json;

// Threshold and SNR multipliers used by the presets. The theoretical values
// (96 and 120) put every desk-scale signal below the floor; these keep the
// same functional form and the same 120:96 ratio.
constexpr double kDeskThresholdMultiplier = 0.005;
constexpr double kDeskSnrMultiplier = 0.00625;

// Tracks which keys of one JSON object were consumed so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  [[nodiscard]] bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json* raw(const char* key) {
    seen_.insert(key);
    return has(key) ? &j_.at(key) : nullptr;
  }

  void number(const char* key, double& out) {
    if (const json* v = raw(key)) {
      if (v->is_number()) {
        out = v->get<double>();
      } else if (v->is_string() && (v->get<std::string>() == "inf" || v->get<std::string>() == "infinity")) {
        out = std::numeric_limits<double>::infinity();
      } else {
        throw ConfigError(where(key) + " must be a number");
      }
    }
  }

  void number(const char* key, std::optional<double>& out) {
    if (has(key)) {
      double x = 0.0;
      number(key, x);
      out = x;
    } else {
      seen_.insert(key);
    }
  }

  void integer(const char* key, Index& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      out = v->get<Index>();
    }
  }

  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(where(key) + " must be a nonnegative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void text(const char* key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }

  template <typename E, typename Parse>
  void enumeration(const char* key, E& out, Parse parse) {
    std::string s;
    if (!has(key)) {
      seen_.insert(key);
      return;
    }
    text(key, s);
    try {
      out = parse(s);
    } catch (const ValidationError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(has(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key " + where(key.c_str()));
  }

  [[nodiscard]] std::string where(const char* key = nullptr) const {
    return key == nullptr ? "'" + path_ + "'" : "'" + path_ + "." + key + "'";
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string to_string(TruncatedMethod m) { return m == TruncatedMethod::lanczos ? "lanczos" : "randomized"; }

TruncatedMethod parse_method(const std::string& s) {
  if (s == "lanczos") return TruncatedMethod::lanczos;
  if (s == "randomized") return TruncatedMethod::randomized;
  throw ValidationError("unknown svd method '" + s + "' (expected lanczos or randomized)");
}

json number_json(double x) {
  if (std::isinf(x)) return "inf";
  return x;
}

ExperimentConfig base_preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.signal.rank = 2;
  c.signal.k_a = 1.0;
  c.signal.spectrum = Spectrum::flat_with_gap;
  c.signal.snr_multiplier = kDeskSnrMultiplier;
  c.noise.k_e = 1.0;
  c.noise.law = NoiseLaw::uniform_symmetric;
  c.estimator.rank_cap = 2;
  c.estimator.threshold = PaperConstantThresholds{kDeskThresholdMultiplier, 2.0};
  c.replications = 20;
  c.seed = 20240601;
  return c;
}

}  // namespace

Index ExperimentConfig::m_for(Index n) const {
  return static_cast<Index>(std::llround(signal.aspect_ratio * static_cast<double>(n)));
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name must be non-empty");
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (signal.n_list.empty()) throw ConfigError("signal.n must list at least one size");
  for (std::size_t i = 0; i < signal.n_list.size(); ++i) {
    if (signal.n_list[i] < 2) throw ConfigError("every n must be at least 2");
    if (i > 0 && signal.n_list[i] <= signal.n_list[i - 1]) throw ConfigError("signal.n must be strictly increasing");
  }
  if (!(signal.aspect_ratio >= 1.0) || !std::isfinite(signal.aspect_ratio))
    throw ConfigError("signal.aspect_ratio = " + std::to_string(signal.aspect_ratio) +
                      " would give m < n; the estimator's standing regime has m (time periods) typically larger "
                      "than n (units), so aspect_ratio must be at least 1");
  if (signal.rank < 1) throw ConfigError("signal.rank must be at least 1");
  if (!(signal.k_a > 0.0) || !std::isfinite(signal.k_a)) throw ConfigError("signal.k_a must be positive");
  if (!(signal.snr_multiplier >= 0.0)) throw ConfigError("signal.snr_multiplier must be nonnegative");
  if (!(noise.k_e >= 0.0) || !std::isfinite(noise.k_e)) throw ConfigError("noise.k_e must be nonnegative");
  if (k_total && !(*k_total > 0.0)) throw ConfigError("k_total must be positive");
  const Index n0 = signal.n_list.front();
  if (signal.rank > n0) throw ConfigError("signal.rank exceeds the smallest n");
  if (estimator.rank_cap >= n0) throw ConfigError("estimator.rank_cap must be below the smallest n");
  estimator.validate();
  if (!(design.epsilon >= kPropensityFloor && design.epsilon < 0.5))
    throw ConfigError("design.epsilon must lie in [1e-3, 0.5)");
  for (const auto& s : diagnostics.subsets) {
    try {
      (void)subset_preset(s, 2);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("diagnostics.subsets: ") + e.what());
    }
  }
}

std::vector<std::string> preset_names() {
  return {"constant-bernoulli",      "row-homogeneous",         "spectral-nonuniform",
          "spectral-nonuniform-nu1", "spectral-nonuniform-nu2", "harsh-overlap"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c = base_preset(name);
  if (name == "constant-bernoulli") {
    c.design.family = DesignFamily::constant;
    c.design.constant = 0.5;
    c.signal.n_list = {100, 200, 400};
    c.signal.aspect_ratio = 1.0;
  } else if (name == "row-homogeneous" || name.rfind("spectral-nonuniform", 0) == 0) {
    c.design.family = DesignFamily::row_homogeneous;
    c.design.p_low = 0.4;
    c.design.p_high = 0.6;
    c.signal.n_list = {100, 200, 400, 800};
    c.signal.aspect_ratio = 2.0;
    if (name != "row-homogeneous") {
      c.design.family = DesignFamily::nonuniform;
      c.design.law = PerturbationLaw::two_point;
      c.design.epsilon = 0.02;
      if (name == "spectral-nonuniform") c.design.nu = 0.5;
      else if (name == "spectral-nonuniform-nu1") c.design.nu = 1.0;
      else if (name == "spectral-nonuniform-nu2") c.design.nu = 2.0;
      else throw ConfigError("unknown preset '" + name + "'");
    }
  } else if (name == "harsh-overlap") {
    c.design.family = DesignFamily::nonuniform;
    c.design.law = PerturbationLaw::two_point;
    c.design.p_low = 0.3;
    c.design.p_high = 0.7;
    c.design.epsilon = 1e-3;
    c.design.reach = 1.0;
    c.design.strength = 1.0;
    c.signal.n_list = {100, 200, 400};
    c.signal.aspect_ratio = 2.0;
  } else {
    std::string known;
    for (const auto& p : preset_names()) known += (known.empty() ? "" : ", ") + p;
    throw ConfigError("unknown preset '" + name + "' (expected one of: " + known + ")");
  }
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json design = {{"family", to_string(c.design.family)},
                 {"constant", c.design.constant},
                 {"p_low", c.design.p_low},
                 {"p_high", c.design.p_high},
                 {"nu", c.design.nu},
                 {"law", to_string(c.design.law)},
                 {"epsilon", c.design.epsilon},
                 {"reach", c.design.reach}};
  if (c.design.strength) design["strength"] = *c.design.strength;

  json threshold;
  std::visit(
      [&](const auto& rule) {
        using T = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<T, OracleThresholds>) {
          threshold = {{"rule", "oracle"}, {"tau0", number_json(rule.tau0)}, {"tau1", number_json(rule.tau1)}};
        } else if constexpr (std::is_same_v<T, PaperConstantThresholds>) {
          threshold = {{"rule", "paper_constant"}, {"multiplier", rule.multiplier}};
          if (c.k_total) threshold["k_total"] = *c.k_total;
        } else {
          threshold = {{"rule", "plug_in"}, {"gap_multiplier", rule.gap_multiplier}};
        }
      },
      c.estimator.threshold);

  const SvdParams& s = c.estimator.svd;
  return {{"name", c.name},
          {"design", design},
          {"signal",
           {{"n", c.signal.n_list},
            {"aspect_ratio", c.signal.aspect_ratio},
            {"rank", c.signal.rank},
            {"k_a", c.signal.k_a},
            {"spectrum", to_string(c.signal.spectrum)},
            {"snr_multiplier", c.signal.snr_multiplier}}},
          {"noise", {{"k_e", c.noise.k_e}, {"law", to_string(c.noise.law)}}},
          {"estimator",
           {{"rank_cap", c.estimator.rank_cap},
            {"threshold", threshold},
            {"keep_scaled_limit", c.estimator.keep_scaled_limit},
            {"svd",
             {{"method", to_string(s.method)},
              {"dense_cutoff", s.dense_cutoff},
              {"oversampling", s.oversampling},
              {"power_iterations", s.power_iterations},
              {"max_iterations", s.max_iterations},
              {"tolerance", s.tolerance}}}}},
          {"replications", c.replications},
          {"seed", c.seed},
          {"output", c.output},
          {"diagnostics",
           {{"incoherence", c.diagnostics.incoherence},
            {"bounds", c.diagnostics.bounds},
            {"e_decomposition", c.diagnostics.e_decomposition},
            {"subsets", c.diagnostics.subsets},
            {"timing", c.diagnostics.timing}}}};
}

ExperimentConfig config_from_json(const json& input) {
  if (!input.is_object()) throw ConfigError("configuration must be a JSON object");
  json j = input;
  ExperimentConfig c;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("'preset' must be a string");
    const std::string base = j["preset"].get<std::string>();
    j.erase("preset");
    json merged = config_to_json(preset(base));
    merged.merge_patch(j);
    // A threshold block names its own rule, so it replaces the preset's wholesale.
    if (j.contains("estimator") && j["estimator"].is_object() && j["estimator"].contains("threshold"))
      merged["estimator"]["threshold"] = j["estimator"]["threshold"];
    j = std::move(merged);
  }

  Section root(j, "config");
  root.text("name", c.name);
  root.integer("replications", c.replications);
  root.unsigned_integer("seed", c.seed);
  root.text("output", c.output);

  Section design = root.child("design");
  design.enumeration("family", c.design.family, parse_design_family);
  design.number("constant", c.design.constant);
  design.number("p_low", c.design.p_low);
  design.number("p_high", c.design.p_high);
  design.number("nu", c.design.nu);
  design.number("strength", c.design.strength);
  design.enumeration("law", c.design.law, parse_perturbation_law);
  design.number("epsilon", c.design.epsilon);
  design.number("reach", c.design.reach);
  design.finish();

  Section signal = root.child("signal");
  if (const json* n = signal.raw("n")) {
    c.signal.n_list.clear();
    if (n->is_number_integer()) {
      c.signal.n_list.push_back(n->get<Index>());
    } else if (n->is_array()) {
      for (const auto& v : *n) {
        if (!v.is_number_integer()) throw ConfigError("'config.signal.n' entries must be integers");
        c.signal.n_list.push_back(v.get<Index>());
      }
    } else {
      throw ConfigError("'config.signal.n' must be an integer or a list of integers");
    }
  }
  signal.number("aspect_ratio", c.signal.aspect_ratio);
  signal.integer("rank", c.signal.rank);
  signal.number("k_a", c.signal.k_a);
  signal.enumeration("spectrum", c.signal.spectrum, parse_spectrum);
  signal.number("snr_multiplier", c.signal.snr_multiplier);
  signal.finish();

  Section noise = root.child("noise");
  noise.number("k_e", c.noise.k_e);
  noise.enumeration("law", c.noise.law, parse_noise_law);
  noise.finish();

  Section est = root.child("estimator");
  est.integer("rank_cap", c.estimator.rank_cap);
  est.integer("keep_scaled_limit", c.estimator.keep_scaled_limit);
  if (est.has("threshold")) {
    Section th = est.child("threshold");
    std::string rule;
    th.text("rule", rule);
    if (rule == "oracle") {
      OracleThresholds o;
      th.number("tau0", o.tau0);
      th.number("tau1", o.tau1);
      c.estimator.threshold = o;
    } else if (rule == "paper_constant") {
      PaperConstantThresholds p;
      th.number("multiplier", p.multiplier);
      th.number("k_total", c.k_total);
      c.estimator.threshold = p;
    } else if (rule == "plug_in") {
      PlugInThresholds p;
      th.number("gap_multiplier", p.gap_multiplier);
      c.estimator.threshold = p;
    } else {
      throw ConfigError("'config.estimator.threshold.rule' must be oracle, paper_constant or plug_in");
    }
    th.finish();
  } else {
    (void)est.raw("threshold");
  }
  Section svd = est.child("svd");
  svd.enumeration("method", c.estimator.svd.method, parse_method);
  svd.integer("dense_cutoff", c.estimator.svd.dense_cutoff);
  svd.integer("oversampling", c.estimator.svd.oversampling);
  Index power = c.estimator.svd.power_iterations;
  Index iters = c.estimator.svd.max_iterations;
  svd.integer("power_iterations", power);
  svd.integer("max_iterations", iters);
  c.estimator.svd.power_iterations = static_cast<int>(power);
  c.estimator.svd.max_iterations = static_cast<int>(iters);
  svd.number("tolerance", c.estimator.svd.tolerance);
  svd.finish();
  est.finish();

  Section diag = root.child("diagnostics");
  diag.boolean("incoherence", c.diagnostics.incoherence);
  diag.boolean("bounds", c.diagnostics.bounds);
  diag.boolean("e_decomposition", c.diagnostics.e_decomposition);
  diag.boolean("timing", c.diagnostics.timing);
  if (const json* s = diag.raw("subsets")) {
    if (!s->is_array()) throw ConfigError("'config.diagnostics.subsets' must be a list of names");
    c.diagnostics.subsets.clear();
    for (const auto& v : *s) {
      if (!v.is_string()) throw ConfigError("'config.diagnostics.subsets' must be a list of names");
      c.diagnostics.subsets.push_back(v.get<std::string>());
    }
  }
  diag.finish();
  root.finish();

  if (c.estimator.svd.dense_cutoff < 0 || c.estimator.svd.oversampling < 0 || power < 0 || iters < 1 ||
      !(c.estimator.svd.tolerance > 0.0))
    throw ConfigError("'config.estimator.svd' has an out-of-range value");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace panelsvd
