#include "panelsvd/estimator.hpp"

#include <cmath>

#include "panelsvd/diagnostics.hpp"
#include "panelsvd/errors.hpp"

namespace panelsvd {

namespace {

void check_panel(const ObservedPanel& obs, Index rank_cap) {
  const Index dmin = std::min(obs.n_units(), obs.n_times());
  require(rank_cap >= 1, "rank_cap must be at least 1");
  require(rank_cap < dmin, "rank_cap " + std::to_string(rank_cap) + " must be below min(n, m) = " +
                               std::to_string(dmin));
}

// Gap selection and truncation for one action. Without a fixed tau the
// plug-in rule applies: plug_in times sigma_{r+1} of this decomposition.
ActionEstimate truncate(DenseMatrix scaled, Index rank_cap, std::optional<double> tau, double plug_in,
                        const SvdParams& svd, bool keep) {
  const SvdResult dec = svd_truncated(scaled, rank_cap + 1, svd);
  ActionEstimate out;
  out.tau = tau ? *tau : plug_in * dec.values(rank_cap);
  out.singular_values = dec.values;
  const std::vector<double> all = singular_gaps(dec.values);
  out.gaps.assign(all.begin(), all.begin() + rank_cap);
  out.selected_rank = select_rank(dec.values, rank_cap, out.tau);
  out.a_hat = DenseMatrix(dec.reconstruct(out.selected_rank));
  if (keep) out.scaled = std::move(scaled);
  return out;
}

EstimateResult combine(ActionEstimate control, ActionEstimate treated) {
  EstimateResult out;
  out.m_hat = DenseMatrix(Matrix(treated.a_hat.values() - control.a_hat.values()));
  out.per_action[index_of(Action::control)] = std::move(control);
  out.per_action[index_of(Action::treated)] = std::move(treated);
  return out;
}

}  // namespace

void EstimatorConfig::validate() const {
  if (rank_cap < 1) throw ConfigError("rank_cap must be at least 1");
  if (keep_scaled_limit < 0) throw ConfigError("keep_scaled_limit must be nonnegative");
  std::visit(
      [](const auto& rule) {
        using T = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<T, OracleThresholds>) {
          if (!(rule.tau0 >= 0.0) || !(rule.tau1 >= 0.0)) throw ConfigError("oracle thresholds must be >= 0");
        } else if constexpr (std::is_same_v<T, PaperConstantThresholds>) {
          if (!(rule.multiplier > 0.0) || !std::isfinite(rule.multiplier))
            throw ConfigError("threshold multiplier must be positive");
          if (!(rule.k_total > 0.0) || !std::isfinite(rule.k_total)) throw ConfigError("k_total must be positive");
        } else {
          if (!(rule.gap_multiplier >= 0.0) || !std::isfinite(rule.gap_multiplier))
            throw ConfigError("gap multiplier must be >= 0");
        }
      },
      threshold);
}

Vector empirical_row_propensity(const DenseMatrix& d, Action a) {
  const Matrix da = action_mask(d, a);
  const double floor = 1.0 / static_cast<double>(d.cols());
  Vector out = da.rowwise().sum() / static_cast<double>(d.cols());
  for (Index i = 0; i < out.size(); ++i) out(i) = std::max(out(i), floor);
  return out;
}

DenseMatrix row_scaled_matrix(const ObservedPanel& obs, Action a) {
  const Matrix da = action_mask(obs.assignments(), a);
  const Vector phat = empirical_row_propensity(obs.assignments(), a);
  Matrix z = da.cwiseProduct(obs.y_obs().values());
  for (Index i = 0; i < z.rows(); ++i) z.row(i) /= phat(i);
  return DenseMatrix(std::move(z));
}

DenseMatrix ipw_scaled_matrix(const ObservedPanel& obs, const DenseMatrix& true_propensity, Action a) {
  require(true_propensity.rows() == obs.n_units() && true_propensity.cols() == obs.n_times(),
          "propensity shape does not match the panel");
  const Matrix da = action_mask(obs.assignments(), a);
  const Matrix pa = action_propensity(true_propensity, a);
  require(pa.minCoeff() > 0.0, "propensities must be positive for inverse weighting");
  return DenseMatrix(Matrix(da.cwiseProduct(obs.y_obs().values()).cwiseQuotient(pa)));
}

Index select_rank(const Vector& singular_values, Index rank_cap, double tau) {
  const std::vector<double> gaps = singular_gaps(singular_values);
  const Index limit = std::min<Index>(rank_cap, static_cast<Index>(gaps.size()));
  for (Index s = limit; s >= 1; --s)
    if (gaps[static_cast<std::size_t>(s - 1)] >= tau) return s;
  return 0;
}

EstimateResult estimate(const ObservedPanel& obs, const EstimatorConfig& config, const PanelDesign* design) {
  config.validate();
  check_panel(obs, config.rank_cap);
  const bool keep = obs.n_units() * obs.n_times() <= config.keep_scaled_limit;

  std::optional<DesignParams> params;
  if (std::holds_alternative<PaperConstantThresholds>(config.threshold)) {
    if (design == nullptr) throw ConfigError("paper_constant thresholds need the true design");
    require(design->n_units() == obs.n_units() && design->n_times() == obs.n_times(),
            "design shape does not match the panel");
    params = design_params(*design);
  }

  std::array<ActionEstimate, 2> parts;
  for (Action a : kActions) {
    DenseMatrix scaled = row_scaled_matrix(obs, a);
    std::optional<double> tau;
    double plug_in = 0.0;
    if (const auto* o = std::get_if<OracleThresholds>(&config.threshold)) {
      tau = a == Action::treated ? o->tau1 : o->tau0;
    } else if (const auto* pc = std::get_if<PaperConstantThresholds>(&config.threshold)) {
      tau = pc->multiplier * pc->k_total * params->t[index_of(a)];
    } else {
      plug_in = std::get<PlugInThresholds>(config.threshold).gap_multiplier;
    }
    parts[index_of(a)] = truncate(std::move(scaled), config.rank_cap, tau, plug_in, config.svd, keep);
    parts[index_of(a)].row_propensity_hat = empirical_row_propensity(obs.assignments(), a);
  }
  return combine(std::move(parts[0]), std::move(parts[1]));
}

EstimateResult ipw_oracle_estimate(const ObservedPanel& obs, const DenseMatrix& true_propensity, Index rank_cap,
                                   OracleThresholds taus, const SvdParams& svd) {
  check_panel(obs, rank_cap);
  require(taus.tau0 >= 0.0 && taus.tau1 >= 0.0, "oracle thresholds must be >= 0");
  std::array<ActionEstimate, 2> parts;
  for (Action a : kActions) {
    const double tau = a == Action::treated ? taus.tau1 : taus.tau0;
    parts[index_of(a)] = truncate(ipw_scaled_matrix(obs, true_propensity, a), rank_cap, tau, 0.0, svd, true);
    parts[index_of(a)].row_propensity_hat = row_mean_propensity(true_propensity, a);
  }
  return combine(std::move(parts[0]), std::move(parts[1]));
}

}  // namespace panelsvd
