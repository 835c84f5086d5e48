#pragma once

#include <array>
#include <optional>
#include <variant>
#include <vector>

#include "panelsvd/linalg.hpp"
#include "panelsvd/panel.hpp"

namespace panelsvd {

/// Explicit thresholds per action.
struct OracleThresholds {
  double tau0 = 0.0;
  double tau1 = 0.0;
};

/// tau_a = multiplier * k_total * T(a), with T(a) from the true design.
struct PaperConstantThresholds {
  double multiplier = 96.0;
  double k_total = 2.0;  // K = K_A + K_E
};

/// tau_a = gap_multiplier * sigma_{r+1} of the scaled matrix.
struct PlugInThresholds {
  double gap_multiplier = 3.0;
};

using ThresholdRule = std::variant<OracleThresholds, PaperConstantThresholds, PlugInThresholds>;

struct EstimatorConfig {
  Index rank_cap = 1;
  ThresholdRule threshold = PlugInThresholds{};
  SvdParams svd{};
  Index keep_scaled_limit = 10'000'000;  // scaled matrices are kept when n*m is at most this

  void validate() const;
};

struct ActionEstimate {
  DenseMatrix a_hat;
  Index selected_rank = 0;
  Vector row_propensity_hat;
  double tau = 0.0;
  Vector singular_values;    // leading rank_cap + 1 of the scaled matrix
  std::vector<double> gaps;  // gaps[s-1] = sigma_s - sigma_{s+1}, s = 1..rank_cap
  std::optional<DenseMatrix> scaled;
};

struct EstimateResult {
  std::array<ActionEstimate, 2> per_action;
  DenseMatrix m_hat;

  [[nodiscard]] const ActionEstimate& of(Action a) const { return per_action[index_of(a)]; }
};

/// max{ m^-1 sum_j D_ij(a), m^-1 } per unit.
[[nodiscard]] Vector empirical_row_propensity(const DenseMatrix& d, Action a);

/// D(a) .* Y^obs with row i divided by phat_i(a).
[[nodiscard]] DenseMatrix row_scaled_matrix(const ObservedPanel& obs, Action a);

/// D(a) .* Y^obs ./ p(a), entrywise.
[[nodiscard]] DenseMatrix ipw_scaled_matrix(const ObservedPanel& obs, const DenseMatrix& true_propensity, Action a);

/// Largest s <= rank_cap with sigma_s - sigma_{s+1} >= tau (sigma past the
/// end taken as 0), or 0 when there is none.
[[nodiscard]] Index select_rank(const Vector& singular_values, Index rank_cap, double tau);

[[nodiscard]] EstimateResult estimate(const ObservedPanel& obs, const EstimatorConfig& config,
                                      const PanelDesign* design = nullptr);

/// Same pipeline with entry (i, j) scaled by 1 / p_ij(a).
[[nodiscard]] EstimateResult ipw_oracle_estimate(const ObservedPanel& obs, const DenseMatrix& true_propensity,
                                                 Index rank_cap, OracleThresholds taus, const SvdParams& svd = {});

}  // namespace panelsvd
