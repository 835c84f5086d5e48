#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "panelsvd/linalg.hpp"

namespace panelsvd {

enum class Action : int { control = 0, treated = 1 };
inline constexpr std::array<Action, 2> kActions{Action::control, Action::treated};
constexpr std::size_t index_of(Action a) noexcept { return static_cast<std::size_t>(a); }

/// Smallest per-entry propensity a design may carry (and 1 minus it the largest).
inline constexpr double kPropensityFloor = 1e-3;

enum class DesignFamily { constant, row_homogeneous, nonuniform };
enum class PerturbationLaw { uniform, two_point };

[[nodiscard]] std::string to_string(DesignFamily f);
[[nodiscard]] std::string to_string(PerturbationLaw l);
[[nodiscard]] DesignFamily parse_design_family(const std::string& s);
[[nodiscard]] PerturbationLaw parse_perturbation_law(const std::string& s);

struct DesignSpec {
  DesignFamily family = DesignFamily::constant;
  double constant = 0.5;              // constant family
  double p_low = 0.4;                 // row_homogeneous / nonuniform base rates
  double p_high = 0.6;
  double nu = 0.5;                    // nonuniform: target max_a ||P(a)||_op / (sqrt m + sqrt n)
  std::optional<double> strength;     // nonuniform: explicit perturbation scale in [0, 1], overrides nu
  PerturbationLaw law = PerturbationLaw::uniform;
  double epsilon = 0.05;              // per-entry floor/ceiling for generated propensities
  double reach = 0.9;                 // nonuniform: fraction of the room to [epsilon, 1 - epsilon] the law may use
};

/// The assignment mechanism: per-entry treatment probabilities.
class PanelDesign {
 public:
  PanelDesign(DenseMatrix propensity, DesignFamily family);

  [[nodiscard]] Index n_units() const noexcept { return propensity_.rows(); }
  [[nodiscard]] Index n_times() const noexcept { return propensity_.cols(); }
  [[nodiscard]] const DenseMatrix& propensity() const noexcept { return propensity_; }
  [[nodiscard]] DesignFamily family() const noexcept { return family_; }

  // Generation metadata, filled by build_design for nonuniform designs.
  double nu_realized = 0.0;
  double strength = 0.0;
  Index clip_count = 0;

 private:
  DenseMatrix propensity_;
  DesignFamily family_;
};

enum class Spectrum { linear_decay, geometric_decay, flat_with_gap };

[[nodiscard]] std::string to_string(Spectrum s);
[[nodiscard]] Spectrum parse_spectrum(const std::string& s);

struct SignalSpec {
  Index n = 0;
  Index m = 0;
  Index rank = 1;
  double k_a = 1.0;
  Spectrum spectrum = Spectrum::flat_with_gap;
  double snr_floor = 0.0;  // required sigma_1 of each planted matrix; 0 disables the check
};

struct SignalPair {
  DenseMatrix a0;
  DenseMatrix a1;
  Index rank = 0;
  double k_a = 0.0;
  Vector singular_values_0;  // recomputed after rescaling
  Vector singular_values_1;

  [[nodiscard]] const DenseMatrix& of(Action a) const { return a == Action::treated ? a1 : a0; }
};

enum class NoiseLaw { uniform_symmetric, rademacher_scaled };

[[nodiscard]] std::string to_string(NoiseLaw l);
[[nodiscard]] NoiseLaw parse_noise_law(const std::string& s);

struct NoisePair {
  DenseMatrix e0;
  DenseMatrix e1;
  double k_e = 0.0;
  NoiseLaw law = NoiseLaw::uniform_symmetric;

  [[nodiscard]] const DenseMatrix& of(Action a) const { return a == Action::treated ? e1 : e0; }
  /// Per-entry variance of the law.
  [[nodiscard]] double variance() const noexcept;
};

struct PanelInstance {
  PanelDesign design;
  SignalPair signal;
  NoisePair noise;
  DenseMatrix assignments;  // D, entries in {0, 1}
  DenseMatrix y0;
  DenseMatrix y1;
  std::uint64_t seed = 0;

  [[nodiscard]] const DenseMatrix& outcomes(Action a) const { return a == Action::treated ? y1 : y0; }
  /// M = A(1) - A(0)
  [[nodiscard]] Matrix effect() const { return signal.a1.values() - signal.a0.values(); }
};

/// What the estimator is allowed to see.
class ObservedPanel {
 public:
  ObservedPanel(DenseMatrix y_obs, DenseMatrix assignments);
  /// Assembles Y^obs from the instance and checks the masking invariant.
  static ObservedPanel from_instance(const PanelInstance& instance);

  [[nodiscard]] const DenseMatrix& y_obs() const noexcept { return y_obs_; }
  [[nodiscard]] const DenseMatrix& assignments() const noexcept { return assignments_; }
  [[nodiscard]] Index n_units() const noexcept { return y_obs_.rows(); }
  [[nodiscard]] Index n_times() const noexcept { return y_obs_.cols(); }

 private:
  DenseMatrix y_obs_;
  DenseMatrix assignments_;
};

/// D(a): D for the treated arm, 1 - D for control.
[[nodiscard]] Matrix action_mask(const DenseMatrix& d, Action a);
/// p(a): p for the treated arm, 1 - p for control.
[[nodiscard]] Matrix action_propensity(const DenseMatrix& p, Action a);
/// Row means of p(a).
[[nodiscard]] Vector row_mean_propensity(const DenseMatrix& p, Action a);
/// P(a)_ij = p_ij(a) / pbar_i(a) - 1; every row sums to zero.
[[nodiscard]] Matrix deviation_matrix(const DenseMatrix& p, Action a);

[[nodiscard]] SignalPair generate_signal(const SignalSpec& spec, std::uint64_t seed);
[[nodiscard]] NoisePair generate_noise(Index n, Index m, double k_e, NoiseLaw law, std::uint64_t seed);
[[nodiscard]] PanelDesign build_design(Index n, Index m, const DesignSpec& spec, std::uint64_t seed);
[[nodiscard]] DenseMatrix draw_assignments(const PanelDesign& design, std::uint64_t seed);
[[nodiscard]] std::pair<PanelInstance, ObservedPanel> realize(const PanelDesign& design, const SignalPair& signal,
                                                              const NoisePair& noise, std::uint64_t seed);

}  // namespace panelsvd
