#include "panelsvd/panel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "panelsvd/errors.hpp"
#include "panelsvd/rng.hpp"

namespace panelsvd {

namespace {

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  std::string known;
  for (const auto& [name, value] : table) {
    if (s == name) return value;
    known += known.empty() ? name : std::string(", ") + name;
  }
  throw ValidationError("unknown " + std::string(what) + " '" + s + "' (expected one of: " + known + ")");
}

bool is_binary(const Matrix& d) {
  return (d.array() == 0.0 || d.array() == 1.0).all();
}

double spectral_scale(const Matrix& p0, const Matrix& p1, Index n, Index m) {
  const double denom = std::sqrt(static_cast<double>(m)) + std::sqrt(static_cast<double>(n));
  return std::max(norm(p0, NormKind::operator_norm), norm(p1, NormKind::operator_norm)) / denom;
}

}  // namespace

std::string to_string(DesignFamily f) {
  switch (f) {
    case DesignFamily::constant: return "constant";
    case DesignFamily::row_homogeneous: return "row_homogeneous";
    case DesignFamily::nonuniform: return "nonuniform";
  }
  return "?";
}

std::string to_string(PerturbationLaw l) {
  return l == PerturbationLaw::uniform ? "uniform" : "two_point";
}

std::string to_string(Spectrum s) {
  switch (s) {
    case Spectrum::linear_decay: return "linear_decay";
    case Spectrum::geometric_decay: return "geometric_decay";
    case Spectrum::flat_with_gap: return "flat_with_gap";
  }
  return "?";
}

std::string to_string(NoiseLaw l) {
  return l == NoiseLaw::uniform_symmetric ? "uniform_symmetric" : "rademacher_scaled";
}

DesignFamily parse_design_family(const std::string& s) {
  return parse_enum<DesignFamily>(s,
                                  {{"constant", DesignFamily::constant},
                                   {"row_homogeneous", DesignFamily::row_homogeneous},
                                   {"nonuniform", DesignFamily::nonuniform}},
                                  "design family");
}

PerturbationLaw parse_perturbation_law(const std::string& s) {
  return parse_enum<PerturbationLaw>(
      s, {{"uniform", PerturbationLaw::uniform}, {"two_point", PerturbationLaw::two_point}}, "perturbation law");
}

Spectrum parse_spectrum(const std::string& s) {
  return parse_enum<Spectrum>(s,
                              {{"linear_decay", Spectrum::linear_decay},
                               {"geometric_decay", Spectrum::geometric_decay},
                               {"flat_with_gap", Spectrum::flat_with_gap}},
                              "spectrum");
}

NoiseLaw parse_noise_law(const std::string& s) {
  return parse_enum<NoiseLaw>(
      s, {{"uniform_symmetric", NoiseLaw::uniform_symmetric}, {"rademacher_scaled", NoiseLaw::rademacher_scaled}},
      "noise law");
}

PanelDesign::PanelDesign(DenseMatrix propensity, DesignFamily family)
    : propensity_(std::move(propensity)), family_(family) {
  const Matrix& p = propensity_.values();
  require(p.size() > 0, "design must be non-empty");
  require(p.minCoeff() >= kPropensityFloor && p.maxCoeff() <= 1.0 - kPropensityFloor,
          "propensities must lie in [1e-3, 1 - 1e-3]");
  if (family_ == DesignFamily::constant)
    require((p.array() == p(0, 0)).all(), "constant design has unequal entries");
  if (family_ == DesignFamily::row_homogeneous)
    for (Index i = 0; i < p.rows(); ++i)
      require((p.row(i).array() == p(i, 0)).all(), "row-homogeneous design has a non-constant row");
}

double NoisePair::variance() const noexcept {
  return law == NoiseLaw::uniform_symmetric ? k_e * k_e / 3.0 : k_e * k_e;
}

ObservedPanel::ObservedPanel(DenseMatrix y_obs, DenseMatrix assignments)
    : y_obs_(std::move(y_obs)), assignments_(std::move(assignments)) {
  require(y_obs_.rows() == assignments_.rows() && y_obs_.cols() == assignments_.cols(),
          "observed outcomes and assignments differ in shape");
  require(y_obs_.rows() > 0 && y_obs_.cols() > 0, "observed panel must be non-empty");
  require(is_binary(assignments_.values()), "assignments must be 0/1");
}

ObservedPanel ObservedPanel::from_instance(const PanelInstance& instance) {
  const Matrix& d = instance.assignments.values();
  const Matrix& y1 = instance.y1.values();
  const Matrix& y0 = instance.y0.values();
  Matrix y = Matrix::Zero(d.rows(), d.cols());
  for (Index j = 0; j < d.cols(); ++j)
    for (Index i = 0; i < d.rows(); ++i) y(i, j) = d(i, j) == 1.0 ? y1(i, j) : y0(i, j);
  ObservedPanel out(DenseMatrix(std::move(y)), instance.assignments);
  for (Index j = 0; j < d.cols(); ++j)
    for (Index i = 0; i < d.rows(); ++i) {
      const double expected = d(i, j) == 1.0 ? y1(i, j) : y0(i, j);
      if (out.y_obs()(i, j) != expected) throw std::logic_error("masking invariant violated");
    }
  return out;
}

Matrix action_mask(const DenseMatrix& d, Action a) {
  return a == Action::treated ? d.values() : Matrix((1.0 - d.values().array()).matrix());
}

Matrix action_propensity(const DenseMatrix& p, Action a) {
  return a == Action::treated ? p.values() : Matrix((1.0 - p.values().array()).matrix());
}

Vector row_mean_propensity(const DenseMatrix& p, Action a) {
  const Matrix pa = action_propensity(p, a);
  Vector out = pa.rowwise().mean();
  // A constant row has its value as mean; summation rounding must not
  // break P(a) = 0 for row-homogeneous designs.
  for (Index i = 0; i < pa.rows(); ++i)
    if ((pa.row(i).array() == pa(i, 0)).all()) out(i) = pa(i, 0);
  return out;
}

Matrix deviation_matrix(const DenseMatrix& p, Action a) {
  const Matrix pa = action_propensity(p, a);
  const Vector pbar = row_mean_propensity(p, a);
  Matrix out = pa;
  for (Index i = 0; i < pa.rows(); ++i) out.row(i) = pa.row(i).array() / pbar(i) - 1.0;
  return out;
}

SignalPair generate_signal(const SignalSpec& spec, std::uint64_t seed) {
  require(spec.n >= 2 && spec.m >= 2, "signal needs n, m >= 2");
  require(spec.rank >= 1, "rank must be at least 1");
  require(spec.rank <= std::min(spec.n, spec.m), "rank " + std::to_string(spec.rank) + " exceeds min(n, m) = " +
                                                     std::to_string(std::min(spec.n, spec.m)));
  require(spec.k_a > 0.0 && std::isfinite(spec.k_a), "k_a must be positive");
  require(spec.snr_floor >= 0.0, "snr floor must be nonnegative");

  const Index r = spec.rank;
  Vector shape(r);
  for (Index l = 0; l < r; ++l) {
    switch (spec.spectrum) {
      case Spectrum::flat_with_gap: shape(l) = 1.0; break;
      case Spectrum::linear_decay: shape(l) = static_cast<double>(r - l) / static_cast<double>(r); break;
      case Spectrum::geometric_decay: shape(l) = std::ldexp(1.0, -static_cast<int>(l)); break;
    }
  }

  SignalPair out;
  out.rank = r;
  out.k_a = spec.k_a;
  for (Action a : kActions) {
    const auto tag = static_cast<std::uint64_t>(index_of(a));
    const Matrix u = orthonormalize(gaussian_matrix(spec.n, r, derive_seed(seed, {tag, 0})));
    const Matrix v = orthonormalize(gaussian_matrix(spec.m, r, derive_seed(seed, {tag, 1})));
    Matrix planted = u * shape.asDiagonal() * v.transpose();
    planted *= spec.k_a / planted.cwiseAbs().maxCoeff();
    DenseMatrix mat(std::move(planted));
    Vector values = svd_truncated(mat, r).values;
    if (spec.snr_floor > 0.0 && values(0) < spec.snr_floor) {
      std::ostringstream msg;
      msg.precision(6);
      msg << "SNR floor unreachable for action " << index_of(a) << ": entry bound k_a = " << spec.k_a
          << " caps the planted sigma_1 at " << values(0) << " but the floor requires " << spec.snr_floor;
      throw InfeasibleError(msg.str());
    }
    if (a == Action::treated) {
      out.a1 = std::move(mat);
      out.singular_values_1 = std::move(values);
    } else {
      out.a0 = std::move(mat);
      out.singular_values_0 = std::move(values);
    }
  }
  return out;
}

NoisePair generate_noise(Index n, Index m, double k_e, NoiseLaw law, std::uint64_t seed) {
  require(n > 0 && m > 0, "noise shape must be positive");
  require(k_e >= 0.0 && std::isfinite(k_e), "k_e must be nonnegative");
  NoisePair out;
  out.k_e = k_e;
  out.law = law;
  for (Action a : kActions) {
    Matrix e = Matrix::Zero(n, m);
    if (k_e > 0.0) {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(index_of(a))}));
      std::uniform_real_distribution<double> uni(-k_e, k_e);
      std::bernoulli_distribution coin(0.5);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < m; ++j)
          e(i, j) = law == NoiseLaw::uniform_symmetric ? uni(rng) : (coin(rng) ? k_e : -k_e);
    }
    (a == Action::treated ? out.e1 : out.e0) = DenseMatrix(std::move(e));
  }
  return out;
}

PanelDesign build_design(Index n, Index m, const DesignSpec& spec, std::uint64_t seed) {
  require(n > 0 && m > 0, "design shape must be positive");
  const double eps = spec.epsilon;
  require(eps >= kPropensityFloor && eps < 0.5, "epsilon must lie in [1e-3, 0.5)");
  auto inside = [eps](double p) { return p >= eps && p <= 1.0 - eps; };
  Rng rng(seed);

  if (spec.family == DesignFamily::constant) {
    require(inside(spec.constant), "constant propensity outside [epsilon, 1 - epsilon]");
    return PanelDesign(DenseMatrix(Matrix::Constant(n, m, spec.constant)), DesignFamily::constant);
  }

  require(spec.p_low <= spec.p_high, "p_low exceeds p_high");
  require(inside(spec.p_low) && inside(spec.p_high), "base propensity interval outside [epsilon, 1 - epsilon]");
  std::uniform_real_distribution<double> base_draw(spec.p_low, spec.p_high);
  Vector base(n);
  for (Index i = 0; i < n; ++i) base(i) = spec.p_low == spec.p_high ? spec.p_low : base_draw(rng);

  if (spec.family == DesignFamily::row_homogeneous) {
    Matrix p(n, m);
    for (Index i = 0; i < n; ++i) p.row(i).setConstant(base(i));
    return PanelDesign(DenseMatrix(std::move(p)), DesignFamily::row_homogeneous);
  }

  require(spec.nu >= 0.0, "nu must be nonnegative");
  if (spec.strength) require(*spec.strength >= 0.0 && *spec.strength <= 1.0, "strength must lie in [0, 1]");

  // Multiplicative perturbation p_ij = p_i (1 + theta xi_ij) with each row
  // of xi centered, so that without clipping P(1) = theta xi and
  // P(0) = -theta p_i xi / (1 - p_i), both linear in theta.
  require(spec.reach > 0.0 && spec.reach <= 1.0, "reach must lie in (0, 1]");
  Matrix xi(n, m);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const double lo = spec.reach * (eps / base(i) - 1.0);
    const double hi = spec.reach * ((1.0 - eps) / base(i) - 1.0);
    const double half = std::min(-lo, hi);
    const double up = -lo / (hi - lo);  // P(xi = hi) for the mean-zero two-point law
    for (Index j = 0; j < m; ++j) {
      const double u = unit(rng);
      xi(i, j) = spec.law == PerturbationLaw::uniform ? half * (2.0 * u - 1.0) : (u < up ? hi : lo);
    }
    xi.row(i).array() -= xi.row(i).mean();
  }

  const double denom = std::sqrt(static_cast<double>(m)) + std::sqrt(static_cast<double>(n));
  Matrix xi0 = xi;
  for (Index i = 0; i < n; ++i) xi0.row(i) *= -base(i) / (1.0 - base(i));
  const double full_scale =
      std::max(norm(xi, NormKind::operator_norm), norm(xi0, NormKind::operator_norm)) / denom;

  double theta = 0.0;
  if (spec.strength) {
    theta = *spec.strength;
  } else if (spec.nu > 0.0) {
    if (full_scale < 0.8 * spec.nu) {
      std::ostringstream msg;
      msg.precision(4);
      msg << "requested nu = " << spec.nu << " infeasible: the " << to_string(spec.law)
          << " perturbation law within [epsilon, 1 - epsilon] (epsilon = " << eps << ") reaches at most "
          << full_scale;
      throw InfeasibleError(msg.str());
    }
    theta = std::min(1.0, spec.nu / full_scale);
  }

  Matrix p(n, m);
  Index clipped = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      const double raw = base(i) * (1.0 + theta * xi(i, j));
      const double c = std::clamp(raw, eps, 1.0 - eps);
      if (c != raw) ++clipped;
      p(i, j) = c;
    }

  PanelDesign design(DenseMatrix(std::move(p)), DesignFamily::nonuniform);
  design.strength = theta;
  design.clip_count = clipped;
  design.nu_realized = spectral_scale(deviation_matrix(design.propensity(), Action::control),
                                      deviation_matrix(design.propensity(), Action::treated), n, m);
  if (!spec.strength && spec.nu > 0.0 && std::abs(design.nu_realized - spec.nu) > 0.2 * spec.nu) {
    std::ostringstream msg;
    msg.precision(4);
    msg << "requested nu = " << spec.nu << " infeasible under clipping: realized " << design.nu_realized
        << " after clipping " << clipped << " entries";
    throw InfeasibleError(msg.str());
  }
  return design;
}

DenseMatrix draw_assignments(const PanelDesign& design, std::uint64_t seed) {
  const Matrix& p = design.propensity().values();
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix d(p.rows(), p.cols());
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) d(i, j) = unit(rng) < p(i, j) ? 1.0 : 0.0;
  return DenseMatrix(std::move(d));
}

std::pair<PanelInstance, ObservedPanel> realize(const PanelDesign& design, const SignalPair& signal,
                                                const NoisePair& noise, std::uint64_t seed) {
  const Index n = design.n_units();
  const Index m = design.n_times();
  auto same = [n, m](const DenseMatrix& x) { return x.rows() == n && x.cols() == m; };
  require(same(signal.a0) && same(signal.a1), "signal shape does not match the design");
  require(same(noise.e0) && same(noise.e1), "noise shape does not match the design");

  DenseMatrix y0(Matrix(signal.a0.values() + noise.e0.values()));
  DenseMatrix y1(Matrix(signal.a1.values() + noise.e1.values()));
  PanelInstance instance{design, signal, noise, draw_assignments(design, seed), std::move(y0), std::move(y1), seed};
  ObservedPanel observed = ObservedPanel::from_instance(instance);
  return {std::move(instance), std::move(observed)};
}

}  // namespace panelsvd
