#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "formica/azimuthal.hpp"
#include "formica/core.hpp"

namespace formica {

/// Solves the periodic tridiagonal system
///   lower[i]·u[i-1] + diag[i]·u[i] + upper[i]·u[i+1] = rhs[i]  (indices mod n)
/// by the Thomas algorithm with a Sherman–Morrison correction for the corners.
Eigen::VectorXd solve_cyclic_tridiagonal(const Eigen::VectorXd& lower, const Eigen::VectorXd& diag,
                                         const Eigen::VectorXd& upper, const Eigen::VectorXd& rhs);

/// Density ρ(x_j, θ_k) on T₁ × T_2π and the companion field c(x_j).
///
/// x_j = j/n_x, θ_k = 2πk/n_theta. rho is n_x × n_theta.
struct DensityGrid {
  int n_x = 0;
  int n_theta = 0;
  Eigen::MatrixXd rho;
  Eigen::VectorXd c;

  static DensityGrid uniform(int n_x, int n_theta, double mass = 1.0);

  double dx() const { return 1.0 / n_x; }
  double dtheta() const { return kTwoPi / n_theta; }
  double x(int j) const { return dx() * j; }
  double theta(int k) const { return dtheta() * k; }

  double mass() const { return rho.sum() * dx() * dtheta(); }
  /// Σ_θ ρ dθ at every x_j.
  Eigen::VectorXd position_density() const { return rho.rowwise().sum() * dtheta(); }
  /// Cyclic shift by `cells` grid cells in x.
  DensityGrid shifted(int cells) const;
};

/// Discretization and solver choices for the reduced system.
struct FdOptions {
  /// Alternative coefficients: drift −χλ(sinθ c_x + sinθ cosθ c_xx), transport −cosθ ∂_x ρ.
  bool verbatim = false;
  /// First-order upwind θ-fluxes instead of centred ones.
  bool upwind = false;
  /// Clip negative excursions to zero instead of aborting.
  bool clip = false;
  double solver_tol = 1e-12;
  int max_iter = 10000;
};

struct StepDiagnostics {
  double mass_before = 0;
  double mass_after = 0;
  double min_rho = 0;
  double max_rho = 0;
  int iterations = 0;
  double residual = 0;
};

/// One split step: implicit c, centred derivatives of the new c, then the
/// implicit linearized ρ-step in conservative flux form. dt ∈ (0, 0.1].
DensityGrid step(const DensityGrid& grid, const ModelParams& params, const FdOptions& opts,
                 double dt, StepDiagnostics* diag = nullptr);

/// Discrete H¹ seminorm Σ|D_x ρ|² + |D_θ ρ|² (cell-weighted).
double h1_seminorm(const DensityGrid& grid);

using FdObserver = std::function<void(const DensityGrid&, double t, std::int64_t step)>;

struct SteadyResult {
  DensityGrid grid;
  bool converged = false;
  double t_stop = 0;
  std::int64_t steps = 0;
  double last_rate = std::numeric_limits<double>::infinity();  // ‖Δρ‖∞/dt
  double max_mass_drift = 0;  // worst per-step relative mass change
};

/// Steps until ‖ρ_{t+dt} − ρ_t‖∞/dt < tol or t reaches t_max. The observer sees
/// the initial grid (step 0) and every subsequent one.
SteadyResult run_to_steady(DensityGrid grid, const ModelParams& params, const FdOptions& opts,
                           double dt, double t_max, double tol, const FdObserver& observer = {});

/// Orientation transition operator applied at each x.
struct TransitionOp {
  enum class Kind { identity, u_turn, convolution };
  Kind kind = Kind::identity;
  AngularDensity kernel;  // convolution only; integrates to 1 on the θ-grid

  static TransitionOp identity() { return {}; }
  static TransitionOp u_turn() { return {Kind::u_turn, {}}; }
  static TransitionOp convolution(AngularDensity z);
  /// Wrapped Gaussian kernel of standard deviation `width`, normalized on the grid.
  static TransitionOp wrapped_gaussian(int n_theta, double width);

  /// J[f] row by row (rows are x, columns θ).
  Eigen::MatrixXd apply(const Eigen::MatrixXd& f) const;
  /// Weight of f(θ_src) in J[f](θ_dst).
  double weight(int dst, int src, int n_theta) const;
};

/// Affine production G[f, g] = from_alpha·f + from_beta·g, both coefficients ≥ 0.
struct ProductionSpec {
  double from_alpha = 1.0;
  double from_beta = 0.0;
};

/// Equilibrium smell d solving −γ_a d + σ_a d'' + rate = 0 on T₁ and its steering
/// contribution D(θ, x) = χ_a (−sin θ) ∂_x d.
struct SmellField {
  Eigen::VectorXd d;
  Eigen::VectorXd grad;  // centred ∂_x d
  double chi = 0;

  double drift(double theta, int j) const { return -chi * std::sin(theta) * grad[j]; }
  /// D sampled at the θ-nodes, n_x × n_theta.
  Eigen::MatrixXd drift_matrix(int n_theta) const;
};

SmellField smell_field(const Eigen::VectorXd& rate, double gamma_a, double sigma_a, double chi_a);

/// State of the two-population (foraging/returning) system.
struct TwoStateGrid {
  int n_x = 0;
  int n_theta = 0;
  Eigen::MatrixXd rho_alpha, rho_beta;
  Eigen::VectorXd c_alpha, c_beta;
  Eigen::VectorXd alpha_rate, beta_rate;  // switching rates α(x_j), β(x_j)
  SmellField d_alpha, d_beta;

  double dx() const { return 1.0 / n_x; }
  double dtheta() const { return kTwoPi / n_theta; }
  double mass_alpha() const { return rho_alpha.sum() * dx() * dtheta(); }
  double mass_beta() const { return rho_beta.sum() * dx() * dtheta(); }
  double total_mass() const { return mass_alpha() + mass_beta(); }
  DensityGrid alpha_view() const { return {n_x, n_theta, rho_alpha, c_alpha}; }
  DensityGrid beta_view() const { return {n_x, n_theta, rho_beta, c_beta}; }
};

/// One step of the two-state system. Chemical fields are advanced implicitly
/// with the affine productions; both densities and the exchange terms
/// −αρ^α + βJ[ρ^β] (and symmetric) are solved as one implicit block system.
TwoStateGrid step_two_state(const TwoStateGrid& grid, const ModelParams& params,
                            const TransitionOp& j_op, const ProductionSpec& prod_alpha,
                            const ProductionSpec& prod_beta, const FdOptions& opts, double dt,
                            StepDiagnostics* diag = nullptr);

/// ‖Σ_θ ρ dθ‖_p over x (p = ∞ allowed).
double averaged_norm(const DensityGrid& grid, double p);

struct AveragingReport {
  std::vector<double> series;
  double max_over_initial = 0;
  bool nonincreasing_after_first = true;
};

/// L^p norms of the θ-average along a history. p ∈ {2, 4, ∞}.
AveragingReport averaging_diagnostic(const std::vector<DensityGrid>& history, double p);
AveragingReport averaging_report(std::vector<double> series);

/// CSV writers: density `t,x,theta,rho`, field `t,x,c`. Header written when `header`.
void write_density_rows(std::ostream& os, const DensityGrid& grid, double t, bool header);
void write_field_rows(std::ostream& os, const DensityGrid& grid, double t, bool header);

}  // namespace formica
