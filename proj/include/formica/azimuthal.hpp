#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include <Eigen/Core>

#include "formica/core.hpp"

namespace formica {

/// Frozen terrain (p, A) seen by a single walker, with its steering constants.
struct TerrainProfile {
  Vec2d p = Vec2d::Zero();
  HessianSymd a{};
  double chi = 1.0;
  double tau = 0.0;

  double potential(double theta) const { return potential_H(theta, p, a, tau); }
  double drift(double theta) const { return drift_B(theta, p, a, tau); }
};

/// Density samples at θ_k = 2πk/n on the circle.
struct AngularDensity {
  Eigen::VectorXd values;

  int n_grid() const { return int(values.size()); }
  double dtheta() const { return kTwoPi / double(values.size()); }
  double theta(int k) const { return dtheta() * k; }
  /// Periodic trapezoidal integral over [0, 2π).
  double integral() const { return values.sum() * dtheta(); }
  /// ∫|f − g| dθ on the shared grid.
  double l1_distance(const AngularDensity& other) const;
};

enum class Regime { uniform, unimodal, bimodal, degenerate };
std::string to_string(Regime r);

/// C·exp(χH(θ)) normalized by periodic trapezoidal quadrature. n_grid ≥ 16.
AngularDensity stationary_density(const TerrainProfile& profile, int n_grid);

/// Counts strict (plateau-merged) local maxima of H on the periodic grid. n_grid ≥ 256.
Regime classify(const TerrainProfile& profile, int n_grid);

/// Uniform density on n_grid nodes.
AngularDensity uniform_density(int n_grid);

struct AutonomousSim {
  double dt = 1e-3;
  std::int64_t n_steps = 20000;
  int n_samples = 10000;
  int bins = 64;
  int threads = 1;
};

/// Euler–Maruyama for dΦ = χB(Φ)dt + √2 dW on the circle, n_samples independent
/// paths started uniformly. Returns the normalized occupation histogram of the
/// second half of the run, bin k centred at 2πk/bins.
AngularDensity simulate_autonomous(const TerrainProfile& profile, const AutonomousSim& sim,
                                   std::uint64_t seed);

/// CSV `theta,value`.
void write_density_csv(std::ostream& os, const AngularDensity& d);

}  // namespace formica
