#include "formica/azimuthal.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

namespace formica {

double AngularDensity::l1_distance(const AngularDensity& other) const {
  if (other.n_grid() != n_grid()) throw std::invalid_argument("l1_distance: grid mismatch");
  return (values - other.values).cwiseAbs().sum() * dtheta();
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::uniform: return "uniform";
    case Regime::unimodal: return "unimodal";
    case Regime::bimodal: return "bimodal";
    case Regime::degenerate: return "degenerate";
  }
  return "degenerate";
}

AngularDensity uniform_density(int n_grid) {
  return {Eigen::VectorXd::Constant(n_grid, 1.0 / kTwoPi)};
}

AngularDensity stationary_density(const TerrainProfile& profile, int n_grid) {
  if (n_grid < 16) throw std::invalid_argument("stationary_density: n_grid must be >= 16");
  AngularDensity d{Eigen::VectorXd(n_grid)};
  Eigen::VectorXd exponent(n_grid);
  for (int k = 0; k < n_grid; ++k) exponent[k] = profile.chi * profile.potential(d.theta(k));
  // Shift by the maximum so the largest term is exp(0).
  d.values = (exponent.array() - exponent.maxCoeff()).exp().matrix();
  d.values /= d.integral();
  return d;
}

Regime classify(const TerrainProfile& profile, int n_grid) {
  if (n_grid < 256) throw std::invalid_argument("classify: n_grid must be >= 256");
  std::vector<double> h(n_grid);
  for (int k = 0; k < n_grid; ++k) h[k] = profile.potential(kTwoPi * k / n_grid);
  const auto [lo, hi] = std::minmax_element(h.begin(), h.end());
  const double range = *hi - *lo;
  if (range < 1e-12) return Regime::uniform;

  // Merge plateaus: consecutive samples within a tiny fraction of the range.
  const double flat = 1e-13 * range;
  std::vector<double> runs;
  for (double v : h)
    if (runs.empty() || std::abs(v - runs.back()) > flat) runs.push_back(v);
  while (runs.size() > 1 && std::abs(runs.front() - runs.back()) <= flat) runs.pop_back();

  const std::size_t m = runs.size();
  int maxima = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double prev = runs[(k + m - 1) % m];
    const double next = runs[(k + 1) % m];
    if (runs[k] > prev && runs[k] > next) ++maxima;
  }
  if (maxima == 1) return Regime::unimodal;
  if (maxima == 2) return Regime::bimodal;
  return Regime::degenerate;
}

AngularDensity simulate_autonomous(const TerrainProfile& profile, const AutonomousSim& sim,
                                   std::uint64_t seed) {
  if (sim.bins < 1 || sim.n_samples < 1 || sim.n_steps < 2 || !(sim.dt > 0))
    throw std::invalid_argument("simulate_autonomous: bad simulation settings");

  const double noise = std::sqrt(2.0 * sim.dt);
  // B(θ) = −p₁ sin θ + p₂ cos θ + τ((a₂₂ − a₁₁)/2 · sin 2θ + a₁₂ cos 2θ), premultiplied by χ dt.
  const double k1 = -profile.chi * profile.p.x() * sim.dt;
  const double k2 = profile.chi * profile.p.y() * sim.dt;
  const double k3 = profile.chi * profile.tau * 0.5 * (profile.a.a22 - profile.a.a11) * sim.dt;
  const double k4 = profile.chi * profile.tau * profile.a.a12 * sim.dt;
  const double bin_width = kTwoPi / sim.bins;
  const std::int64_t burn_in = sim.n_steps / 2;
  std::vector<std::int64_t> counts(sim.bins, 0);

  // Paths advance in lanes of kLanes so independent chains overlap in the pipeline.
  constexpr int kLanes = 8;
  const int n_blocks = (sim.n_samples + kLanes - 1) / kLanes;

#pragma omp parallel num_threads(std::max(1, sim.threads))
  {
    std::vector<std::int64_t> local(sim.bins, 0);
#pragma omp for schedule(static)
    for (int block = 0; block < n_blocks; ++block) {
      const int first = block * kLanes;
      const int lanes = std::min(kLanes, sim.n_samples - first);
      std::vector<std::mt19937_64> engines;
      std::vector<std::normal_distribution<double>> normals(lanes);
      double phi[kLanes] = {};
      for (int l = 0; l < lanes; ++l) {
        const auto path = std::uint32_t(first + l);
        std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), path, 0x617a696du};
        engines.emplace_back(seq);
        phi[l] = std::uniform_real_distribution<double>(0.0, kTwoPi)(engines[l]);
      }
      for (std::int64_t step = 0; step < sim.n_steps; ++step) {
        for (int l = 0; l < lanes; ++l) {
          const double s = std::sin(phi[l]), c = std::cos(phi[l]);
          phi[l] += k1 * s + k2 * c + k3 * 2.0 * s * c + k4 * (c * c - s * s) +
                    noise * normals[l](engines[l]);
          phi[l] = wrap_periodic(phi[l], kTwoPi);
          if (step >= burn_in) {
            int k = int((phi[l] + 0.5 * bin_width) / bin_width);
            if (k >= sim.bins) k -= sim.bins;
            ++local[k];
          }
        }
      }
    }
#pragma omp critical
    for (int k = 0; k < sim.bins; ++k) counts[k] += local[k];
  }

  double total = 0;
  for (auto c : counts) total += double(c);
  AngularDensity d{Eigen::VectorXd(sim.bins)};
  for (int k = 0; k < sim.bins; ++k) d.values[k] = double(counts[k]) / (total * bin_width);
  return d;
}

void write_density_csv(std::ostream& os, const AngularDensity& d) {
  os << "theta,value\n" << std::setprecision(17);
  for (int k = 0; k < d.n_grid(); ++k) os << d.theta(k) << ',' << d.values[k] << '\n';
}

}  // namespace formica
