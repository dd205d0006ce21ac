#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "formica/core.hpp"
#include "formica/spectral_field.hpp"

namespace formica {

/// Law of the i.i.d. initial states.
struct InitialLaw {
  enum class Kind { uniform, dirac, gaussian_wrapped, near_trail };
  Kind kind = Kind::uniform;
  TorusPoint center{0.5, 0.5};
  double theta = 0.0;   // dirac orientation
  double spread = 0.05; // gaussian_wrapped / near_trail positional std-dev
  double trail_angle = 0.0;  // near_trail: direction of the straight closed trail

  static Kind kind_from_string(const std::string& s);
  static std::string to_string(Kind k);
};

/// Initial chemical field c₀.
struct InitialField {
  enum class Kind { zero, ridge };
  Kind kind = Kind::zero;
  double amplitude = 0.0;  // ridge: c₀(x) = amplitude·(1 + cos(2π(n·(x − center))))
  TorusPoint center{0.5, 0.5};
  double angle = 0.0;  // ridge runs along v(angle)

  static Kind kind_from_string(const std::string& s);
  static std::string to_string(Kind k);
};

/// Per-particle random streams. The stream of particle i depends only on (seed, i).
class RngState {
 public:
  RngState(std::uint64_t seed, std::size_t n);
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return engines_.size(); }
  double normal(std::size_t i) { return normals_[i](engines_[i]); }
  double uniform(std::size_t i) { return uniforms_[i](engines_[i]); }

 private:
  std::uint64_t seed_;
  std::vector<std::mt19937_64> engines_;
  std::vector<std::normal_distribution<double>> normals_;
  std::vector<std::uniform_real_distribution<double>> uniforms_;
};

struct SimClock {
  std::int64_t step_index = 0;
  double dt = 1e-3;
  double t() const { return double(step_index) * dt; }
};

/// Numerical knobs of the particle scheme.
struct ParticleNumerics {
  int n = 1000;
  int n_f = 8;
  double dt = 1e-2;
  double eps = -1.0;  // Dirac regularization; negative means eps = dt
  RateConvention conv = RateConvention::physical;
  int resync_every = 100;  // steps between Σ own = total checks
  int threads = 1;

  double effective_eps() const { return eps < 0 ? dt : eps; }
};

/// N particles on T²₁ × T_2π with one chemical field per particle.
///
/// own_fields is (2n_f+1)² × n, column i holding particle i's field; total_field
/// is maintained incrementally and re-synchronized against Σ own_fields.
struct ParticleState {
  int n_f = 1;
  std::vector<TorusPoint> xs;
  std::vector<Angle> thetas;
  Eigen::MatrixXcd own_fields;
  CoefficientGrid total_field;

  int n() const { return int(xs.size()); }
  CoefficientGrid own_field(int i) const;
  void set_own_field(int i, const CoefficientGrid& g);
  /// Σᵢ own_fields[i] in fixed order.
  CoefficientGrid summed_fields() const;
  /// max |total − Σ own| / max(1, max |total|).
  double consistency_drift() const;
};

/// Samples n i.i.d. states from `law`; own fields start at c₀/n each.
ParticleState init(int n, int n_f, const InitialLaw& law, const InitialField& c0, RngState& rng);
ParticleState init(int n, int n_f, const InitialLaw& law, const CoefficientGrid& c0,
                   RngState& rng);

/// Coefficients of c₀ for the given initial-field description.
CoefficientGrid initial_field_coefficients(const InitialField& c0, int n_f);

/// total − own_fields[i] by a single axpy. Requires n ≥ 2.
CoefficientGrid exclusion_field(const ParticleState& state, int i);

/// Per-step bookkeeping reported by em_step.
struct StepReport {
  double zero_mode_expected = 0.0;  // scalar recurrence prediction for total(0,0)
  double zero_mode_actual = 0.0;
};

/// One Euler–Maruyama step for (X, Θ) with the field frozen at the step start,
/// followed by an implicit-Euler step of every own field with a deposit at the new
/// positions, weighted μ/(N−1). Advances `clock` by one step.
StepReport em_step(ParticleState& state, const ModelParams& params, const ParticleNumerics& num,
                   SimClock& clock, RngState& rng);

/// Snapshot consumer for run(); called with the state after each scheduled step.
using ParticleSnapshotSink = std::function<void(const ParticleState&, const SimClock&)>;

/// Which steps emit snapshots.
struct SnapshotSchedule {
  enum class Kind { stride, geometric };
  Kind kind = Kind::stride;
  int stride = 10;  // stride: every `stride` steps
  int count = 8;    // geometric: `count` roughly log-spaced steps in [1, n_steps]

  /// Sorted distinct step indices in [0, n_steps], always including 0.
  std::vector<std::int64_t> steps(std::int64_t n_steps) const;
  static Kind kind_from_string(const std::string& s);
  static std::string to_string(Kind k);
};

struct ParticleRunOutput {
  ParticleState final_state;
  std::vector<double> step_seconds;  // wall time per step
  double max_consistency_drift = 0.0;
  double max_zero_mode_error = 0.0;
  std::int64_t steps = 0;
};

/// Advances n_steps, emitting snapshots (step 0 included) through `sink`.
/// Throws InvariantError when the field bookkeeping drifts past its tolerance.
ParticleRunOutput run_particles(const ModelParams& params, const ParticleNumerics& num,
                                const InitialLaw& law, const InitialField& c0,
                                std::uint64_t seed, std::int64_t n_steps,
                                const SnapshotSchedule& schedule, const ParticleSnapshotSink& sink);

}  // namespace formica
