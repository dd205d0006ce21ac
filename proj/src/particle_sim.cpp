#include "formica/particle_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "formica/errors.hpp"

namespace formica {
namespace {

// Particles per block of the deterministic source reduction. Fixed so that the
// summation order never depends on the thread count.
constexpr int kReductionBlock = 64;

constexpr double kConsistencyTol = 1e-9;
constexpr double kZeroModeTol = 1e-12;

}  // namespace

InitialLaw::Kind InitialLaw::kind_from_string(const std::string& s) {
  if (s == "uniform") return Kind::uniform;
  if (s == "dirac") return Kind::dirac;
  if (s == "gaussian_wrapped") return Kind::gaussian_wrapped;
  if (s == "near_trail") return Kind::near_trail;
  throw std::invalid_argument("unknown initial law: " + s);
}

std::string InitialLaw::to_string(Kind k) {
  switch (k) {
    case Kind::uniform: return "uniform";
    case Kind::dirac: return "dirac";
    case Kind::gaussian_wrapped: return "gaussian_wrapped";
    case Kind::near_trail: return "near_trail";
  }
  return "uniform";
}

InitialField::Kind InitialField::kind_from_string(const std::string& s) {
  if (s == "zero") return Kind::zero;
  if (s == "ridge") return Kind::ridge;
  throw std::invalid_argument("unknown initial field: " + s);
}

std::string InitialField::to_string(Kind k) { return k == Kind::zero ? "zero" : "ridge"; }

RngState::RngState(std::uint64_t seed, std::size_t n) : seed_(seed) {
  engines_.reserve(n);
  normals_.assign(n, std::normal_distribution<double>(0.0, 1.0));
  uniforms_.assign(n, std::uniform_real_distribution<double>(0.0, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(i),
                      std::uint32_t(std::uint64_t(i) >> 32), 0x666f726du};
    engines_.emplace_back(seq);
  }
}

CoefficientGrid ParticleState::own_field(int i) const {
  CoefficientGrid g(n_f);
  g.coeffs() = own_fields.col(i);
  return g;
}

void ParticleState::set_own_field(int i, const CoefficientGrid& g) {
  if (g.n_f() != n_f) throw std::invalid_argument("set_own_field: n_f mismatch");
  own_fields.col(i) = g.coeffs();
}

CoefficientGrid ParticleState::summed_fields() const {
  CoefficientGrid g(n_f);
  for (Eigen::Index i = 0; i < own_fields.cols(); ++i) g.coeffs() += own_fields.col(i);
  return g;
}

double ParticleState::consistency_drift() const {
  const CoefficientGrid s = summed_fields();
  const double scale = std::max(1.0, total_field.coeffs().cwiseAbs().maxCoeff());
  return (s.coeffs() - total_field.coeffs()).cwiseAbs().maxCoeff() / scale;
}

CoefficientGrid initial_field_coefficients(const InitialField& c0, int n_f) {
  CoefficientGrid g(n_f);
  if (c0.kind == InitialField::Kind::zero) return g;

  // The ridge profile varies along the unit normal, which must be a lattice vector.
  const Vec2d normal = unit_normal(c0.angle);
  const int k1 = int(std::lround(normal.x()));
  const int k2 = int(std::lround(normal.y()));
  if (std::abs(normal.x() - k1) > 1e-9 || std::abs(normal.y() - k2) > 1e-9)
    throw std::invalid_argument("ridge angle must be a multiple of pi/2");
  g.at(0, 0) = c0.amplitude;
  const Complex half = 0.5 * c0.amplitude *
                       std::polar(1.0, -kTwoPi * (k1 * c0.center.x1() + k2 * c0.center.x2()));
  g.at(k1, k2) += half;
  g.at(-k1, -k2) += std::conj(half);
  return g;
}

ParticleState init(int n, int n_f, const InitialLaw& law, const CoefficientGrid& c0,
                   RngState& rng) {
  if (n < 2) throw std::invalid_argument("init: need at least 2 particles");
  if (c0.n_f() != n_f) throw std::invalid_argument("init: c0 has wrong n_f");
  if (rng.size() < std::size_t(n)) throw std::invalid_argument("init: rng has too few streams");

  ParticleState s;
  s.n_f = n_f;
  s.xs.resize(n);
  s.thetas.resize(n);
  for (int i = 0; i < n; ++i) {
    switch (law.kind) {
      case InitialLaw::Kind::uniform: {
        const double x1 = rng.uniform(i);
        const double x2 = rng.uniform(i);
        s.xs[i] = TorusPoint(x1, x2);
        s.thetas[i] = Angle(kTwoPi * rng.uniform(i));
        break;
      }
      case InitialLaw::Kind::dirac:
        s.xs[i] = law.center;
        s.thetas[i] = Angle(law.theta);
        break;
      case InitialLaw::Kind::gaussian_wrapped: {
        const double d1 = law.spread * rng.normal(i);
        const double d2 = law.spread * rng.normal(i);
        s.xs[i] = TorusPoint(law.center.x1() + d1, law.center.x2() + d2);
        s.thetas[i] = Angle(kTwoPi * rng.uniform(i));
        break;
      }
      case InitialLaw::Kind::near_trail: {
        const Vec2d along = unit_direction(law.trail_angle);
        const Vec2d across = unit_normal(law.trail_angle);
        const double u = rng.uniform(i);
        const double off = law.spread * rng.normal(i);
        const Vec2d p = law.center.vec() + u * along + off * across;
        s.xs[i] = TorusPoint(p.x(), p.y());
        const double flip = rng.uniform(i) < 0.5 ? 0.0 : kPi;
        s.thetas[i] = Angle(law.trail_angle + flip + 0.1 * rng.normal(i));
        break;
      }
    }
  }
  s.own_fields.resize(c0.size(), n);
  for (int i = 0; i < n; ++i) s.own_fields.col(i) = c0.coeffs() / double(n);
  s.total_field = s.summed_fields();
  return s;
}

ParticleState init(int n, int n_f, const InitialLaw& law, const InitialField& c0,
                   RngState& rng) {
  return init(n, n_f, law, initial_field_coefficients(c0, n_f), rng);
}

CoefficientGrid exclusion_field(const ParticleState& state, int i) {
  if (state.n() < 2) throw std::invalid_argument("exclusion_field: need n >= 2");
  if (i < 0 || i >= state.n()) throw std::out_of_range("exclusion_field: bad particle index");
  return axpy(state.total_field, -1.0, state.own_field(i));
}

StepReport em_step(ParticleState& state, const ModelParams& params, const ParticleNumerics& num,
                   SimClock& clock, RngState& rng) {
  const int n = state.n();
  const int n_f = state.n_f;
  const Eigen::Index modes = state.total_field.size();
  const double dt = clock.dt;
  if (!(dt > 0)) throw std::invalid_argument("em_step: dt must be > 0");
  if (n < 2) throw std::invalid_argument("em_step: need n >= 2");

  const double noise_theta = std::sqrt(2.0 * params.sigma_theta * dt);
  const double noise_x = std::sqrt(2.0 * params.sigma_x * dt);
  const Complex* total = state.total_field.coeffs().data();

  // Move every particle with the field frozen at the start of the step.
#pragma omp parallel num_threads(std::max(1, num.threads))
  {
    Eigen::VectorXcd scratch(modes);
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      scratch = Eigen::Map<const Eigen::VectorXcd>(total, modes) - state.own_fields.col(i);
      const FieldProbe probe = eval_probe(scratch.data(), n_f, state.xs[i]);
      const double theta = state.thetas[i].value();
      const double b = drift_B(theta, probe.grad, probe.hess, params.tau);
      const double eta = rng.normal(i);
      const double w1 = rng.normal(i);
      const double w2 = rng.normal(i);
      const Vec2d v = unit_direction(theta);
      state.thetas[i] = Angle(theta + params.chi * b * dt + noise_theta * eta);
      state.xs[i] = TorusPoint(state.xs[i].x1() + params.lambda * v.x() * dt + noise_x * w1,
                               state.xs[i].x2() + params.lambda * v.y() * dt + noise_x * w2);
    }
  }

  // Deposit at the new positions; implicit decay of each own field.
  const Eigen::VectorXcd factor =
      decay_factors(n_f, dt, params.gamma, params.sigma_c, num.conv).cast<Complex>();
  const double weight = params.mu / double(n - 1);
  const double eps = num.effective_eps();
  const int blocks = (n + kReductionBlock - 1) / kReductionBlock;
  Eigen::MatrixXcd block_sums = Eigen::MatrixXcd::Zero(modes, blocks);

#pragma omp parallel num_threads(std::max(1, num.threads))
  {
    Eigen::VectorXcd src(modes);
#pragma omp for schedule(static)
    for (int b = 0; b < blocks; ++b) {
      const int lo = b * kReductionBlock;
      const int hi = std::min(n, lo + kReductionBlock);
      for (int i = lo; i < hi; ++i) {
        dirac_coefficients_into(state.xs[i], eps, params.sigma_c, n_f, num.conv, weight,
                                src.data());
        state.own_fields.col(i) = (state.own_fields.col(i) + dt * src).cwiseProduct(factor);
        block_sums.col(b) += src;
      }
    }
  }

  Eigen::VectorXcd source_sum = Eigen::VectorXcd::Zero(modes);
  for (int b = 0; b < blocks; ++b) source_sum += block_sums.col(b);

  StepReport report;
  const Eigen::Index zero = state.total_field.index(0, 0);
  const double before = state.total_field.coeffs()[zero].real();
  state.total_field.coeffs() = (state.total_field.coeffs() + dt * source_sum).cwiseProduct(factor);
  report.zero_mode_expected =
      (before + dt * params.mu * double(n) / double(n - 1)) / (1.0 + dt * params.gamma);
  report.zero_mode_actual = state.total_field.coeffs()[zero].real();

  ++clock.step_index;
  return report;
}

std::vector<std::int64_t> SnapshotSchedule::steps(std::int64_t n_steps) const {
  std::vector<std::int64_t> out{0};
  if (n_steps <= 0) return out;
  if (kind == Kind::stride) {
    const std::int64_t s = std::max(1, stride);
    for (std::int64_t k = s; k <= n_steps; k += s) out.push_back(k);
  } else if (count >= 2) {
    for (int k = 0; k < count; ++k) {
      const double e = std::log(double(n_steps)) * double(k) / double(count - 1);
      out.push_back(std::clamp<std::int64_t>(std::llround(std::exp(e)), 1, n_steps));
    }
  }
  out.push_back(n_steps);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SnapshotSchedule::Kind SnapshotSchedule::kind_from_string(const std::string& s) {
  if (s == "stride") return Kind::stride;
  if (s == "geometric") return Kind::geometric;
  throw std::invalid_argument("unknown snapshot schedule: " + s);
}

std::string SnapshotSchedule::to_string(Kind k) {
  return k == Kind::stride ? "stride" : "geometric";
}

ParticleRunOutput run_particles(const ModelParams& params, const ParticleNumerics& num,
                                const InitialLaw& law, const InitialField& c0,
                                std::uint64_t seed, std::int64_t n_steps,
                                const SnapshotSchedule& schedule,
                                const ParticleSnapshotSink& sink) {
  params.validate();
  if (n_steps < 0) throw std::invalid_argument("run: negative step count");
  RngState rng(seed, std::size_t(num.n));
  ParticleRunOutput out;
  out.final_state = init(num.n, num.n_f, law, c0, rng);
  ParticleState& state = out.final_state;
  SimClock clock{0, num.dt};

  const std::vector<std::int64_t> snaps = schedule.steps(n_steps);
  auto next_snap = snaps.begin();
  auto maybe_emit = [&] {
    if (next_snap != snaps.end() && *next_snap == clock.step_index) {
      if (sink) sink(state, clock);
      ++next_snap;
    }
  };
  maybe_emit();

  out.step_seconds.reserve(std::size_t(n_steps));
  for (std::int64_t k = 0; k < n_steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const StepReport rep = em_step(state, params, num, clock, rng);
    const auto t1 = std::chrono::steady_clock::now();
    out.step_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());

    const double zero_err = std::abs(rep.zero_mode_actual - rep.zero_mode_expected) /
                            std::max(1.0, std::abs(rep.zero_mode_expected));
    out.max_zero_mode_error = std::max(out.max_zero_mode_error, zero_err);
    if (zero_err > kZeroModeTol)
      throw InvariantError("zero mode of the total field left its scalar recurrence at step " +
                           std::to_string(clock.step_index));

    if (num.resync_every > 0 && clock.step_index % num.resync_every == 0) {
      const double drift = state.consistency_drift();
      out.max_consistency_drift = std::max(out.max_consistency_drift, drift);
      if (drift > kConsistencyTol)
        throw InvariantError("total field drifted from the sum of own fields at step " +
                             std::to_string(clock.step_index));
      state.total_field = state.summed_fields();
    }
    maybe_emit();
  }
  out.steps = clock.step_index;
  return out;
}

}  // namespace formica
