#include <doctest.h>

#include <sstream>

#include "formica/particle_sim.hpp"

using namespace formica;

namespace {

ParticleState evolved_state(int n, int steps) {
  ModelParams p;
  p.chi = 2;
  p.tau = 0.5;
  p.sigma_x = 0.01;
  p.sigma_theta = 0.5;
  p.sigma_c = 0.01;
  ParticleNumerics num;
  num.n = n;
  num.n_f = 4;
  num.dt = 0.01;
  RngState rng(42, std::size_t(n));
  InitialField c0;
  c0.kind = InitialField::Kind::ridge;
  c0.amplitude = 0.3;
  ParticleState s = init(n, 4, InitialLaw{}, c0, rng);
  SimClock clock{0, num.dt};
  for (int k = 0; k < steps; ++k) em_step(s, p, num, clock, rng);
  return s;
}

}  // namespace

TEST_CASE("exclusion field is total minus own") {
  for (int n : {2, 5}) {
    const ParticleState s = evolved_state(n, 20);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXcd others = Eigen::VectorXcd::Zero(s.total_field.size());
      for (int j = 0; j < n; ++j)
        if (j != i) others += s.own_fields.col(j);
      const CoefficientGrid ex = exclusion_field(s, i);
      CHECK((ex.coeffs() - others).cwiseAbs().maxCoeff() < 1e-12);
      if (n == 2) CHECK((ex.coeffs() - s.own_fields.col(1 - i)).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(s.consistency_drift() < 1e-12);
    CHECK(s.total_field.is_hermitian(1e-12));
  }
}

TEST_CASE("fewer than two particles is rejected") {
  RngState rng(1, 1);
  CHECK_THROWS_AS(init(1, 2, InitialLaw{}, InitialField{}, rng), std::invalid_argument);
}

TEST_CASE("random streams depend only on seed and index") {
  RngState a(9, 3), b(9, 10), c(10, 3);
  for (int k = 0; k < 5; ++k) {
    const double x = a.normal(2);
    CHECK(x == b.normal(2));
    CHECK(x != c.normal(2));
  }
}

TEST_CASE("zero mode follows its scalar recurrence") {
  ModelParams p;
  p.gamma = 0.5;
  p.mu = 1.5;
  ParticleNumerics num;
  num.n = 6;
  num.n_f = 2;
  num.dt = 0.05;
  RngState rng(3, 6);
  ParticleState s = init(6, 2, InitialLaw{}, InitialField{}, rng);
  SimClock clock{0, num.dt};
  double z = 0;  // independent recurrence: z' = (z + dt·μN/(N−1))/(1 + dtγ)
  for (int k = 0; k < 30; ++k) {
    const StepReport r = em_step(s, p, num, clock, rng);
    z = (z + num.dt * p.mu * 6.0 / 5.0) / (1 + num.dt * p.gamma);
    CHECK(r.zero_mode_actual == doctest::Approx(z).epsilon(1e-12));
    CHECK(s.total_field.at(0, 0).real() == doctest::Approx(z).epsilon(1e-12));
  }
  CHECK(clock.step_index == 30);
}

TEST_CASE("angular variance grows like 2 sigma_theta t without steering") {
  ModelParams p;
  p.chi = 0;
  p.sigma_theta = 0.5;
  ParticleNumerics num;
  num.n = 4000;
  num.n_f = 1;
  num.dt = 0.01;
  InitialLaw law;
  law.kind = InitialLaw::Kind::dirac;
  law.theta = kPi;
  RngState rng(17, std::size_t(num.n));
  ParticleState s = init(num.n, 1, law, InitialField{}, rng);
  SimClock clock{0, num.dt};
  for (int k = 0; k < 10; ++k) em_step(s, p, num, clock, rng);
  double m = 0, v = 0;
  for (const auto& th : s.thetas) m += th.value();
  m /= num.n;
  for (const auto& th : s.thetas) v += (th.value() - m) * (th.value() - m);
  v /= num.n - 1;
  CHECK(v == doctest::Approx(2 * p.sigma_theta * clock.t()).epsilon(0.1));
  CHECK(m == doctest::Approx(kPi).epsilon(0.02));
}

TEST_CASE("outputs are identical across thread counts") {
  ModelParams p;
  p.chi = 2;
  p.tau = 0.5;
  p.sigma_x = 0.01;
  p.sigma_c = 0.01;
  ParticleNumerics num;
  num.n = 150;
  num.n_f = 3;
  num.dt = 0.01;
  num.resync_every = 7;
  auto run = [&](int threads) {
    num.threads = threads;
    std::ostringstream os;
    os.precision(17);
    run_particles(p, num, InitialLaw{}, InitialField{}, 5, 40, SnapshotSchedule{},
                  [&](const ParticleState& s, const SimClock& c) {
                    os << c.step_index << '\n';
                    for (int i = 0; i < s.n(); ++i)
                      os << s.xs[i].x1() << ' ' << s.xs[i].x2() << ' ' << s.thetas[i].value() << '\n';
                    write_field_snapshot(os, s.total_field, num.conv);
                  });
    return os.str();
  };
  const std::string one = run(1);
  CHECK(one == run(3));
  CHECK(one == run(8));
}

TEST_CASE("snapshot schedules") {
  SnapshotSchedule s;
  s.stride = 10;
  CHECK(s.steps(25) == std::vector<std::int64_t>{0, 10, 20, 25});
  CHECK(s.steps(0) == std::vector<std::int64_t>{0});
  s.kind = SnapshotSchedule::Kind::geometric;
  s.count = 8;
  const auto g = s.steps(1000);
  CHECK(g.front() == 0);
  CHECK(g.back() == 1000);
  CHECK(g.size() == 9);
  CHECK(std::is_sorted(g.begin(), g.end()));
}

TEST_CASE("ridge field") {
  InitialField f;
  f.kind = InitialField::Kind::ridge;
  f.amplitude = 0.5;
  f.center = TorusPoint(0.5, 0.5);
  const CoefficientGrid g = initial_field_coefficients(f, 2);
  CHECK(g.is_hermitian(1e-15));
  // Along angle 0 the ridge is constant in x₁ and peaks at x₂ = 0.5.
  CHECK(eval_probe(g, TorusPoint(0.1, 0.5)).c == doctest::Approx(1.0));
  CHECK(eval_probe(g, TorusPoint(0.8, 0.5)).c == doctest::Approx(1.0));
  CHECK(std::abs(eval_probe(g, TorusPoint(0.3, 0.0)).c) < 1e-12);
  f.angle = 0.3;
  CHECK_THROWS_AS(initial_field_coefficients(f, 2), std::invalid_argument);
}

TEST_CASE("initial laws") {
  RngState rng(2, 50);
  InitialLaw law;
  law.kind = InitialLaw::Kind::dirac;
  law.center = TorusPoint(0.2, 0.3);
  law.theta = 1.0;
  const ParticleState s = init(50, 2, law, InitialField{}, rng);
  for (int i = 0; i < 50; ++i) {
    CHECK(s.xs[i] == law.center);
    CHECK(s.thetas[i].value() == 1.0);
  }
  CHECK(InitialLaw::kind_from_string("near_trail") == InitialLaw::Kind::near_trail);
  CHECK_THROWS(InitialLaw::kind_from_string("nope"));
}
