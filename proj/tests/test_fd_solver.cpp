#include <doctest.h>

#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "formica/errors.hpp"
#include "formica/fd_solver.hpp"

using namespace formica;

namespace {

ModelParams trail_params() {
  ModelParams p;
  p.chi = 3;
  p.tau = 1;
  p.sigma_x = 0.05;
  p.sigma_c = 0.05;
  return p;
}

DensityGrid random_grid(int n_x, int n_theta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  DensityGrid g = DensityGrid::uniform(n_x, n_theta);
  for (int j = 0; j < n_x; ++j) {
    for (int k = 0; k < n_theta; ++k) g.rho(j, k) = u(rng) / kTwoPi;
    g.c[j] = 0.1 * u(rng);
  }
  return g;
}

double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("cyclic tridiagonal solve matches a dense solve") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n : {3, 4, 17, 64}) {
    Eigen::VectorXd lo(n), di(n), up(n), r(n);
    for (int i = 0; i < n; ++i) {
      lo[i] = u(rng);
      up[i] = u(rng);
      di[i] = 3 + u(rng);
      r[i] = u(rng);
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      a(i, i) += di[i];
      a(i, (i + n - 1) % n) += lo[i];
      a(i, (i + 1) % n) += up[i];
    }
    const Eigen::VectorXd x = solve_cyclic_tridiagonal(lo, di, up, r);
    CHECK((a * x - r).cwiseAbs().maxCoeff() < 1e-13);
  }
  CHECK_THROWS_AS(solve_cyclic_tridiagonal(Eigen::VectorXd(2), Eigen::VectorXd(2), Eigen::VectorXd(2),
                                           Eigen::VectorXd(2)),
                  std::invalid_argument);
}

TEST_CASE("uniform density with balanced field is a steady state") {
  ModelParams p = trail_params();
  p.gamma = 0.8;
  const double mass = 1.7;
  DensityGrid g = DensityGrid::uniform(32, 16, mass);
  g.c.setConstant(mass / p.gamma);  // c* = (Σρdθ)/γ
  const DensityGrid out = step(g, p, FdOptions{}, 0.01);
  CHECK(rel_diff(out.rho, g.rho) < 1e-10);
  CHECK((out.c - g.c).cwiseAbs().maxCoeff() < 1e-10 * g.c.maxCoeff());
}

TEST_CASE("pure heat flow decreases the H1 seminorm") {
  ModelParams p;
  p.chi = 0;
  p.lambda = 0;
  DensityGrid g = random_grid(24, 16, 3);
  double prev = h1_seminorm(g);
  for (int s = 0; s < 20; ++s) {
    g = step(g, p, FdOptions{}, 0.01);
    const double now = h1_seminorm(g);
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("mass is conserved per step") {
  for (bool upwind : {false, true})
    for (bool verbatim : {false, true}) {
      FdOptions o;
      o.upwind = upwind;
      o.verbatim = verbatim;
      o.clip = true;
      DensityGrid g = random_grid(32, 16, 5);
      for (int s = 0; s < 10; ++s) {
        StepDiagnostics d;
        g = step(g, trail_params(), o, 0.01, &d);
        CHECK(std::abs(d.mass_after - d.mass_before) / d.mass_before < 1e-10);
      }
    }
}

TEST_CASE("translation equivariance") {
  FdOptions o;
  o.upwind = true;
  DensityGrid g = random_grid(32, 16, 7);
  DensityGrid h = g.shifted(5);
  for (int s = 0; s < 5; ++s) {
    g = step(g, trail_params(), o, 0.01);
    h = step(h, trail_params(), o, 0.01);
  }
  const DensityGrid gs = g.shifted(5);
  CHECK(rel_diff(h.rho, gs.rho) < 1e-9);
  CHECK((h.c - gs.c).cwiseAbs().maxCoeff() < 1e-9 * gs.c.cwiseAbs().maxCoeff());
}

TEST_CASE("run_to_steady edge cases") {
  ModelParams heat;
  heat.chi = 0;
  const DensityGrid g0 = random_grid(16, 8, 9);
  const SteadyResult none = run_to_steady(g0, heat, FdOptions{}, 0.01, 0.0, 1e-6);
  CHECK_FALSE(none.converged);
  CHECK(none.steps == 0);
  CHECK(none.grid.rho == g0.rho);

  const SteadyResult r = run_to_steady(g0, heat, FdOptions{}, 0.05, 200.0, 1e-8);
  CHECK(r.converged);
  CHECK(r.grid.rho.maxCoeff() - r.grid.rho.minCoeff() < 1e-6);
  const DensityGrid again = step(r.grid, heat, FdOptions{}, 0.05);
  CHECK((again.rho - r.grid.rho).cwiseAbs().maxCoeff() / 0.05 < 2e-8);
  CHECK_THROWS_AS(run_to_steady(g0, heat, FdOptions{}, 0.01, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("step preconditions and positivity policy") {
  const DensityGrid g = DensityGrid::uniform(16, 8);
  CHECK_THROWS_AS(step(g, ModelParams{}, FdOptions{}, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(step(g, ModelParams{}, FdOptions{}, 0.0), std::invalid_argument);

  // Strong steering with centred θ-fluxes on a coarse grid undershoots.
  ModelParams p = trail_params();
  p.chi = 20;
  p.sigma_theta = 0.01;
  DensityGrid s = DensityGrid::uniform(32, 16);
  for (int j = 0; j < 32; ++j) s.c[j] = std::cos(kTwoPi * s.x(j));
  CHECK_THROWS_AS(step(s, p, FdOptions{}, 0.1), InvariantError);
  FdOptions clip;
  clip.clip = true;
  CHECK(step(s, p, clip, 0.1).rho.minCoeff() >= 0.0);
}

TEST_CASE("smell field") {
  const int n = 64;
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(n, 0.6);
  const SmellField s0 = smell_field(flat, 1.5, 1.0, 2.0);
  CHECK((s0.d.array() - 0.4).abs().maxCoeff() < 1e-13);
  CHECK(s0.grad.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s0.drift_matrix(8).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::VectorXd cosine(n);
  for (int j = 0; j < n; ++j) cosine[j] = std::cos(kTwoPi * j / n);
  const double gamma_a = 2.0, dx = 1.0 / n;
  const SmellField s1 = smell_field(cosine, gamma_a, 1.0, 1.0);
  // Discrete symbol of the second difference on this mode, and its continuum limit.
  const double discrete = 1.0 / (gamma_a + (2 - 2 * std::cos(kTwoPi * dx)) / (dx * dx));
  const double continuum = 1.0 / (gamma_a + 4 * kPi * kPi);
  CHECK((s1.d - discrete * cosine).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s1.d - continuum * cosine).cwiseAbs().maxCoeff() < 1e-3 * continuum);

  const SmellField s2 = smell_field(2.0 * cosine, gamma_a, 1.0, 1.0);
  CHECK((s2.d - 2.0 * s1.d).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(s1.drift(kPi / 2, 5) == doctest::Approx(-s1.grad[5]));
  CHECK_THROWS_AS(smell_field(flat, 0.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("transition operators") {
  const int nt = 16;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::MatrixXd f(3, nt);
  for (int i = 0; i < f.size(); ++i) f.data()[i] = u(rng);

  const TransitionOp ut = TransitionOp::u_turn();
  CHECK((ut.apply(ut.apply(f)) - f).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ut.apply(f)(1, 3) == f(1, 3 + nt / 2));
  CHECK(TransitionOp::identity().apply(f) == f);
  for (const TransitionOp& op :
       {TransitionOp::identity(), TransitionOp::u_turn(), TransitionOp::wrapped_gaussian(nt, 0.4)}) {
    const Eigen::VectorXd before = f.rowwise().sum();
    const Eigen::VectorXd after = op.apply(f).rowwise().sum();
    CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(op.apply(f).minCoeff() >= 0);
  }
  CHECK_THROWS_AS(ut.weight(0, 0, 7), std::invalid_argument);
}

TEST_CASE("two-state step") {
  const int nx = 24, nt = 16;
  const ModelParams p = trail_params();
  FdOptions o;
  o.upwind = true;
  const DensityGrid a = random_grid(nx, nt, 21), b = random_grid(nx, nt, 22);

  TwoStateGrid g;
  g.n_x = nx;
  g.n_theta = nt;
  g.rho_alpha = a.rho;
  g.rho_beta = b.rho;
  g.c_alpha = a.c;
  g.c_beta = b.c;
  g.alpha_rate = Eigen::VectorXd::Zero(nx);
  g.beta_rate = Eigen::VectorXd::Zero(nx);
  g.d_alpha = smell_field(Eigen::VectorXd::Zero(nx), 1, 0.1, 0);
  g.d_beta = g.d_alpha;

  SUBCASE("no exchange reduces to two single-state steps") {
    const TwoStateGrid out =
        step_two_state(g, p, TransitionOp::u_turn(), {1, 0}, {0, 1}, o, 0.01);
    const DensityGrid sa = step(a, p, o, 0.01), sb = step(b, p, o, 0.01);
    CHECK(rel_diff(out.rho_alpha, sa.rho) < 1e-10);
    CHECK(rel_diff(out.rho_beta, sb.rho) < 1e-10);
    CHECK((out.c_alpha - sa.c).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("u-turn exchange conserves total mass only") {
    for (int j = 0; j < nx; ++j) {
      g.alpha_rate[j] = 0.5 + 0.4 * std::cos(kTwoPi * j / nx);
      g.beta_rate[j] = 0.2;
    }
    g.d_alpha = smell_field(g.alpha_rate, 1, 0.05, 0.5);
    const double m0 = g.total_mass(), ma0 = g.mass_alpha();
    TwoStateGrid cur = g;
    for (int s = 0; s < 10; ++s) {
      StepDiagnostics d;
      cur = step_two_state(cur, p, TransitionOp::u_turn(), {1, 0}, {0, 1}, o, 0.01, &d);
      CHECK(std::abs(d.mass_after - d.mass_before) / d.mass_before < 1e-10);
    }
    CHECK(std::abs(cur.total_mass() - m0) / m0 < 1e-10);
    CHECK(std::abs(cur.mass_alpha() - ma0) > 1e-4);
  }

  SUBCASE("symmetric data stays symmetric") {
    g.rho_beta = g.rho_alpha;
    g.c_beta = g.c_alpha;
    g.alpha_rate.setConstant(0.3);
    g.beta_rate.setConstant(0.3);
    TwoStateGrid cur = g;
    for (int s = 0; s < 10; ++s)
      cur = step_two_state(cur, p, TransitionOp::wrapped_gaussian(nt, 0.5), {0.5, 0.5}, {0.5, 0.5},
                           o, 0.01);
    CHECK(rel_diff(cur.rho_alpha, cur.rho_beta) < 1e-10);
  }
}

TEST_CASE("averaging diagnostics") {
  ModelParams heat;
  heat.chi = 0;
  heat.lambda = 0;
  std::vector<DensityGrid> hist{random_grid(32, 8, 31)};
  for (int s = 0; s < 15; ++s) hist.push_back(step(hist.back(), heat, FdOptions{}, 0.01));
  for (double p : {2.0, 4.0, std::numeric_limits<double>::infinity()}) {
    const AveragingReport r = averaging_diagnostic(hist, p);
    CHECK(r.series.size() == hist.size());
    CHECK(r.nonincreasing_after_first);
    CHECK(r.max_over_initial <= 1.0 + 1e-12);
  }
  const DensityGrid u = DensityGrid::uniform(16, 8);
  const DensityGrid u1 = step(u, ModelParams{}, FdOptions{}, 0.01);
  CHECK(std::abs(averaged_norm(u1, 2) - averaged_norm(u, 2)) < 1e-12);
  CHECK(averaged_norm(u, 2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(averaging_diagnostic(hist, 3.0), std::invalid_argument);
}

TEST_CASE("csv writers") {
  DensityGrid g = DensityGrid::uniform(4, 4);
  std::ostringstream d, f;
  write_density_rows(d, g, 0.5, true);
  write_field_rows(f, g, 0.5, true);
  CHECK(d.str().rfind("t,x,theta,rho\n", 0) == 0);
  CHECK(f.str().rfind("t,x,c\n", 0) == 0);
  const std::string rows = d.str();
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 17);
}
