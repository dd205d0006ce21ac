#include "formica/fd_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "formica/errors.hpp"

namespace formica {
namespace {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

constexpr double kNegativeTol = 1e-10;

Eigen::VectorXd thomas(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                       const Eigen::VectorXd& r) {
  const Eigen::Index n = b.size();
  Eigen::VectorXd cp(n), u(n);
  double denom = b[0];
  if (denom == 0.0) throw std::runtime_error("tridiagonal solve: zero pivot");
  u[0] = r[0] / denom;
  for (Eigen::Index i = 1; i < n; ++i) {
    cp[i] = c[i - 1] / denom;
    denom = b[i] - a[i] * cp[i];
    if (denom == 0.0) throw std::runtime_error("tridiagonal solve: zero pivot");
    u[i] = (r[i] - a[i] * u[i - 1]) / denom;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) u[i] -= cp[i + 1] * u[i + 1];
  return u;
}

void check_grid(int n_x, int n_theta) {
  if (n_x < 4 || n_theta < 4) throw std::invalid_argument("FD grid needs n_x, n_theta >= 4");
}

void check_dt(double dt) {
  if (!(dt > 0.0) || dt > 0.1) throw std::invalid_argument("FD step: dt must lie in (0, 0.1]");
}

/// Implicit step of ∂_t c = −γc + σ_c ∂²_xx c + source.
Eigen::VectorXd advance_field(const Eigen::VectorXd& c, const Eigen::VectorXd& source,
                              double gamma, double sigma_c, double dt) {
  const Eigen::Index n = c.size();
  const double dx = 1.0 / double(n);
  const double off = -dt * sigma_c / (dx * dx);
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(n, off);
  const Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, 1.0 + dt * gamma - 2.0 * off);
  return solve_cyclic_tridiagonal(lower, diag, lower, c + dt * source);
}

struct Derivatives {
  Eigen::VectorXd cx, cxx;
};

Derivatives centred_derivatives(const Eigen::VectorXd& c) {
  const Eigen::Index n = c.size();
  const double dx = 1.0 / double(n);
  Derivatives d{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const double up = c[(j + 1) % n];
    const double dn = c[(j + n - 1) % n];
    d.cx[j] = (up - dn) / (2.0 * dx);
    d.cxx[j] = (up - 2.0 * c[j] + dn) / (dx * dx);
  }
  return d;
}

/// Angular drift of the reduced system at x_j, θ.
double reduced_drift(double theta, double cx, double cxx, const ModelParams& p,
                     const FdOptions& opts) {
  if (opts.verbatim) {
    const double s = std::sin(theta);
    return p.chi * (-p.lambda * cx * s - p.lambda * cxx * s * std::cos(theta));
  }
  return p.chi * drift_B(theta, Vec2d(cx, 0.0), HessianSymd{cxx, 0.0, 0.0}, p.tau);
}

/// Drift at θ-faces k+½ for every x_j, from the field c (plus an optional smell term).
Eigen::MatrixXd face_drift(const Eigen::VectorXd& c, int n_theta, const ModelParams& p,
                           const FdOptions& opts, const SmellField* smell) {
  const Eigen::Index n_x = c.size();
  const Derivatives d = centred_derivatives(c);
  const double dtheta = kTwoPi / n_theta;
  Eigen::MatrixXd b(n_x, n_theta);
  for (int k = 0; k < n_theta; ++k) {
    const double th = (k + 0.5) * dtheta;
    for (Eigen::Index j = 0; j < n_x; ++j) {
      b(j, k) = reduced_drift(th, d.cx[j], d.cxx[j], p, opts);
      if (smell && smell->grad.size() == n_x) b(j, k) += smell->drift(th, int(j));
    }
  }
  return b;
}

/// Rows of (I − dt·L + dt·diag(extra)) for one density block starting at `offset`.
void assemble_block(std::vector<Triplet>& t, Eigen::Index offset, int n_x, int n_theta,
                    const Eigen::MatrixXd& bface, const ModelParams& p, const FdOptions& opts,
                    double dt, const Eigen::VectorXd* extra) {
  const double dx = 1.0 / n_x;
  const double dth = kTwoPi / n_theta;
  const double dxx = p.sigma_x / (dx * dx);
  const double dtt = p.sigma_theta / (dth * dth);
  const double speed = opts.verbatim ? 1.0 : p.lambda;
  auto idx = [&](int j, int k) { return offset + Eigen::Index(j) + Eigen::Index(k) * n_x; };

  for (int k = 0; k < n_theta; ++k) {
    const int kp = (k + 1) % n_theta;
    const int km = (k + n_theta - 1) % n_theta;
    const double adv = speed * std::cos(k * dth) / (2.0 * dx);
    for (int j = 0; j < n_x; ++j) {
      const int jp = (j + 1) % n_x;
      const int jm = (j + n_x - 1) % n_x;
      const Eigen::Index row = idx(j, k);
      const double bp = bface(j, k);   // face k+½
      const double bm = bface(j, km);  // face k−½

      // L = σ_θ D²_θθ + σ_x D²_xx − D_θ(B·) − a D_x, assembled as entries of L.
      double l_self = -2.0 * dtt - 2.0 * dxx;
      double l_kp = dtt, l_km = dtt;
      if (opts.upwind) {
        l_self -= (std::max(bp, 0.0) - std::min(bm, 0.0)) / dth;
        l_kp -= std::min(bp, 0.0) / dth;
        l_km += std::max(bm, 0.0) / dth;
      } else {
        l_self -= (bp - bm) / (2.0 * dth);
        l_kp -= bp / (2.0 * dth);
        l_km += bm / (2.0 * dth);
      }
      const double l_jp = dxx - adv;
      const double l_jm = dxx + adv;

      double diag = 1.0 - dt * l_self;
      if (extra) diag += dt * (*extra)[j];
      t.emplace_back(row, row, diag);
      t.emplace_back(row, idx(j, kp), -dt * l_kp);
      t.emplace_back(row, idx(j, km), -dt * l_km);
      t.emplace_back(row, idx(jp, k), -dt * l_jp);
      t.emplace_back(row, idx(jm, k), -dt * l_jm);
    }
  }
}

struct SolveResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double residual = 0;
};

SolveResult solve_sparse(const SparseMatrix& a, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& guess, const FdOptions& opts) {
  Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> solver;
  solver.setTolerance(opts.solver_tol);
  solver.setMaxIterations(opts.max_iter);
  solver.compute(a);
  SolveResult r;
  r.x = solver.solveWithGuess(b, guess);
  r.iterations = int(solver.iterations());
  const double bn = b.norm();
  r.residual = (b - a * r.x).norm() / (bn > 0 ? bn : 1.0);
  if (solver.info() != Eigen::Success || !r.x.allFinite() || !(r.residual <= 10 * opts.solver_tol)) {
    // Direct fallback for systems the Krylov iteration cannot handle.
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(Eigen::SparseMatrix<double>(a));
    if (lu.info() == Eigen::Success) {
      r.x = lu.solve(b);
      r.residual = (b - a * r.x).norm() / (bn > 0 ? bn : 1.0);
    }
    if (lu.info() != Eigen::Success || !r.x.allFinite() || !(r.residual <= 10 * opts.solver_tol))
      throw SolverError("FD linear solve did not converge (relative residual " +
                            std::to_string(r.residual) + " after " +
                            std::to_string(r.iterations) + " iterations and a direct solve)",
                        r.residual);
  }
  return r;
}

void enforce_positivity(Eigen::Ref<Eigen::MatrixXd> rho, const FdOptions& opts) {
  const double hi = rho.maxCoeff();
  const double lo = rho.minCoeff();
  if (lo < -kNegativeTol * std::max(hi, 0.0)) {
    if (!opts.clip)
      throw InvariantError("negative density excursion: min rho = " + std::to_string(lo) +
                           ", max rho = " + std::to_string(hi));
    rho = rho.cwiseMax(0.0);
  }
}

}  // namespace

Eigen::VectorXd solve_cyclic_tridiagonal(const Eigen::VectorXd& lower, const Eigen::VectorXd& diag,
                                         const Eigen::VectorXd& upper,
                                         const Eigen::VectorXd& rhs) {
  const Eigen::Index n = diag.size();
  if (n < 3 || lower.size() != n || upper.size() != n || rhs.size() != n)
    throw std::invalid_argument("cyclic tridiagonal: need n >= 3 and matching sizes");
  const double beta = lower[0];      // A(0, n−1)
  const double alpha = upper[n - 1]; // A(n−1, 0)
  const double gamma = -diag[0];
  Eigen::VectorXd bb = diag;
  bb[0] = diag[0] - gamma;
  bb[n - 1] = diag[n - 1] - alpha * beta / gamma;
  const Eigen::VectorXd x = thomas(lower, bb, upper, rhs);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  u[0] = gamma;
  u[n - 1] = alpha;
  const Eigen::VectorXd z = thomas(lower, bb, upper, u);
  const double fact =
      (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
  return x - fact * z;
}

DensityGrid DensityGrid::uniform(int n_x, int n_theta, double mass) {
  check_grid(n_x, n_theta);
  DensityGrid g;
  g.n_x = n_x;
  g.n_theta = n_theta;
  g.rho = Eigen::MatrixXd::Constant(n_x, n_theta, mass / kTwoPi);
  g.c = Eigen::VectorXd::Zero(n_x);
  return g;
}

DensityGrid DensityGrid::shifted(int cells) const {
  DensityGrid out = *this;
  for (int j = 0; j < n_x; ++j) {
    const int src = ((j - cells) % n_x + n_x) % n_x;
    out.rho.row(j) = rho.row(src);
    out.c[j] = c[src];
  }
  return out;
}

DensityGrid step(const DensityGrid& grid, const ModelParams& params, const FdOptions& opts,
                 double dt, StepDiagnostics* diag) {
  check_grid(grid.n_x, grid.n_theta);
  check_dt(dt);
  params.validate();

  DensityGrid out = grid;
  out.c = advance_field(grid.c, grid.position_density(), params.gamma, params.sigma_c, dt);

  const Eigen::MatrixXd bface = face_drift(out.c, grid.n_theta, params, opts, nullptr);
  const Eigen::Index n = Eigen::Index(grid.n_x) * grid.n_theta;
  std::vector<Triplet> trips;
  trips.reserve(std::size_t(5 * n));
  assemble_block(trips, 0, grid.n_x, grid.n_theta, bface, params, opts, dt, nullptr);
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());

  const Eigen::Map<const Eigen::VectorXd> b(grid.rho.data(), n);
  const SolveResult sol = solve_sparse(a, b, b, opts);
  out.rho = Eigen::Map<const Eigen::MatrixXd>(sol.x.data(), grid.n_x, grid.n_theta);
  enforce_positivity(out.rho, opts);

  if (diag) {
    diag->mass_before = grid.mass();
    diag->mass_after = out.mass();
    diag->min_rho = out.rho.minCoeff();
    diag->max_rho = out.rho.maxCoeff();
    diag->iterations = sol.iterations;
    diag->residual = sol.residual;
  }
  return out;
}

double h1_seminorm(const DensityGrid& g) {
  const double dx = g.dx(), dth = g.dtheta();
  double s = 0;
  for (int k = 0; k < g.n_theta; ++k)
    for (int j = 0; j < g.n_x; ++j) {
      const double ddx = (g.rho((j + 1) % g.n_x, k) - g.rho(j, k)) / dx;
      const double ddt = (g.rho(j, (k + 1) % g.n_theta) - g.rho(j, k)) / dth;
      s += (ddx * ddx + ddt * ddt) * dx * dth;
    }
  return s;
}

SteadyResult run_to_steady(DensityGrid grid, const ModelParams& params, const FdOptions& opts,
                           double dt, double t_max, double tol, const FdObserver& observer) {
  if (!(tol > 0)) throw std::invalid_argument("run_to_steady: tol must be > 0");
  check_dt(dt);
  SteadyResult res;
  if (observer) observer(grid, 0.0, 0);
  const std::int64_t max_steps =
      t_max > 0 ? std::int64_t(std::ceil(t_max / dt - 1e-9)) : std::int64_t(0);
  for (std::int64_t s = 1; s <= max_steps; ++s) {
    StepDiagnostics d;
    DensityGrid next = step(grid, params, opts, dt, &d);
    res.last_rate = (next.rho - grid.rho).cwiseAbs().maxCoeff() / dt;
    res.max_mass_drift =
        std::max(res.max_mass_drift, std::abs(d.mass_after - d.mass_before) / d.mass_before);
    grid = std::move(next);
    res.steps = s;
    res.t_stop = double(s) * dt;
    if (observer) observer(grid, res.t_stop, s);
    if (res.last_rate < tol) {
      res.converged = true;
      break;
    }
  }
  res.grid = std::move(grid);
  return res;
}

TransitionOp TransitionOp::convolution(AngularDensity z) {
  const double mass = z.integral();
  if (!(mass > 0) || z.values.minCoeff() < 0)
    throw std::invalid_argument("convolution kernel must be a nonnegative density");
  z.values /= mass;
  return {Kind::convolution, std::move(z)};
}

TransitionOp TransitionOp::wrapped_gaussian(int n_theta, double width) {
  if (!(width > 0)) throw std::invalid_argument("wrapped_gaussian: width must be > 0");
  AngularDensity z{Eigen::VectorXd::Zero(n_theta)};
  const int images = 2 + int(std::ceil(8.0 * width / kTwoPi));
  for (int m = 0; m < n_theta; ++m) {
    const double th = z.theta(m) > kPi ? z.theta(m) - kTwoPi : z.theta(m);
    for (int l = -images; l <= images; ++l) {
      const double u = (th + kTwoPi * l) / width;
      z.values[m] += std::exp(-0.5 * u * u);
    }
  }
  return convolution(std::move(z));
}

double TransitionOp::weight(int dst, int src, int n_theta) const {
  switch (kind) {
    case Kind::identity: return dst == src ? 1.0 : 0.0;
    case Kind::u_turn:
      if (n_theta % 2 != 0) throw std::invalid_argument("u_turn needs an even n_theta");
      return src == (dst + n_theta / 2) % n_theta ? 1.0 : 0.0;
    case Kind::convolution:
      if (kernel.n_grid() != n_theta) throw std::invalid_argument("kernel grid mismatch");
      return kernel.values[((dst - src) % n_theta + n_theta) % n_theta] * kernel.dtheta();
  }
  return 0.0;
}

Eigen::MatrixXd TransitionOp::apply(const Eigen::MatrixXd& f) const {
  const int n = int(f.cols());
  Eigen::MatrixXd w(n, n);
  for (int d = 0; d < n; ++d)
    for (int s = 0; s < n; ++s) w(s, d) = weight(d, s, n);
  return f * w;
}

Eigen::MatrixXd SmellField::drift_matrix(int n_theta) const {
  Eigen::MatrixXd m(grad.size(), n_theta);
  for (int k = 0; k < n_theta; ++k)
    for (Eigen::Index j = 0; j < grad.size(); ++j) m(j, k) = drift(kTwoPi * k / n_theta, int(j));
  return m;
}

SmellField smell_field(const Eigen::VectorXd& rate, double gamma_a, double sigma_a, double chi_a) {
  if (!(gamma_a > 0)) throw std::invalid_argument("smell_field: gamma_a must be > 0");
  if (sigma_a < 0) throw std::invalid_argument("smell_field: sigma_a must be >= 0");
  const Eigen::Index n = rate.size();
  const double dx = 1.0 / double(n);
  const double off = -sigma_a / (dx * dx);
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(n, off);
  const Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, gamma_a - 2.0 * off);
  SmellField s;
  s.d = solve_cyclic_tridiagonal(lower, diag, lower, rate);
  s.grad = centred_derivatives(s.d).cx;
  s.chi = chi_a;
  return s;
}

TwoStateGrid step_two_state(const TwoStateGrid& grid, const ModelParams& params,
                            const TransitionOp& j_op, const ProductionSpec& prod_alpha,
                            const ProductionSpec& prod_beta, const FdOptions& opts, double dt,
                            StepDiagnostics* diag) {
  const int nx = grid.n_x, nt = grid.n_theta;
  check_grid(nx, nt);
  check_dt(dt);
  params.validate();
  if (prod_alpha.from_alpha < 0 || prod_alpha.from_beta < 0 || prod_beta.from_alpha < 0 ||
      prod_beta.from_beta < 0)
    throw std::invalid_argument("production coefficients must be >= 0");
  if (grid.alpha_rate.minCoeff() < 0 || grid.beta_rate.minCoeff() < 0)
    throw std::invalid_argument("switching rates must be >= 0");

  TwoStateGrid out = grid;
  const double dth = grid.dtheta();
  const Eigen::VectorXd m_a = grid.rho_alpha.rowwise().sum() * dth;
  const Eigen::VectorXd m_b = grid.rho_beta.rowwise().sum() * dth;
  out.c_alpha = advance_field(grid.c_alpha, prod_alpha.from_alpha * m_a + prod_alpha.from_beta * m_b,
                              params.gamma, params.sigma_c, dt);
  out.c_beta = advance_field(grid.c_beta, prod_beta.from_alpha * m_a + prod_beta.from_beta * m_b,
                             params.gamma, params.sigma_c, dt);

  const Eigen::MatrixXd bf_a = face_drift(out.c_alpha, nt, params, opts, &grid.d_alpha);
  const Eigen::MatrixXd bf_b = face_drift(out.c_beta, nt, params, opts, &grid.d_beta);

  const Eigen::Index n = Eigen::Index(nx) * nt;
  std::vector<Triplet> trips;
  trips.reserve(std::size_t(12 * n));
  assemble_block(trips, 0, nx, nt, bf_a, params, opts, dt, &grid.alpha_rate);
  assemble_block(trips, n, nx, nt, bf_b, params, opts, dt, &grid.beta_rate);

  // Exchange: α-rows receive β J[ρ^β], β-rows receive α J[ρ^α].
  for (int kd = 0; kd < nt; ++kd)
    for (int ks = 0; ks < nt; ++ks) {
      const double w = j_op.weight(kd, ks, nt);
      if (w == 0.0) continue;
      for (int j = 0; j < nx; ++j) {
        const Eigen::Index dst = j + Eigen::Index(kd) * nx;
        const Eigen::Index src = j + Eigen::Index(ks) * nx;
        if (grid.beta_rate[j] != 0.0) trips.emplace_back(dst, n + src, -dt * grid.beta_rate[j] * w);
        if (grid.alpha_rate[j] != 0.0) trips.emplace_back(n + dst, src, -dt * grid.alpha_rate[j] * w);
      }
    }
  SparseMatrix a(2 * n, 2 * n);
  a.setFromTriplets(trips.begin(), trips.end());

  Eigen::VectorXd b(2 * n);
  b.head(n) = Eigen::Map<const Eigen::VectorXd>(grid.rho_alpha.data(), n);
  b.tail(n) = Eigen::Map<const Eigen::VectorXd>(grid.rho_beta.data(), n);
  const SolveResult sol = solve_sparse(a, b, b, opts);
  out.rho_alpha = Eigen::Map<const Eigen::MatrixXd>(sol.x.data(), nx, nt);
  out.rho_beta = Eigen::Map<const Eigen::MatrixXd>(sol.x.data() + n, nx, nt);
  enforce_positivity(out.rho_alpha, opts);
  enforce_positivity(out.rho_beta, opts);

  if (diag) {
    diag->mass_before = grid.total_mass();
    diag->mass_after = out.total_mass();
    diag->min_rho = std::min(out.rho_alpha.minCoeff(), out.rho_beta.minCoeff());
    diag->max_rho = std::max(out.rho_alpha.maxCoeff(), out.rho_beta.maxCoeff());
    diag->iterations = sol.iterations;
    diag->residual = sol.residual;
  }
  return out;
}

double averaged_norm(const DensityGrid& grid, double p) {
  const Eigen::VectorXd m = grid.position_density().cwiseAbs();
  if (std::isinf(p)) return m.maxCoeff();
  if (!(p >= 1)) throw std::invalid_argument("averaged_norm: p must be >= 1");
  return std::pow(m.array().pow(p).sum() * grid.dx(), 1.0 / p);
}

AveragingReport averaging_report(std::vector<double> series) {
  AveragingReport r;
  r.series = std::move(series);
  if (r.series.empty()) return r;
  const double first = r.series.front();
  double worst = 0;
  for (std::size_t i = 0; i < r.series.size(); ++i) {
    worst = std::max(worst, r.series[i]);
    // Allow rounding-level wiggle when checking monotonicity.
    if (i >= 2 && r.series[i] > r.series[i - 1] * (1.0 + 1e-12)) r.nonincreasing_after_first = false;
  }
  r.max_over_initial = first > 0 ? worst / first : std::numeric_limits<double>::infinity();
  return r;
}

AveragingReport averaging_diagnostic(const std::vector<DensityGrid>& history, double p) {
  if (!(p == 2 || p == 4 || std::isinf(p)))
    throw std::invalid_argument("averaging_diagnostic: p must be 2, 4 or infinity");
  std::vector<double> series;
  series.reserve(history.size());
  for (const auto& g : history) series.push_back(averaged_norm(g, p));
  return averaging_report(std::move(series));
}

void write_density_rows(std::ostream& os, const DensityGrid& g, double t, bool header) {
  if (header) os << "t,x,theta,rho\n";
  os << std::setprecision(17);
  for (int j = 0; j < g.n_x; ++j)
    for (int k = 0; k < g.n_theta; ++k)
      os << t << ',' << g.x(j) << ',' << g.theta(k) << ',' << g.rho(j, k) << '\n';
}

void write_field_rows(std::ostream& os, const DensityGrid& g, double t, bool header) {
  if (header) os << "t,x,c\n";
  os << std::setprecision(17);
  for (int j = 0; j < g.n_x; ++j) os << t << ',' << g.x(j) << ',' << g.c[j] << '\n';
}

}  // namespace formica
