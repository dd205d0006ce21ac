#include "formica/kernel_verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "formica/core.hpp"

namespace formica {
namespace {

constexpr double kTailTarget = 1e-16;
constexpr int kGaussOrder = 16;
// exp(-x²/4t) < 1e-18 beyond this many √t.
constexpr double kSupport = 13.0;

void check_t(double t) {
  if (!(t > 0) || !std::isfinite(t)) throw std::invalid_argument("heat kernel: t must be > 0");
}

struct GaussRule {
  std::array<double, kGaussOrder> x{}, w{};
};

const GaussRule& gauss_rule() {
  static const GaussRule rule = [] {
    GaussRule r;
    const int n = kGaussOrder;
    for (int i = 0; i < n; ++i) {
      double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1, p1 = 0;
        for (int j = 1; j <= n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      r.x[i] = z;
      r.w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return r;
  }();
  return rule;
}

struct Nodes {
  std::vector<double> x, w;
};

/// Composite Gauss–Legendre on [-half, 0] ∪ [0, half], `panels` panels per side.
Nodes split_nodes(double half, int panels) {
  const GaussRule& g = gauss_rule();
  Nodes n;
  const double h = half / panels;
  for (int side = -1; side <= 1; side += 2)
    for (int pnl = 0; pnl < panels; ++pnl) {
      const double a = side < 0 ? -half + pnl * h : pnl * h;
      for (int q = 0; q < kGaussOrder; ++q) {
        n.x.push_back(a + 0.5 * h * (g.x[q] + 1.0));
        n.w.push_back(0.5 * h * g.w[q]);
      }
    }
  return n;
}

/// Periodic heat kernel of period L and its derivative at x.
std::pair<double, double> periodic_kernel(double t, double x, double period) {
  x = wrap_periodic(x, period);
  if (x >= 0.5 * period) x -= period;
  const double norm = 1.0 / std::sqrt(4.0 * kPi * t);
  const int images = 1 + int(std::ceil(kSupport * std::sqrt(t) / period));
  double v = 0, d = 0;
  for (int k = -images; k <= images; ++k) {
    const double y = x + k * period;
    const double e = norm * std::exp(-y * y / (4.0 * t));
    v += e;
    d += -y / (2.0 * t) * e;
  }
  return {v, d};
}

std::pair<double, double> line_kernel(double t, double x) {
  const double e = std::exp(-x * x / (4.0 * t)) / std::sqrt(4.0 * kPi * t);
  return {e, -x / (2.0 * t) * e};
}

struct Axis {
  Nodes nodes;
  std::vector<double> v, d;
};

Axis spatial_axis(double t, KernelDomain domain, int panels) {
  double half = kSupport * std::sqrt(t);
  if (domain == KernelDomain::circle) half = std::min(half, 0.5);
  Axis a{split_nodes(half, panels), {}, {}};
  for (double x : a.nodes.x) {
    const auto [v, d] = domain == KernelDomain::line ? line_kernel(t, x) : periodic_kernel(t, x, 1.0);
    a.v.push_back(v);
    a.d.push_back(d);
  }
  return a;
}

Axis angle_axis(double t, int panels) {
  const double half = std::min(kSupport * std::sqrt(t), kPi);
  Axis a{split_nodes(half, panels), {}, {}};
  for (double x : a.nodes.x) {
    const auto [v, d] = periodic_kernel(t, x, kTwoPi);
    a.v.push_back(v);
    a.d.push_back(d);
  }
  return a;
}

struct Norms {
  std::vector<double> f0, fx, ftheta;
};

/// Literal triple sum: inner θ-integral of |g|, |∂_{x₁}g|, |∂_θ g| at every (x₁, x₂).
Norms mixed_norms(const Axis& sx, const Axis& th, const std::vector<double>& ps) {
  const std::size_t n = sx.v.size();
  const std::size_t m = th.v.size();
  std::vector<double> acc0(ps.size(), 0.0), accx(ps.size(), 0.0), acct(ps.size(), 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      double s0 = 0, sx1 = 0, st = 0;
      for (std::size_t k = 0; k < m; ++k) {
        const double wk = th.nodes.w[k];
        s0 += wk * std::abs(sx.v[a] * sx.v[b] * th.v[k]);
        sx1 += wk * std::abs(sx.d[a] * sx.v[b] * th.v[k]);
        st += wk * std::abs(sx.v[a] * sx.v[b] * th.d[k]);
      }
      const double w = sx.nodes.w[a] * sx.nodes.w[b];
      for (std::size_t i = 0; i < ps.size(); ++i) {
        acc0[i] += w * std::pow(s0, ps[i]);
        accx[i] += w * std::pow(sx1, ps[i]);
        acct[i] += w * std::pow(st, ps[i]);
      }
    }
  Norms out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    out.f0.push_back(std::pow(acc0[i], 1.0 / ps[i]));
    out.fx.push_back(std::pow(accx[i], 1.0 / ps[i]));
    out.ftheta.push_back(std::pow(acct[i], 1.0 / ps[i]));
  }
  return out;
}

std::vector<KernelNorms> norms_at(double t, const std::vector<double>& ps, KernelDomain domain,
                                  int points) {
  check_t(t);
  if (points < 64 || points > 256 || points % 64 != 0)
    throw std::invalid_argument("kernel_norms: points must be 64, 128, 192 or 256");
  for (double p : ps)
    if (!(p >= 1) || !std::isfinite(p)) throw std::invalid_argument("kernel_norms: need 1 <= p < inf");
  const int panels = points / (2 * kGaussOrder);
  const Norms fine = mixed_norms(spatial_axis(t, domain, panels), angle_axis(t, panels), ps);
  const int coarse_panels = std::max(1, panels / 2);
  const Norms coarse =
      mixed_norms(spatial_axis(t, domain, coarse_panels), angle_axis(t, coarse_panels), ps);
  std::vector<KernelNorms> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    KernelNorms r;
    r.t = t;
    r.p = ps[i];
    r.f0 = fine.f0[i];
    r.fx = fine.fx[i];
    r.ftheta = fine.ftheta[i];
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a), 1e-300); };
    r.rel_change = std::max({rel(fine.f0[i], coarse.f0[i]), rel(fine.fx[i], coarse.fx[i]),
                             rel(fine.ftheta[i], coarse.ftheta[i])});
    r.converged = r.rel_change <= 1e-8 && std::isfinite(r.f0) && std::isfinite(r.fx) &&
                  std::isfinite(r.ftheta);
    out.push_back(r);
  }
  return out;
}

}  // namespace

KernelValue eta_images(double t, double x, int K) {
  check_t(t);
  x = wrap_periodic(x, kTwoPi);
  if (x >= kPi) x -= kTwoPi;
  const double norm = 1.0 / std::sqrt(4.0 * kPi * t);
  // Omitted |k| > K terms: (x + 2πk)² ≥ π²(2|k| − 1)², ratios ≤ exp(−2π²(K+1)/t).
  auto tail = [&](int k) {
    const double first = norm * std::exp(-kPi * kPi * (2.0 * k + 1) * (2.0 * k + 1) / (4.0 * t));
    const double q = std::exp(-2.0 * kPi * kPi * (k + 1) / t);
    return 2.0 * first / (1.0 - q);
  };
  if (K < 0) {
    K = 0;
    while (tail(K) >= kTailTarget) ++K;
  }
  KernelValue r;
  r.terms = K;
  for (int k = -K; k <= K; ++k) {
    const double y = x + kTwoPi * k;
    r.value += norm * std::exp(-y * y / (4.0 * t));
  }
  r.tail_bound = tail(K);
  return r;
}

KernelValue eta_fourier(double t, double x, int M) {
  check_t(t);
  auto tail = [&](int m) {
    const double m1 = m + 1.0;
    return std::exp(-t * m1 * m1) / (kPi * (1.0 - std::exp(-t * (2.0 * m1 + 1.0))));
  };
  if (M < 0) {
    M = 0;
    while (tail(M) >= kTailTarget) ++M;
  }
  double s = 1.0;
  for (int n = 1; n <= M; ++n) s += 2.0 * std::exp(-t * double(n) * n) * std::cos(n * x);
  return {s / kTwoPi, tail(M), M};
}

double eta_images_dx(double t, double x) {
  check_t(t);
  return periodic_kernel(t, x, kTwoPi).second;
}

double eta_l1_norm(double t, int derivative) {
  check_t(t);
  if (derivative != 0 && derivative != 1) throw std::invalid_argument("eta_l1_norm: derivative 0 or 1");
  const Axis a = angle_axis(t, 16);
  double s = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    s += a.nodes.w[i] * std::abs(derivative == 0 ? a.v[i] : a.d[i]);
  return s;
}

double semigroup_defect(double t, double s, int n) {
  check_t(t);
  check_t(s);
  if (n < 8) throw std::invalid_argument("semigroup_defect: n must be >= 8");
  const double h = kTwoPi / n;
  std::vector<double> et(n), es(n);
  for (int i = 0; i < n; ++i) {
    et[i] = eta_images(t, i * h).value;
    es[i] = eta_images(s, i * h).value;
  }
  double worst = 0;
  for (int i = 0; i < n; ++i) {
    double conv = 0;
    for (int j = 0; j < n; ++j) conv += et[(i - j + n) % n] * es[j] * h;
    worst = std::max(worst, std::abs(conv - eta_images(t + s, i * h).value));
  }
  return worst;
}

std::string to_string(KernelDomain d) { return d == KernelDomain::line ? "line" : "circle"; }

KernelDomain kernel_domain_from_string(const std::string& s) {
  if (s == "line") return KernelDomain::line;
  if (s == "circle") return KernelDomain::circle;
  throw std::invalid_argument("unknown kernel domain '" + s + "' (expected line or circle)");
}

KernelNorms kernel_norms(double t, double p, KernelDomain domain, int points) {
  return norms_at(t, {p}, domain, points).front();
}

std::vector<KernelNorms> kernel_norm_table(const std::vector<double>& ts,
                                           const std::vector<double>& ps, KernelDomain domain,
                                           int points, int threads) {
  std::vector<std::vector<KernelNorms>> per_t(ts.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, threads))
  for (int i = 0; i < int(ts.size()); ++i) {
    try {
      per_t[i] = norms_at(ts[i], ps, domain, points);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<KernelNorms> out;
  for (std::size_t j = 0; j < ps.size(); ++j)
    for (auto& row : per_t) out.push_back(row[j]);
  return out;
}

double fit_exponent(const std::vector<std::pair<double, double>>& samples) {
  if (samples.size() < 4) throw std::invalid_argument("fit_exponent: need at least 4 samples");
  double sx = 0, sy = 0;
  for (const auto& [t, v] : samples) {
    if (!(t > 0) || !(v > 0)) throw std::invalid_argument("fit_exponent: samples must be positive");
    sx += std::log(t);
    sy += std::log(v);
  }
  const double n = double(samples.size());
  const double mx = sx / n, my = sy / n;
  double sxy = 0, sxx = 0;
  for (const auto& [t, v] : samples) {
    const double dx = std::log(t) - mx;
    sxy += dx * (std::log(v) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw std::invalid_argument("fit_exponent: t values must differ");
  return sxy / sxx;
}

bool ExponentFit::within(double rel) const {
  return std::abs(fitted - target) <= rel * std::abs(target) + 1e-6;
}

KernelReport kernel_report(const KernelReportConfig& cfg) {
  if (cfg.n_t < 4) throw std::invalid_argument("kernel_report: n_t must be >= 4");
  if (!(cfg.t_min > 0) || !(cfg.t_max > cfg.t_min))
    throw std::invalid_argument("kernel_report: need 0 < t_min < t_max");
  std::vector<double> ts;
  for (int i = 0; i < cfg.n_t; ++i)
    ts.push_back(cfg.t_min * std::pow(cfg.t_max / cfg.t_min, double(i) / (cfg.n_t - 1)));

  KernelReport r;
  r.domain = cfg.domain;
  r.rows = kernel_norm_table(ts, cfg.ps, cfg.domain, cfg.points, cfg.threads);
  for (const auto& row : r.rows) r.all_converged = r.all_converged && row.converged;

  for (double p : cfg.ps) {
    std::vector<std::pair<double, double>> s0, sx, st;
    for (const auto& row : r.rows)
      if (row.p == p) {
        s0.emplace_back(row.t, row.f0);
        sx.emplace_back(row.t, row.fx);
        st.emplace_back(row.t, row.ftheta);
      }
    const double base = -(p - 1.0) / p;
    r.fits.push_back({"f0", p, fit_exponent(s0), base});
    r.fits.push_back({"fx", p, fit_exponent(sx), base - 0.5});
    r.fits.push_back({"ftheta", p, fit_exponent(st), base - 0.5});
  }

  std::vector<std::pair<double, double>> dx_series;
  for (double t : ts) dx_series.emplace_back(t, eta_l1_norm(t, 1));
  r.dx_l1_exponent = fit_exponent(dx_series);

  for (double t : {0.05, 0.2, 1.0})
    for (int i = 0; i < 256; ++i) {
      const double x = kTwoPi * i / 256;
      r.max_fourier_gap =
          std::max(r.max_fourier_gap, std::abs(eta_images(t, x).value - eta_fourier(t, x).value));
    }
  for (double t : {0.05, 0.5, 5.0})
    r.max_l1_defect = std::max(r.max_l1_defect, std::abs(eta_l1_norm(t, 0) - 1.0));
  r.semigroup_error = semigroup_defect(0.1, 0.1);
  return r;
}

void write_kernel_csv(std::ostream& os, const KernelReport& r) {
  os << "quantity,p,t,value\n" << std::setprecision(17);
  for (const char* q : {"f0", "fx", "ftheta"})
    for (const auto& row : r.rows) {
      const std::string name = q;
      const double v = name == "f0" ? row.f0 : name == "fx" ? row.fx : row.ftheta;
      os << name << ',' << row.p << ',' << row.t << ',' << v << '\n';
    }
}

void write_kernel_summary(std::ostream& os, const KernelReport& r) {
  os << "domain: " << to_string(r.domain) << " x circle\n";
  os << "quantity p fitted target\n" << std::setprecision(6);
  for (const auto& f : r.fits)
    os << f.quantity << ' ' << f.p << ' ' << f.fitted << ' ' << f.target
       << (f.within(0.05) ? " ok" : " MISMATCH") << '\n';
  os << std::setprecision(3);
  os << "dx_l1_exponent " << r.dx_l1_exponent << '\n';
  os << "max_fourier_gap " << r.max_fourier_gap << '\n';
  os << "max_l1_defect " << r.max_l1_defect << '\n';
  os << "semigroup_error " << r.semigroup_error << '\n';
  os << "quadrature_converged " << (r.all_converged ? "yes" : "no") << '\n';
}

}  // namespace formica
