#include <doctest.h>

#include <functional>
#include <random>
#include <sstream>

#include "formica/spectral_field.hpp"

using namespace formica;

namespace {

CoefficientGrid random_hermitian(int n_f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  CoefficientGrid g(n_f);
  for (int xi = -n_f; xi <= n_f; ++xi)
    for (int zeta = -n_f; zeta <= n_f; ++zeta) {
      if (xi < 0 || (xi == 0 && zeta < 0)) continue;
      const Complex v = (xi == 0 && zeta == 0) ? Complex(u(rng), 0) : Complex(u(rng), u(rng));
      g.at(xi, zeta) = v;
      g.at(-xi, -zeta) = std::conj(v);
    }
  return g;
}

// Direct reconstruction, written independently of eval_probe.
double field_value(const CoefficientGrid& g, double x1, double x2) {
  double s = 0;
  const int n = g.n_f();
  for (int xi = -n; xi <= n; ++xi)
    for (int zeta = -n; zeta <= n; ++zeta) {
      const double ph = kTwoPi * (xi * x1 + zeta * x2);
      s += g.at(xi, zeta).real() * std::cos(ph) - g.at(xi, zeta).imag() * std::sin(ph);
    }
  return s;
}

double d5(const std::function<double(double)>& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

}  // namespace

TEST_CASE("grid layout and Hermitian check") {
  CoefficientGrid g(3);
  CHECK(g.side() == 7);
  CHECK(g.size() == 49);
  CHECK(g.index(-3, -3) == 0);
  CHECK(g.index(-3, -2) == 1);
  CHECK(g.index(3, 3) == 48);
  CHECK(g.is_hermitian());
  g.at(1, 2) = Complex(1, 1);
  CHECK_FALSE(g.is_hermitian(1e-12));
  g.at(-1, -2) = Complex(1, -1);
  CHECK(g.is_hermitian());
  CHECK_THROWS_AS(CoefficientGrid(0), std::invalid_argument);
  CHECK_THROWS_AS(CoefficientGrid(65), std::invalid_argument);
}

TEST_CASE("probe matches direct reconstruction and finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const int n_f = 1 + trial % 8;
    const CoefficientGrid g = random_hermitian(n_f, rng);
    const double x1 = u(rng), x2 = u(rng);
    const FieldProbe pr = eval_probe(g, TorusPoint(x1, x2));
    const double h = 1e-4;
    auto c1 = [&](double s) { return field_value(g, s, x2); };
    auto c2 = [&](double s) { return field_value(g, x1, s); };
    auto g1 = [&](double s) { return eval_probe(g, TorusPoint(s, x2)).grad.x(); };
    auto g2 = [&](double s) { return eval_probe(g, TorusPoint(x1, s)).grad.y(); };
    auto g1y = [&](double s) { return eval_probe(g, TorusPoint(x1, s)).grad.x(); };
    const double scale = 1.0 + std::abs(pr.hess.a11) + std::abs(pr.hess.a22);
    CHECK(pr.c == doctest::Approx(field_value(g, x1, x2)).epsilon(1e-12).scale(1.0));
    CHECK(std::abs(pr.grad.x() - d5(c1, x1, h)) < 1e-6 * scale);
    CHECK(std::abs(pr.grad.y() - d5(c2, x2, h)) < 1e-6 * scale);
    CHECK(std::abs(pr.hess.a11 - d5(g1, x1, h)) < 1e-6 * scale);
    CHECK(std::abs(pr.hess.a22 - d5(g2, x2, h)) < 1e-6 * scale);
    CHECK(std::abs(pr.hess.a12 - d5(g1y, x2, h)) < 1e-6 * scale);
  }
}

TEST_CASE("single-mode fields are exact") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  CoefficientGrid a(2);
  a.at(1, 0) = 1.0;
  a.at(-1, 0) = 1.0;
  CoefficientGrid b(2);
  b.at(0, 1) = Complex(0, 1);
  b.at(0, -1) = Complex(0, -1);
  CoefficientGrid m(2);  // 2cos(2π(x₁ + 2x₂))
  m.at(1, 2) = 1.0;
  m.at(-1, -2) = 1.0;
  for (int i = 0; i < 20; ++i) {
    const double x1 = u(rng), x2 = u(rng);
    const double tp = kTwoPi;
    const FieldProbe pa = eval_probe(a, TorusPoint(x1, x2));
    CHECK(std::abs(pa.c - 2 * std::cos(tp * x1)) < 1e-12);
    CHECK(std::abs(pa.grad.x() + 2 * tp * std::sin(tp * x1)) < 1e-12);
    CHECK(std::abs(pa.grad.y()) < 1e-12);
    CHECK(std::abs(pa.hess.a11 + 2 * tp * tp * std::cos(tp * x1)) < 1e-12);
    const FieldProbe pb = eval_probe(b, TorusPoint(x1, x2));
    CHECK(std::abs(pb.c + 2 * std::sin(tp * x2)) < 1e-12);
    CHECK(std::abs(pb.grad.y() + 2 * tp * std::cos(tp * x2)) < 1e-12);
    CHECK(std::abs(pb.hess.a22 - 2 * tp * tp * std::sin(tp * x2)) < 1e-12);
    const FieldProbe pm = eval_probe(m, TorusPoint(x1, x2));
    const double ph = tp * (x1 + 2 * x2);
    CHECK(std::abs(pm.c - 2 * std::cos(ph)) < 1e-12);
    CHECK(std::abs(pm.hess.a12 + 2 * tp * tp * 2 * std::cos(ph)) < 1e-11);
    CHECK(std::abs(pm.hess.a22 + 2 * tp * tp * 4 * std::cos(ph)) < 1e-11);
  }
}

TEST_CASE("Dirac coefficients") {
  const TorusPoint x(0.25, 0.0);
  const CoefficientGrid unscaled = dirac_coefficients(x, 0.0, 1.0, 4, RateConvention::unscaled);
  const CoefficientGrid phys = dirac_coefficients(x, 0.0, 1.0, 4, RateConvention::physical);
  CHECK(std::abs(unscaled.at(1, 0) - Complex(0, 1)) < 1e-15);
  CHECK(std::abs(phys.at(1, 0) - Complex(0, -1)) < 1e-15);
  CHECK(unscaled.hermitian_defect() == 0.0);
  CHECK(phys.hermitian_defect() == 0.0);

  // Regularization factor exp(−σ_c·eps·κ).
  const CoefficientGrid r = dirac_coefficients(TorusPoint(0, 0), 0.01, 2.0, 4, RateConvention::physical);
  CHECK(r.at(2, 1).real() == doctest::Approx(std::exp(-2.0 * 0.01 * 4 * kPi * kPi * 5)));
  const CoefficientGrid rp = dirac_coefficients(TorusPoint(0, 0), 0.01, 2.0, 4, RateConvention::unscaled);
  CHECK(rp.at(2, 1).real() == doctest::Approx(std::exp(-2.0 * 0.01 * 5)));
}

TEST_CASE("physical deposit peaks at the particle") {
  const TorusPoint x(0.3, 0.7);
  const CoefficientGrid g = dirac_coefficients(x, 0.002, 1.0, 8);
  double best = -1e300, b1 = 0, b2 = 0;
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 100; ++j) {
      const double v = eval_probe(g, TorusPoint(i / 100.0, j / 100.0)).c;
      if (v > best) {
        best = v;
        b1 = i / 100.0;
        b2 = j / 100.0;
      }
    }
  CHECK(b1 == doctest::Approx(0.3));
  CHECK(b2 == doctest::Approx(0.7));
}

TEST_CASE("dirac_coefficients_into scales and matches") {
  const TorusPoint x(0.1, 0.9);
  const CoefficientGrid g = dirac_coefficients(x, 0.01, 1.0, 3);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(g.size());
  dirac_coefficients_into(x, 0.01, 1.0, 3, RateConvention::physical, 0.5, out.data());
  CHECK((out - 0.5 * g.coeffs()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("implicit step converges to s/(gamma + sigma kappa)") {
  std::mt19937_64 rng(5);
  const CoefficientGrid s = random_hermitian(4, rng);
  const double gamma = 0.7, sigma = 0.01, dt = 0.5;
  CoefficientGrid c(4);
  for (int it = 0; it < 2000; ++it) c = decay_step(c, s, dt, gamma, sigma);
  for (int xi = -4; xi <= 4; ++xi)
    for (int zeta = -4; zeta <= 4; ++zeta) {
      const double k = 4 * kPi * kPi * (xi * xi + zeta * zeta);
      CHECK(std::abs(c.at(xi, zeta) - s.at(xi, zeta) / (gamma + sigma * k)) < 1e-10);
    }
  CHECK(std::abs(c.at(0, 0) - s.at(0, 0) / gamma) < 1e-10);
}

TEST_CASE("zero-source step contracts every mode") {
  std::mt19937_64 rng(9);
  const CoefficientGrid c = random_hermitian(5, rng);
  const CoefficientGrid zero(5);
  for (auto conv : {RateConvention::physical, RateConvention::unscaled}) {
    const CoefficientGrid d = decay_step(c, zero, 0.1, 0.3, 1.0, conv);
    for (Eigen::Index i = 0; i < c.size(); ++i)
      CHECK(std::abs(d.coeffs()[i]) < std::abs(c.coeffs()[i]));
    const Eigen::VectorXd f = decay_factors(5, 0.1, 0.3, 1.0, conv);
    CHECK(f[c.index(0, 0)] == doctest::Approx(1.0 / 1.03));
  }
}

TEST_CASE("axpy and snapshot round trip") {
  std::mt19937_64 rng(13);
  const CoefficientGrid a = random_hermitian(3, rng), b = random_hermitian(3, rng);
  const CoefficientGrid c = axpy(a, -2.0, b);
  CHECK(std::abs(c.at(1, -2) - (a.at(1, -2) - 2.0 * b.at(1, -2))) < 1e-15);
  std::stringstream ss;
  write_field_snapshot(ss, a, RateConvention::unscaled);
  RateConvention conv = RateConvention::physical;
  const CoefficientGrid back = read_field_snapshot(ss, &conv);
  CHECK(back == a);
  CHECK(conv == RateConvention::unscaled);
  std::stringstream bad("xi,zeta\n");
  CHECK_THROWS(read_field_snapshot(bad));
  CHECK(rate_convention_from_string("physical") == RateConvention::physical);
  CHECK_THROWS(rate_convention_from_string("other"));
}
