#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "formica/kernel_verify.hpp"

using namespace formica;

namespace {

constexpr double kPi = std::numbers::pi;

// ‖h_t‖_p for the line heat kernel h_t(x) = (4πt)^{-1/2} exp(−x²/4t).
double line_norm(double t, double p) {
  return std::pow(4 * kPi * t, -0.5 + 0.5 / p) * std::pow(p, -0.5 / p);
}

double line_dx_norm(double t, double p) {
  const double pp = std::pow(4 * kPi * t, -p / 2) * std::pow(2 * t, -p) *
                    std::tgamma((p + 1) / 2) * std::pow(4 * t / p, (p + 1) / 2);
  return std::pow(pp, 1 / p);
}

}  // namespace

TEST_CASE("circle heat kernel values") {
  const double t = 1e-3;
  CHECK(eta_images(t, 0).value == doctest::Approx(1 / std::sqrt(4 * kPi * t)).epsilon(1e-14));
  CHECK(eta_fourier(50, 1.3).value == doctest::Approx(1 / (2 * kPi)).epsilon(1e-12));

  for (double tt : {0.05, 0.5, 5.0}) {
    const int n = 2000;
    double s = 0;
    for (int i = 0; i < n; ++i) s += eta_images(tt, -kPi + 2 * kPi * i / n).value;
    CHECK(s * 2 * kPi / n == doctest::Approx(1.0).epsilon(1e-12));
  }

  for (double x : {0.1, 0.9, 2.5, 3.1}) {
    CHECK(std::abs(eta_images(0.3, x).value - eta_images(0.3, -x).value) < 1e-14);
    CHECK(eta_images(0.3, x).value < eta_images(0.3, 0).value);
  }

  for (double tt : {0.01, 0.2, 1.0, 4.0})
    for (double x : {0.0, 0.7, 2.0, kPi}) {
      const KernelValue a = eta_images(tt, x), b = eta_fourier(tt, x);
      CHECK(std::abs(a.value - b.value) < 1e-10);
      CHECK(a.tail_bound < 1e-15);
      CHECK(b.tail_bound < 1e-15);
    }

  const double h = 1e-5;
  const double fd = (eta_images(0.2, 0.4 + h).value - eta_images(0.2, 0.4 - h).value) / (2 * h);
  CHECK(eta_images_dx(0.2, 0.4) == doctest::Approx(fd).epsilon(1e-7));

  CHECK_THROWS_AS(eta_images(0, 0), std::invalid_argument);
  CHECK_THROWS_AS(eta_fourier(-1, 0), std::invalid_argument);
}

TEST_CASE("circle kernel norms and semigroup") {
  for (double t : {0.05, 0.5, 5.0}) CHECK(eta_l1_norm(t, 0) == doctest::Approx(1.0).epsilon(1e-12));
  // ‖∂η‖₁ = 2(η(0) − η(π)) since η is monotone on [0, π].
  const double t = 0.1;
  CHECK(eta_l1_norm(t, 1) ==
        doctest::Approx(2 * (eta_images(t, 0).value - eta_images(t, kPi).value)).epsilon(1e-10));
  CHECK(semigroup_defect(0.1, 0.1) < 1e-8);
  CHECK(semigroup_defect(0.02, 0.3, 128) < 1e-8);
}

TEST_CASE("mixed norms on the line match closed forms") {
  const double t = 0.01;
  for (double p : {1.0, 2.0, 5.0}) {
    const KernelNorms n = kernel_norms(t, p, KernelDomain::line, 256);
    const double h = line_norm(t, p), hd = line_dx_norm(t, p);
    CHECK(n.converged);
    CHECK(n.f0 == doctest::Approx(h * h).epsilon(1e-8));
    CHECK(n.fx == doctest::Approx(hd * h).epsilon(1e-8));
    CHECK(n.ftheta == doctest::Approx(h * h * 2 / std::sqrt(4 * kPi * t)).epsilon(1e-8));
  }
  CHECK(kernel_norms(0.05, 1, KernelDomain::line, 128).f0 == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("circle and line agree for small t") {
  for (double p : {1.0, 2.0}) {
    const KernelNorms a = kernel_norms(1e-3, p, KernelDomain::line, 128);
    const KernelNorms b = kernel_norms(1e-3, p, KernelDomain::circle, 128);
    CHECK(b.f0 == doctest::Approx(a.f0).epsilon(1e-8));
    CHECK(b.fx == doctest::Approx(a.fx).epsilon(1e-8));
  }
}

TEST_CASE("kernel_norms rejects bad input") {
  CHECK_THROWS_AS(kernel_norms(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(kernel_norms(-1, 1), std::invalid_argument);
  CHECK_THROWS_AS(kernel_norms(0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(kernel_norms(0.1, 1, KernelDomain::line, 100), std::invalid_argument);
  CHECK_THROWS_AS(kernel_norms(0.1, 1, KernelDomain::line, 320), std::invalid_argument);
}

TEST_CASE("fit_exponent") {
  std::vector<std::pair<double, double>> s;
  for (double t : {0.001, 0.01, 0.1, 1.0}) s.emplace_back(t, 3.0 * std::pow(t, -0.75));
  CHECK(fit_exponent(s) == doctest::Approx(-0.75).epsilon(1e-12));
  s.pop_back();
  CHECK_THROWS_AS(fit_exponent(s), std::invalid_argument);
  s.emplace_back(1.0, 0.0);
  CHECK_THROWS_AS(fit_exponent(s), std::invalid_argument);

  ExponentFit f{"f0", 2, -0.52, -0.5};
  CHECK(f.within(0.05));
  CHECK_FALSE(f.within(0.01));
}

TEST_CASE("kernel report on the line") {
  KernelReportConfig cfg;
  cfg.n_t = 5;
  cfg.points = 64;
  const KernelReport r = kernel_report(cfg);
  CHECK(r.rows.size() == 15);
  CHECK(r.fits.size() == 9);
  for (const auto& f : r.fits) {
    const double expected =
        f.quantity == "f0" ? -(1 - 1 / f.p) : -(1 - 1 / f.p) - 0.5;
    CHECK(f.target == doctest::Approx(expected));
    CHECK(f.within(0.05));
  }
  CHECK(r.dx_l1_exponent > -0.55);
  CHECK(r.dx_l1_exponent < -0.45);
  CHECK(r.max_fourier_gap < 1e-10);
  CHECK(r.max_l1_defect < 1e-10);
  CHECK(r.semigroup_error < 1e-8);

  std::ostringstream csv, sum;
  write_kernel_csv(csv, r);
  write_kernel_summary(sum, r);
  CHECK(csv.str().rfind("quantity,p,t,value\n", 0) == 0);
  const std::string rows = csv.str();
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 45);
  CHECK(sum.str().find("f0") != std::string::npos);
}
