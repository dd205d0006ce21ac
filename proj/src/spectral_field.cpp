#include "formica/spectral_field.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace formica {
namespace {

constexpr int kMaxNf = 64;

void check_nf(int n_f) {
  if (n_f < 1 || n_f > kMaxNf)
    throw std::invalid_argument("n_f must lie in [1, " + std::to_string(kMaxNf) + "]");
}

}  // namespace

std::string_view to_string(RateConvention conv) {
  return conv == RateConvention::physical ? "physical" : "unscaled";
}

RateConvention rate_convention_from_string(std::string_view s) {
  if (s == "physical") return RateConvention::physical;
  if (s == "unscaled") return RateConvention::unscaled;
  throw std::invalid_argument("unknown rate convention: " + std::string(s));
}

CoefficientGrid::CoefficientGrid(int n_f) : n_f_(n_f) {
  check_nf(n_f);
  coeffs_ = Eigen::VectorXcd::Zero(Eigen::Index(side()) * side());
}

double CoefficientGrid::hermitian_defect() const {
  double worst = 0.0;
  for (int xi = -n_f_; xi <= n_f_; ++xi)
    for (int zeta = -n_f_; zeta <= n_f_; ++zeta)
      worst = std::max(worst, std::abs(at(-xi, -zeta) - std::conj(at(xi, zeta))));
  return worst;
}

void dirac_coefficients_into(const TorusPoint& x, double eps, double sigma_c, int n_f,
                             RateConvention conv, double weight, Complex* out) {
  check_nf(n_f);
  if (!(eps >= 0.0)) throw std::invalid_argument("dirac_coefficients: eps must be >= 0");
  const int side = 2 * n_f + 1;
  const double sign = conv == RateConvention::physical ? -1.0 : 1.0;

  std::array<Complex, 2 * kMaxNf + 1> a{};
  std::array<Complex, 2 * kMaxNf + 1> b{};
  for (int k = 0; k <= n_f; ++k) {
    a[n_f + k] = std::polar(1.0, sign * kTwoPi * k * x.x1());
    b[n_f + k] = std::polar(1.0, sign * kTwoPi * k * x.x2());
    a[n_f - k] = std::conj(a[n_f + k]);
    b[n_f - k] = std::conj(b[n_f + k]);
  }
  for (int xi = -n_f; xi <= n_f; ++xi) {
    Complex* row = out + (xi + n_f) * side;
    for (int zeta = -n_f; zeta <= n_f; ++zeta) {
      const double reg = std::exp(-sigma_c * eps * laplacian_symbol(xi, zeta, conv));
      row[zeta + n_f] = (weight * reg) * (a[n_f + xi] * b[n_f + zeta]);
    }
  }
}

CoefficientGrid dirac_coefficients(const TorusPoint& x, double eps, double sigma_c, int n_f,
                                   RateConvention conv) {
  CoefficientGrid g(n_f);
  dirac_coefficients_into(x, eps, sigma_c, n_f, conv, 1.0, g.coeffs().data());
  return g;
}

Eigen::VectorXd decay_factors(int n_f, double dt, double gamma, double sigma_c,
                              RateConvention conv) {
  check_nf(n_f);
  const int side = 2 * n_f + 1;
  Eigen::VectorXd f(side * side);
  for (int xi = -n_f; xi <= n_f; ++xi)
    for (int zeta = -n_f; zeta <= n_f; ++zeta)
      f[(xi + n_f) * side + zeta + n_f] =
          1.0 / (1.0 + dt * (gamma + sigma_c * laplacian_symbol(xi, zeta, conv)));
  return f;
}

CoefficientGrid decay_step(const CoefficientGrid& grid, const CoefficientGrid& source, double dt,
                           double gamma, double sigma_c, RateConvention conv) {
  if (grid.n_f() != source.n_f()) throw std::invalid_argument("decay_step: n_f mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("decay_step: dt must be > 0");
  CoefficientGrid out(grid.n_f());
  const Eigen::VectorXd f = decay_factors(grid.n_f(), dt, gamma, sigma_c, conv);
  out.coeffs() = (grid.coeffs() + dt * source.coeffs()).cwiseProduct(f.cast<Complex>());
  return out;
}

FieldProbe eval_probe(const Complex* coeffs, int n_f, const TorusPoint& x) {
  const int side = 2 * n_f + 1;
  std::array<Complex, 2 * kMaxNf + 1> ez{};
  for (int k = 0; k <= n_f; ++k) {
    ez[n_f + k] = std::polar(1.0, kTwoPi * k * x.x2());
    ez[n_f - k] = std::conj(ez[n_f + k]);
  }

  double value = 0, gx = 0, gy = 0, hxx = 0, hxy = 0, hyy = 0;
  for (int xi = -n_f; xi <= n_f; ++xi) {
    const Complex ex = std::polar(1.0, kTwoPi * xi * x.x1());
    const Complex* row = coeffs + (xi + n_f) * side;
    double s_re = 0, s_im = 0, s_im_z = 0, s_re_z = 0, s_re_zz = 0;
    for (int zeta = -n_f; zeta <= n_f; ++zeta) {
      // w = ĉ e^{iφ}: Re w = Re ĉ cos φ − Im ĉ sin φ, Im w = Re ĉ sin φ + Im ĉ cos φ.
      const Complex w = row[zeta + n_f] * (ex * ez[zeta + n_f]);
      const double z = zeta;
      s_re += w.real();
      s_im += w.imag();
      s_im_z += z * w.imag();
      s_re_z += z * w.real();
      s_re_zz += z * z * w.real();
    }
    const double xd = xi;
    value += s_re;
    gx += xd * s_im;
    gy += s_im_z;
    hxx += xd * xd * s_re;
    hxy += xd * s_re_z;
    hyy += s_re_zz;
  }
  const double k1 = -kTwoPi;
  const double k2 = -kTwoPi * kTwoPi;
  return FieldProbe{value, Vec2d(k1 * gx, k1 * gy), HessianSymd{k2 * hxx, k2 * hxy, k2 * hyy}};
}

FieldProbe eval_probe(const CoefficientGrid& grid, const TorusPoint& x) {
  return eval_probe(grid.coeffs().data(), grid.n_f(), x);
}

CoefficientGrid axpy(const CoefficientGrid& dst, double scale, const CoefficientGrid& src) {
  if (dst.n_f() != src.n_f()) throw std::invalid_argument("axpy: n_f mismatch");
  CoefficientGrid out = dst;
  out.coeffs() += scale * src.coeffs();
  return out;
}

void write_field_snapshot(std::ostream& os, const CoefficientGrid& grid, RateConvention conv) {
  os << "# n_f=" << grid.n_f() << " rate_convention=" << to_string(conv) << '\n';
  os << "xi,zeta,re,im\n";
  os << std::setprecision(17);
  for (int xi = -grid.n_f(); xi <= grid.n_f(); ++xi)
    for (int zeta = -grid.n_f(); zeta <= grid.n_f(); ++zeta) {
      const Complex& c = grid.at(xi, zeta);
      os << xi << ',' << zeta << ',' << c.real() << ',' << c.imag() << '\n';
    }
}

CoefficientGrid read_field_snapshot(std::istream& is, RateConvention* conv) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# n_f=", 0) != 0)
    throw std::runtime_error("field snapshot: missing header");
  int n_f = 0;
  std::string tag;
  {
    std::istringstream hs(line.substr(6));
    hs >> n_f;
    std::string rest;
    hs >> rest;
    const std::string key = "rate_convention=";
    if (rest.rfind(key, 0) != 0) throw std::runtime_error("field snapshot: bad header");
    tag = rest.substr(key.size());
  }
  const RateConvention parsed = rate_convention_from_string(tag);
  if (conv) *conv = parsed;
  if (!std::getline(is, line) || line != "xi,zeta,re,im")
    throw std::runtime_error("field snapshot: missing column header");

  CoefficientGrid grid(n_f);
  Eigen::Index rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int xi = 0, zeta = 0;
    double re = 0, im = 0;
    char c1, c2, c3;
    if (!(ls >> xi >> c1 >> zeta >> c2 >> re >> c3 >> im) || std::abs(xi) > n_f ||
        std::abs(zeta) > n_f)
      throw std::runtime_error("field snapshot: malformed row: " + line);
    grid.at(xi, zeta) = Complex(re, im);
    ++rows;
  }
  if (rows != grid.size()) throw std::runtime_error("field snapshot: wrong row count");
  return grid;
}

}  // namespace formica
