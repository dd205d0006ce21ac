#pragma once

#include <complex>
#include <iosfwd>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "formica/core.hpp"

namespace formica {

using Complex = std::complex<double>;

/// Frequency convention for the Laplacian symbol κ(ξ,ζ) and the Dirac phase sign.
///
/// `physical`: κ = 4π²(ξ²+ζ²), Dirac coefficients e^{-i2π(ξx₁+ζx₂)} so the
/// reconstructed deposit peaks at the particle. `unscaled`: κ = ξ²+ζ² and phase
/// e^{+i2π(ξx₁+ζx₂)}.
enum class RateConvention { physical, unscaled };

std::string_view to_string(RateConvention conv);
RateConvention rate_convention_from_string(std::string_view s);

/// Laplacian decay symbol for mode (ξ, ζ).
inline double laplacian_symbol(int xi, int zeta, RateConvention conv) {
  const double k2 = double(xi) * xi + double(zeta) * zeta;
  return conv == RateConvention::physical ? 4.0 * kPi * kPi * k2 : k2;
}

/// Truncated Fourier coefficients c[ξ,ζ], -n_f ≤ ξ,ζ ≤ n_f, of a real field on T²₁.
///
/// Storage is the full (2n_f+1)² grid, flattened with ζ fastest. Reconstruction
/// is c(x) = Σ Re(c[ξ,ζ]) cos(2π(ξx₁+ζx₂)) − Im(c[ξ,ζ]) sin(2π(ξx₁+ζx₂)).
class CoefficientGrid {
 public:
  CoefficientGrid() = default;
  explicit CoefficientGrid(int n_f);
  static CoefficientGrid zero(int n_f) { return CoefficientGrid(n_f); }

  int n_f() const { return n_f_; }
  int side() const { return 2 * n_f_ + 1; }
  Eigen::Index size() const { return coeffs_.size(); }

  Eigen::Index index(int xi, int zeta) const {
    return Eigen::Index(xi + n_f_) * side() + (zeta + n_f_);
  }
  Complex& at(int xi, int zeta) { return coeffs_[index(xi, zeta)]; }
  const Complex& at(int xi, int zeta) const { return coeffs_[index(xi, zeta)]; }

  Eigen::VectorXcd& coeffs() { return coeffs_; }
  const Eigen::VectorXcd& coeffs() const { return coeffs_; }

  /// max |c[-ξ,-ζ] - conj(c[ξ,ζ])|, zero for an exactly real field.
  double hermitian_defect() const;
  bool is_hermitian(double tol = 0.0) const { return hermitian_defect() <= tol; }

  friend bool operator==(const CoefficientGrid& a, const CoefficientGrid& b) {
    return a.n_f_ == b.n_f_ && a.coeffs_ == b.coeffs_;
  }

 private:
  int n_f_ = 0;
  Eigen::VectorXcd coeffs_;
};

/// Coefficients of the Dirac mass at `x` smoothed by the heat kernel at time σ_c·eps.
CoefficientGrid dirac_coefficients(const TorusPoint& x, double eps, double sigma_c, int n_f,
                                   RateConvention conv = RateConvention::physical);

/// Same as dirac_coefficients, scaled by `weight` and written into `out` (length (2n_f+1)²).
void dirac_coefficients_into(const TorusPoint& x, double eps, double sigma_c, int n_f,
                             RateConvention conv, double weight, Complex* out);

/// One implicit-Euler step of dc/dt = -(γ + σ_c κ) c + s, mode by mode.
CoefficientGrid decay_step(const CoefficientGrid& grid, const CoefficientGrid& source, double dt,
                           double gamma, double sigma_c,
                           RateConvention conv = RateConvention::physical);

/// Per-mode factor 1/(1 + dt(γ + σ_c κ)) in grid order.
Eigen::VectorXd decay_factors(int n_f, double dt, double gamma, double sigma_c,
                              RateConvention conv);

/// c, ∇c and ∇²c of the reconstructed field at `x`, in one pass over modes.
FieldProbe eval_probe(const CoefficientGrid& grid, const TorusPoint& x);
FieldProbe eval_probe(const Complex* coeffs, int n_f, const TorusPoint& x);

/// dst + scale·src, mode-wise.
CoefficientGrid axpy(const CoefficientGrid& dst, double scale, const CoefficientGrid& src);

/// Field snapshot: header `# n_f=<n> rate_convention=<tag>`, then `xi,zeta,re,im` rows.
void write_field_snapshot(std::ostream& os, const CoefficientGrid& grid, RateConvention conv);
CoefficientGrid read_field_snapshot(std::istream& is, RateConvention* conv = nullptr);

}  // namespace formica
