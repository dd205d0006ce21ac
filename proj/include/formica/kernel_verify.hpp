#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace formica {

/// Heat kernel of ∂_t = ∂²_xx evaluated with a certified truncation.
struct KernelValue {
  double value = 0;
  double tail_bound = 0;  // bound on the omitted terms
  int terms = 0;          // images K or Fourier cutoff M actually used
};

/// (4πt)^{-1/2} Σ_{|k|≤K} exp(−(x + 2πk)²/4t) on the 2π-circle. K < 0 picks the
/// smallest K with tail bound below 1e-16.
KernelValue eta_images(double t, double x, int K = -1);

/// (1/2π)(1 + 2Σ_{n≤M} e^{−tn²} cos nx), unit mass on [0, 2π). M < 0 as above.
KernelValue eta_fourier(double t, double x, int M = -1);

/// ∂_x of the image sum.
double eta_images_dx(double t, double x);

/// ∫_{-π}^{π} |∂^d η_t| dx by split Gauss–Legendre quadrature, d ∈ {0, 1}.
double eta_l1_norm(double t, int derivative);

/// max_i |η_{t+s}(x_i) − (η_t ⊛ η_s)(x_i)| on n equispaced points.
double semigroup_defect(double t, double s, int n = 256);

/// Spatial factor of the product kernel: R² or the unit torus T²₁.
enum class KernelDomain { line, circle };
std::string to_string(KernelDomain d);
KernelDomain kernel_domain_from_string(const std::string& s);

/// Mixed norms ‖·‖_{p,1} (inner L¹ in θ, outer L^p in x) of g_t, ∂_{x₁}g_t, ∂_θ g_t.
struct KernelNorms {
  double t = 0;
  double p = 1;
  double f0 = 0, fx = 0, ftheta = 0;
  double rel_change = 0;  // largest relative change against the half-resolution grid
  bool converged = true;  // rel_change ≤ 1e-8
};

/// g_t(x, θ) = G_t(x) η_t(θ) integrated by a literal tensor-product sum over
/// `points`³ Gauss–Legendre nodes (points a multiple of 64, ≤ 256).
KernelNorms kernel_norms(double t, double p, KernelDomain domain = KernelDomain::line,
                         int points = 256);
/// All p at once for each t, parallel over t.
std::vector<KernelNorms> kernel_norm_table(const std::vector<double>& ts,
                                           const std::vector<double>& ps, KernelDomain domain,
                                           int points = 256, int threads = 1);

/// Least-squares slope of log(value) against log(t). ≥ 4 positive samples.
double fit_exponent(const std::vector<std::pair<double, double>>& samples);

struct ExponentFit {
  std::string quantity;  // f0, fx, ftheta
  double p = 1;
  double fitted = 0;
  double target = 0;
  bool within(double rel) const;
};

struct KernelReport {
  KernelDomain domain = KernelDomain::line;
  std::vector<KernelNorms> rows;
  std::vector<ExponentFit> fits;
  double dx_l1_exponent = 0;      // slope of ‖∂_x η_t‖₁
  double max_fourier_gap = 0;     // images vs Fourier on 256 points, t ∈ {0.05, 0.2, 1}
  double max_l1_defect = 0;       // |‖η_t‖₁ − 1|, t ∈ {0.05, 0.5, 5}
  double semigroup_error = 0;     // t = s = 0.1
  bool all_converged = true;
};

struct KernelReportConfig {
  double t_min = 1e-3;
  double t_max = 1e-1;
  int n_t = 9;
  std::vector<double> ps{1, 2, 5};
  KernelDomain domain = KernelDomain::line;
  int points = 256;
  int threads = 1;
};

KernelReport kernel_report(const KernelReportConfig& cfg);

/// CSV `quantity,p,t,value`.
void write_kernel_csv(std::ostream& os, const KernelReport& r);
/// Plain-text block of fitted against theoretical exponents and the consistency checks.
void write_kernel_summary(std::ostream& os, const KernelReport& r);

}  // namespace formica
