#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace formica {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
using Vec2d = Vec2<double>;

/// Reduces `value` into [0, period). Total on finite input.
template <typename Scalar>
inline Scalar wrap_periodic(Scalar value, Scalar period) {
  Scalar r = value - period * std::floor(value / period);
  // floor can round a tiny negative input up to exactly `period`.
  if (r >= period || r < Scalar(0)) r = Scalar(0);
  return r;
}

/// Orientation on the 2π-torus, stored as its canonical representative.
class Angle {
 public:
  constexpr Angle() = default;
  explicit Angle(double radians) : value_(wrap_periodic(radians, kTwoPi)) {}
  double value() const { return value_; }
  friend bool operator==(const Angle&, const Angle&) = default;

 private:
  double value_ = 0.0;
};

/// Point on the unit torus T²₁, each coordinate in [0, 1).
class TorusPoint {
 public:
  constexpr TorusPoint() = default;
  TorusPoint(double x1, double x2)
      : x1_(wrap_periodic(x1, 1.0)), x2_(wrap_periodic(x2, 1.0)) {}
  double x1() const { return x1_; }
  double x2() const { return x2_; }
  Vec2d vec() const { return {x1_, x2_}; }
  friend bool operator==(const TorusPoint&, const TorusPoint&) = default;

 private:
  double x1_ = 0.0;
  double x2_ = 0.0;
};

/// Symmetric 2x2 Hessian, three stored entries.
template <typename Scalar>
struct HessianSym {
  Scalar a11{0};
  Scalar a12{0};
  Scalar a22{0};

  static HessianSym identity() { return {Scalar(1), Scalar(0), Scalar(1)}; }
  static HessianSym diag(Scalar d1, Scalar d2) { return {d1, Scalar(0), d2}; }

  Vec2<Scalar> apply(const Vec2<Scalar>& v) const {
    return {a11 * v.x() + a12 * v.y(), a12 * v.x() + a22 * v.y()};
  }
  Eigen::Matrix<Scalar, 2, 2> dense() const {
    Eigen::Matrix<Scalar, 2, 2> m;
    m << a11, a12, a12, a22;
    return m;
  }
  HessianSym operator+(const HessianSym& o) const {
    return {a11 + o.a11, a12 + o.a12, a22 + o.a22};
  }
  HessianSym operator-(const HessianSym& o) const {
    return {a11 - o.a11, a12 - o.a12, a22 - o.a22};
  }
  HessianSym operator*(Scalar s) const { return {a11 * s, a12 * s, a22 * s}; }
};
using HessianSymd = HessianSym<double>;

/// Value, gradient and Hessian of a scalar field at one point.
struct FieldProbe {
  double c = 0.0;
  Vec2d grad = Vec2d::Zero();
  HessianSymd hess{};

  FieldProbe operator-(const FieldProbe& o) const {
    return {c - o.c, grad - o.grad, hess - o.hess};
  }
  bool finite() const {
    return std::isfinite(c) && grad.allFinite() && std::isfinite(hess.a11) &&
           std::isfinite(hess.a12) && std::isfinite(hess.a22);
  }
};

template <typename Scalar>
inline Vec2<Scalar> unit_direction(Scalar theta) {
  using std::cos;
  using std::sin;
  return {cos(theta), sin(theta)};
}

template <typename Scalar>
inline Vec2<Scalar> unit_normal(Scalar theta) {
  using std::cos;
  using std::sin;
  return {-sin(theta), cos(theta)};
}

inline Vec2d unit_direction(Angle theta) { return unit_direction(theta.value()); }
inline Vec2d unit_normal(Angle theta) { return unit_normal(theta.value()); }

/// Angular steering drift: v⊥(θ)·p + τ v⊥(θ)·A v(θ).
template <typename Scalar>
inline Scalar drift_B(Scalar theta, const Vec2<Scalar>& grad, const HessianSym<Scalar>& hess,
                      Scalar tau) {
  const Vec2<Scalar> v = unit_direction(theta);
  const Vec2<Scalar> vp = unit_normal(theta);
  return vp.dot(grad) + tau * vp.dot(hess.apply(v));
}

/// Potential of the drift: v(θ)·p + (τ/2) v(θ)·A v(θ), so that ∂θ H = B.
template <typename Scalar>
inline Scalar potential_H(Scalar theta, const Vec2<Scalar>& grad, const HessianSym<Scalar>& hess,
                          Scalar tau) {
  const Vec2<Scalar> v = unit_direction(theta);
  return v.dot(grad) + Scalar(0.5) * tau * v.dot(hess.apply(v));
}

inline double drift_B(Angle theta, const Vec2d& grad, const HessianSymd& hess, double tau) {
  return drift_B(theta.value(), grad, hess, tau);
}
inline double potential_H(Angle theta, const Vec2d& grad, const HessianSymd& hess, double tau) {
  return potential_H(theta.value(), grad, hess, tau);
}

/// Physical constants of the model. β (antenna half-angle) is absorbed into chi.
struct ModelParams {
  double lambda = 1.0;       // speed
  double chi = 1.0;          // reaction strength
  double tau = 0.0;          // anticipation rate
  double sigma_x = 1.0;
  double sigma_theta = 1.0;
  double sigma_c = 1.0;
  double gamma = 1.0;        // evaporation
  double mu = 1.0;           // deposition

  /// Every violated constraint, empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Parameters of the normalized system plus the factors that map it back.
struct NormalizedParams {
  ModelParams params;  // sigma_x = sigma_theta = mu = 1, sigma_c holds σ = σ_c/σ_x
  double time_scale = 1.0;   // t_raw = t_norm / time_scale
  double space_scale = 1.0;  // x_raw = space_scale · x_norm
  double field_scale = 1.0;  // c_raw = field_scale · c_norm

  double sigma() const { return params.sigma_c; }
};

/// Forward substitution into the normalized system; throws std::invalid_argument
/// on parameters that violate ModelParams invariants.
NormalizedParams normalize_params(const ModelParams& raw);

}  // namespace formica
