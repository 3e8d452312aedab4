#pragma once

// Symmetric second-order tensors in the plane (plane stress) and the
// isotropic elastic operator acting on them.
//
// Shear is stored as the tensorial component (eps_xy = gamma_xy / 2). The
// engineering factor only shows up in the element B-operator.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace dstrain {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct SymTensor2 {
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;

  static constexpr SymTensor2 zero() { return {}; }
  static constexpr SymTensor2 diag(double a, double b) { return {a, b, 0.0}; }

  constexpr SymTensor2& operator+=(const SymTensor2& o) {
    xx += o.xx;
    yy += o.yy;
    xy += o.xy;
    return *this;
  }
  constexpr SymTensor2& operator-=(const SymTensor2& o) {
    xx -= o.xx;
    yy -= o.yy;
    xy -= o.xy;
    return *this;
  }
  constexpr SymTensor2& operator*=(double s) {
    xx *= s;
    yy *= s;
    xy *= s;
    return *this;
  }

  friend constexpr SymTensor2 operator+(SymTensor2 a, const SymTensor2& b) { return a += b; }
  friend constexpr SymTensor2 operator-(SymTensor2 a, const SymTensor2& b) { return a -= b; }
  friend constexpr SymTensor2 operator-(SymTensor2 a) { return a *= -1.0; }
  friend constexpr SymTensor2 operator*(double s, SymTensor2 a) { return a *= s; }
  friend constexpr SymTensor2 operator*(SymTensor2 a, double s) { return a *= s; }
  friend constexpr bool operator==(const SymTensor2&, const SymTensor2&) = default;

  constexpr double operator[](int i) const { return i == 0 ? xx : (i == 1 ? yy : xy); }
  constexpr double& operator[](int i) { return i == 0 ? xx : (i == 1 ? yy : xy); }

  bool finite() const { return std::isfinite(xx) && std::isfinite(yy) && std::isfinite(xy); }
};

/// Full double contraction a:b (the shear term counts twice).
inline double contract(const SymTensor2& a, const SymTensor2& b) {
  return a.xx * b.xx + a.yy * b.yy + 2.0 * a.xy * b.xy;
}

/// Frobenius norm.
inline double norm(const SymTensor2& t) { return std::sqrt(contract(t, t)); }

inline SymTensor2 outer(Vec2 a) { return {a.x * a.x, a.y * a.y, a.x * a.y}; }

/// n^T t n
inline double project(const SymTensor2& t, Vec2 n) {
  return t.xx * n.x * n.x + 2.0 * t.xy * n.x * n.y + t.yy * n.y * n.y;
}

/// Rotates the tensor by angle theta (counter-clockwise): R t R^T.
inline SymTensor2 rotate(const SymTensor2& t, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * c * t.xx - 2.0 * c * s * t.xy + s * s * t.yy,
          s * s * t.xx + 2.0 * c * s * t.xy + c * c * t.yy,
          c * s * (t.xx - t.yy) + (c * c - s * s) * t.xy};
}

inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Principal values (descending) and the matching orthonormal directions.
struct Spectral2 {
  std::array<double, 2> values{};
  std::array<Vec2, 2> directions{Vec2{1.0, 0.0}, Vec2{0.0, 1.0}};

  SymTensor2 reconstruct() const {
    return values[0] * outer(directions[0]) + values[1] * outer(directions[1]);
  }
};

/// Eigenvalues closer than this (relative) are treated as a double root.
inline constexpr double kSpectralTieTolerance = 1e-12;

/// Closed-form 2x2 symmetric eigen-decomposition. Ties return the
/// canonical basis so the output is deterministic.
inline Spectral2 spectral(const SymTensor2& t) {
  const double mean = 0.5 * (t.xx + t.yy);
  const double half_diff = 0.5 * (t.xx - t.yy);
  const double radius = std::hypot(half_diff, t.xy);

  Spectral2 s;
  s.values = {mean + radius, mean - radius};
  const double scale = std::max(std::abs(s.values[0]), std::abs(s.values[1]));
  if (radius == 0.0 || 2.0 * radius < kSpectralTieTolerance * scale) {
    s.values = {mean, mean};
    return s;
  }
  // Direction of the largest eigenvalue from the stable half-angle formula.
  const double angle = 0.5 * std::atan2(t.xy, half_diff);
  const Vec2 e1{std::cos(angle), std::sin(angle)};
  s.directions = {e1, Vec2{-e1.y, e1.x}};
  return s;
}

/// Macaulay bracket <x>.
constexpr double macaulay(double x) { return x > 0.0 ? x : 0.0; }

struct TensileCompressive {
  SymTensor2 tensile;
  SymTensor2 compressive;
};

/// Spectral split t = t_plus + t_minus, t_plus = sum <l_i> e_i (x) e_i.
inline TensileCompressive split_tension_compression(const SymTensor2& t) {
  const Spectral2 s = spectral(t);
  SymTensor2 plus;
  for (int i = 0; i < 2; ++i) {
    if (s.values[i] > 0.0) plus += s.values[i] * outer(s.directions[i]);
  }
  return {plus, t - plus};
}

/// 3x3 matrix in (xx, yy, xy) component order.
using Mat3 = std::array<std::array<double, 3>, 3>;

/// Isotropic plane-stress operator of the intact material.
class ElasticOperator {
 public:
  ElasticOperator(double youngs_modulus, double poisson_ratio)
      : E_(youngs_modulus), nu_(poisson_ratio) {
    if (!(E_ > 0.0) || !(nu_ >= 0.0 && nu_ < 0.5)) {
      throw std::invalid_argument("ElasticOperator: require E > 0 and 0 <= nu < 0.5");
    }
  }

  double youngs_modulus() const { return E_; }
  double poisson_ratio() const { return nu_; }
  /// E / (1 - nu^2)
  double plane_modulus() const { return E_ / (1.0 - nu_ * nu_); }

  SymTensor2 apply(const SymTensor2& eps) const {
    const double c = plane_modulus();
    return {c * (eps.xx + nu_ * eps.yy), c * (eps.yy + nu_ * eps.xx), E_ / (1.0 + nu_) * eps.xy};
  }

  /// Matrix form acting on (eps_xx, eps_yy, eps_xy) with tensorial shear.
  Mat3 matrix() const {
    const double c = plane_modulus();
    return {{{c, c * nu_, 0.0}, {c * nu_, c, 0.0}, {0.0, 0.0, E_ / (1.0 + nu_)}}};
  }

 private:
  double E_;
  double nu_;
};

inline SymTensor2 apply_elastic(const ElasticOperator& D, const SymTensor2& eps) {
  return D.apply(eps);
}

}  // namespace dstrain
