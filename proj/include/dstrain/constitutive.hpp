#pragma once

// Stress update for the ductile damage model with a reversible
// discontinuity strain.
//
// Plasticity lives in the effective (undamaged) configuration and uses the
// Rankine criterion. The accumulated plastic multiplier is capped at the
// value where the damage reaches d_cr; beyond that point further straining
// goes into the discontinuity strain, which opens and closes with the crack.
//
// The total strain is split as
//   eps = eps_e + eps_p + eps_d,   sigma_eff = D : eps_e,
// and the observed stress is
//   sigma = (1 - d) <sigma_eff>_+ + <sigma_eff>_-,
//   d = 1 - exp(-a acc_p) exp(-b max_jump).

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "dstrain/tensor2d.hpp"

namespace dstrain {

enum class Regime { Elastoplastic, CrackOpen };

inline const char* to_string(Regime r) {
  return r == Regime::CrackOpen ? "CRACK_OPEN" : "ELASTOPLASTIC";
}

/// Thrown when a strain increment cannot be integrated as given; the caller
/// is expected to cut the step and retry.
class StepRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MaterialParams {
  double E = 28e9;
  double nu = 0.2;
  double sigma_y = 3.8e6;
  double a = 80.0;
  double b = 70.0;
  double d_cr = 1.0;

  void validate() const {
    if (!(E > 0.0)) throw std::invalid_argument("MaterialParams: E must be positive");
    if (!(nu >= 0.0 && nu < 0.5)) throw std::invalid_argument("MaterialParams: nu must lie in [0, 0.5)");
    if (!(sigma_y > 0.0)) throw std::invalid_argument("MaterialParams: sigma_y must be positive");
    if (!(a > 0.0)) throw std::invalid_argument("MaterialParams: a must be positive");
    if (!(b >= 0.0)) throw std::invalid_argument("MaterialParams: b must be non-negative");
    if (!(d_cr > 0.0 && d_cr <= 1.0)) throw std::invalid_argument("MaterialParams: d_cr must lie in (0, 1]");
  }

  /// Accumulated plastic strain at which the crack forms; +inf for d_cr = 1.
  double critical_plastic_strain() const {
    if (d_cr >= 1.0) return std::numeric_limits<double>::infinity();
    return -std::log1p(-d_cr) / a;
  }

  ElasticOperator elastic() const { return ElasticOperator(E, nu); }
};

struct MaterialState {
  SymTensor2 strain;         ///< total strain
  SymTensor2 plastic;        ///< eps_p
  SymTensor2 discontinuity;  ///< eps_d
  double acc_plastic = 0.0;  ///< accumulated plastic multiplier
  double max_jump = 0.0;     ///< history max of n.eps_d.n
  std::optional<Vec2> crack_normal;
  Regime regime = Regime::Elastoplastic;

  /// Normal opening n.eps_d.n (zero without a crack).
  double normal_jump() const {
    return crack_normal ? project(discontinuity, *crack_normal) : 0.0;
  }
};

inline SymTensor2 effective_stress(const MaterialState& s, const ElasticOperator& D) {
  return D.apply(s.strain - s.plastic - s.discontinuity);
}

/// Rankine yield function with the out-of-plane principal stress (zero)
/// taking part in the maximum.
inline double yield_function(const SymTensor2& stress_eff, const MaterialParams& p) {
  return std::max(spectral(stress_eff).values[0], 0.0) - p.sigma_y;
}

inline double damage_from_state(double acc_plastic, double max_jump, const MaterialParams& p) {
  if (acc_plastic < 0.0 || max_jump < 0.0) {
    throw std::invalid_argument("damage_from_state: history variables must be non-negative");
  }
  return -std::expm1(-(p.a * acc_plastic + p.b * max_jump));
}

inline double damage_from_state(const MaterialState& s, const MaterialParams& p) {
  return damage_from_state(s.acc_plastic, s.max_jump, p);
}

/// Unilateral damage mapping: only the tensile spectral part is degraded.
inline SymTensor2 map_to_cauchy(const SymTensor2& stress_eff, double damage) {
  if (!(damage >= 0.0 && damage <= 1.0)) throw std::invalid_argument("map_to_cauchy: damage outside [0, 1]");
  const auto [tensile, compressive] = split_tension_compression(stress_eff);
  return (1.0 - damage) * tensile + compressive;
}

struct ReturnMapResult {
  SymTensor2 stress_eff;
  double multiplier = 0.0;  ///< total plastic multiplier (sum over active surfaces)
  SymTensor2 flow;          ///< unit-multiplier flow direction, eps_p += multiplier * flow
  bool corner = false;
};

/// Closest-point return onto the Rankine locus, carried out in the
/// principal frame of the trial stress (isotropic elasticity keeps the frame
/// fixed during the return). Falls back to the two-surface corner return
/// when the regular return leaves the minor principal stress above yield.
inline ReturnMapResult return_map(const SymTensor2& trial, const MaterialParams& p) {
  const Spectral2 sp = spectral(trial);
  const double l1 = sp.values[0], l2 = sp.values[1];
  if (!(l1 > p.sigma_y)) throw std::invalid_argument("return_map: trial stress is admissible");

  const double Ep = p.E / (1.0 - p.nu * p.nu);
  const SymTensor2 m1 = outer(sp.directions[0]);
  const SymTensor2 m2 = outer(sp.directions[1]);

  ReturnMapResult r;
  const double g = (l1 - p.sigma_y) / Ep;
  const double s2 = l2 - p.nu * Ep * g;
  if (s2 <= p.sigma_y) {
    r.multiplier = g;
    r.flow = m1;
    r.stress_eff = p.sigma_y * m1 + s2 * m2;
    return r;
  }

  // Both surfaces active: E' [1 nu; nu 1] [g1; g2] = [l1 - sy; l2 - sy].
  const double r1 = l1 - p.sigma_y, r2 = l2 - p.sigma_y;
  const double det = Ep * (1.0 - p.nu * p.nu);
  const double g1 = (r1 - p.nu * r2) / det;
  const double g2 = (r2 - p.nu * r1) / det;
  r.corner = true;
  r.multiplier = g1 + g2;
  r.flow = (g1 / r.multiplier) * m1 + (g2 / r.multiplier) * m2;
  r.stress_eff = p.sigma_y * (m1 + m2);
  return r;
}

/// Flow direction used by the crack-formation solve: the return-map flow
/// when the trial yields, the major principal projector otherwise.
inline SymTensor2 flow_direction(const SymTensor2& trial, const MaterialParams& p) {
  if (yield_function(trial, p) > 0.0) return return_map(trial, p).flow;
  return outer(spectral(trial).directions[0]);
}

struct AlphaResult {
  double alpha = 0.0;
  MaterialState intermediate;
  SymTensor2 stress_eff;
};

namespace detail {

inline constexpr double kYieldTolerance = 1e-9;     // relative to sigma_y, acceptance
inline constexpr double kYieldTarget = 1e-12;       // relative to sigma_y, iteration target
inline constexpr int kAlphaMaxIterations = 100;
inline constexpr int kAlphaScanSamples = 8;

}  // namespace detail

/// Locates the fraction alpha of the increment at which the accumulated
/// plastic strain reaches the cap while the stress sits on the yield locus.
/// The plastic growth up to that point is fixed, lambda = cap - acc_p, and
/// the flow direction is taken from the sub-step trial stress.
inline AlphaResult solve_alpha(const MaterialState& state, const SymTensor2& deps, const MaterialParams& p) {
  const double cap = p.critical_plastic_strain();
  if (!std::isfinite(cap)) throw std::invalid_argument("solve_alpha: cap disabled (d_cr = 1)");
  if (state.regime != Regime::Elastoplastic) throw std::invalid_argument("solve_alpha: crack already open");

  const ElasticOperator D = p.elastic();
  const double lambda = std::max(cap - state.acc_plastic, 0.0);
  const SymTensor2 start = effective_stress(state, D);
  const SymTensor2 dsig = D.apply(deps);

  auto stress_at = [&](double alpha) {
    const SymTensor2 trial = start + alpha * dsig;
    if (lambda == 0.0) return trial;
    return trial - lambda * D.apply(flow_direction(trial, p));
  };
  auto g = [&](double alpha) { return yield_function(stress_at(alpha), p); };

  const double tol = detail::kYieldTolerance * p.sigma_y;
  const double target = detail::kYieldTarget * p.sigma_y;

  // Scan for the first loading crossing so that an increment which first
  // moves inside the locus and then out again is resolved at the exit point.
  double lo = 0.0, glo = g(0.0), hi = -1.0, ghi = 0.0;
  if (glo > tol) throw StepRejected("solve_alpha: start state outside the yield locus");
  for (int k = 1; k <= detail::kAlphaScanSamples; ++k) {
    const double a = static_cast<double>(k) / detail::kAlphaScanSamples;
    const double ga = g(a);
    if (ga > 0.0) {
      hi = a;
      ghi = ga;
      break;
    }
    lo = a;
    glo = ga;
  }
  if (hi < 0.0) {
    if (std::abs(glo) <= tol) hi = lo, ghi = glo;
    else throw StepRejected("solve_alpha: no root in (0, 1]");
  }

  double alpha = hi;
  double galpha = ghi;
  if (hi > lo) {
    // Safeguarded secant (Illinois) on the bracket, bisection when the
    // secant point hugs an end.
    int side = 0;
    double best = hi, gbest = ghi;
    for (int it = 0; it < detail::kAlphaMaxIterations; ++it) {
      const double width = hi - lo;
      double c = hi - ghi * width / (ghi - glo);
      if (!(c > lo + 0.01 * width && c < hi - 0.01 * width) || it % 4 == 3) c = 0.5 * (lo + hi);
      const double gc = g(c);
      alpha = c;
      galpha = gc;
      if (std::abs(gc) < std::abs(gbest)) best = c, gbest = gc;
      if (std::abs(gc) <= target) break;
      if (gc > 0.0) {
        hi = c;
        ghi = gc;
        if (side == 1) glo *= 0.5;
        side = 1;
      } else {
        lo = c;
        glo = gc;
        if (side == -1) ghi *= 0.5;
        side = -1;
      }
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon()) {
        // g jumps across zero where the flow switches branch (trial
        // yielding vs not, principal-direction swap). The inside end is
        // admissible and taken as the formation point.
        const double ga = g(lo), gb = g(hi);
        if (std::abs(gb) <= tol) alpha = hi, galpha = gb;
        else alpha = lo, galpha = std::min(ga, 0.0);
        break;
      }
    }
    // The target can sit below the evaluation noise; fall back to the
    // closest sample when it meets the acceptance tolerance.
    if (!(std::abs(galpha) <= tol) && std::abs(gbest) <= tol) alpha = best, galpha = gbest;
  }
  if (!(std::abs(galpha) <= tol)) throw StepRejected("solve_alpha: root not resolved to tolerance");

  AlphaResult out;
  out.alpha = alpha;
  out.stress_eff = stress_at(alpha);
  MaterialState& s = out.intermediate;
  s = state;
  s.strain += alpha * deps;
  if (lambda > 0.0) s.plastic += lambda * flow_direction(start + alpha * dsig, p);
  s.acc_plastic = cap;
  s.discontinuity = SymTensor2::zero();
  s.regime = Regime::CrackOpen;
  s.crack_normal = spectral(out.stress_eff).directions[0];
  return out;
}

/// Fraction beta of the increment at which an open crack closes,
/// n.eps_d.n + beta n.deps.n = 0.
inline double solve_beta(const MaterialState& state, const SymTensor2& deps) {
  if (state.regime != Regime::CrackOpen || !state.crack_normal) {
    throw std::invalid_argument("solve_beta: crack is not open");
  }
  const double jn = state.normal_jump();
  const double dn = project(deps, *state.crack_normal);
  if (!(jn + dn <= 0.0)) throw std::invalid_argument("solve_beta: increment does not close the crack");
  if (!(dn < 0.0)) throw std::logic_error("solve_beta: closing increment with non-negative normal part");
  const double beta = -std::max(jn, 0.0) / dn;
  return std::clamp(beta, 0.0, std::nextafter(1.0, 0.0));
}

struct UpdateResult {
  MaterialState state;
  SymTensor2 sigma;
  SymTensor2 sigma_eff;
  double damage = 0.0;
  Mat3 tangent{};
  int transitions = 0;
};

inline constexpr int kMaxRegimeTransitions = 10;

namespace detail {

/// Closure commit: the normal jump is zero here; what is left of eps_d
/// (crack-parallel stretch and sliding) stays as permanent strain so the
/// effective stress is continuous through closure.
inline void close_crack(MaterialState& s) {
  s.plastic += s.discontinuity;
  s.discontinuity = SymTensor2::zero();
  s.regime = Regime::Elastoplastic;
}

inline bool finite(const MaterialState& s) {
  return s.strain.finite() && s.plastic.finite() && s.discontinuity.finite() &&
         std::isfinite(s.acc_plastic) && std::isfinite(s.max_jump);
}

}  // namespace detail

/// Integrates a strain increment from a committed state. Pure function:
/// the input state is never modified.
inline UpdateResult update(const MaterialState& state, const SymTensor2& deps, const MaterialParams& p) {
  if (!deps.finite()) throw std::invalid_argument("update: non-finite strain increment");
  const ElasticOperator D = p.elastic();
  const double cap = p.critical_plastic_strain();

  MaterialState s = state;
  SymTensor2 rest = deps;
  int transitions = 0;

  while (true) {
    if (transitions > kMaxRegimeTransitions) throw StepRejected("update: too many regime transitions");

    if (s.regime == Regime::Elastoplastic) {
      const SymTensor2 trial = effective_stress(s, D) + D.apply(rest);
      if (yield_function(trial, p) <= 0.0) {
        s.strain += rest;
        break;
      }
      const ReturnMapResult rm = return_map(trial, p);
      if (s.acc_plastic + rm.multiplier <= cap) {
        s.strain += rest;
        s.plastic += rm.multiplier * rm.flow;
        s.acc_plastic += rm.multiplier;
        break;
      }
      const AlphaResult ar = solve_alpha(s, rest, p);
      s = ar.intermediate;
      rest = (1.0 - ar.alpha) * rest;
      ++transitions;
      const Vec2 n = *s.crack_normal;
      const double rn = project(rest, n);
      if (rn < 0.0) {
        // The crack would close the instant it forms: the faces stay in
        // contact, the normal part loads elastically and the crack-parallel
        // part slides.
        const SymTensor2 normal_part = rn * outer(n);
        s.plastic += rest - normal_part;
        s.strain += rest;
        s.regime = Regime::Elastoplastic;
        break;
      }
      continue;
    }

    const Vec2 n = *s.crack_normal;
    const double jn = project(s.discontinuity, n);
    const double dn = project(rest, n);
    if (dn < 0.0 && jn + dn <= 0.0) {
      const double beta = solve_beta(s, rest);
      s.strain += beta * rest;
      s.discontinuity += beta * rest;
      detail::close_crack(s);
      rest = (1.0 - beta) * rest;
      ++transitions;
      continue;
    }
    s.strain += rest;
    s.discontinuity += rest;
    s.max_jump = std::max(s.max_jump, project(s.discontinuity, n));
    break;
  }

  if (!detail::finite(s)) throw StepRejected("update: non-finite state");

  UpdateResult r;
  r.state = s;
  r.sigma_eff = effective_stress(s, D);
  r.damage = damage_from_state(s, p);
  r.sigma = map_to_cauchy(r.sigma_eff, r.damage);
  r.transitions = transitions;
  return r;
}

namespace detail {

/// Piecewise branch an update landed on: regime path plus whether the
/// plastic and jump histories grew.
struct Branch {
  Regime regime;
  int transitions;
  bool plastic;
  bool opening;
  bool operator==(const Branch&) const = default;
};

inline Branch branch_of(const MaterialState& from, const UpdateResult& r) {
  return {r.state.regime, r.transitions, r.state.acc_plastic > from.acc_plastic, r.state.max_jump > from.max_jump};
}

}  // namespace detail

/// Finite-difference tangent d sigma / d deps, columns in (xx, yy, xy)
/// order with tensorial shear. Central differences inside a branch; at a
/// branch kink the one-sided difference that stays on the branch of `base`
/// is used.
inline Mat3 tangent_numeric(const MaterialState& state, const SymTensor2& deps, const MaterialParams& p,
                            const UpdateResult& base) {
  const double h = std::max(1e-8, 1e-6 * norm(deps));
  const detail::Branch b0 = detail::branch_of(state, base);
  Mat3 T{};
  for (int k = 0; k < 3; ++k) {
    SymTensor2 plus = deps, minus = deps;
    plus[k] += h;
    minus[k] -= h;
    const UpdateResult rp = update(state, plus, p);
    const UpdateResult rm = update(state, minus, p);
    const bool on_p = detail::branch_of(state, rp) == b0, on_m = detail::branch_of(state, rm) == b0;
    for (int i = 0; i < 3; ++i) {
      if (on_p == on_m) T[i][k] = (rp.sigma[i] - rm.sigma[i]) / (2.0 * h);
      else if (on_p) T[i][k] = (rp.sigma[i] - base.sigma[i]) / h;
      else T[i][k] = (base.sigma[i] - rm.sigma[i]) / h;
    }
  }
  return T;
}

inline Mat3 tangent_numeric(const MaterialState& state, const SymTensor2& deps, const MaterialParams& p) {
  return tangent_numeric(state, deps, p, update(state, deps, p));
}

inline UpdateResult update_with_tangent(const MaterialState& state, const SymTensor2& deps, const MaterialParams& p) {
  UpdateResult r = update(state, deps, p);
  r.tangent = tangent_numeric(state, deps, p, r);
  return r;
}

/// Diagonal floor applied for the global solver where the stress is frozen
/// by an open crack. Never used inside the stress update itself.
inline constexpr double kTangentFloor = 1e-6;

inline void stabilize_tangent(Mat3& T, Regime regime, const MaterialParams& p) {
  if (regime != Regime::CrackOpen) return;
  for (int i = 0; i < 3; ++i) T[i][i] += kTangentFloor * p.E;
}

}  // namespace dstrain
