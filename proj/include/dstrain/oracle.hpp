#pragma once

// Material-point drivers and the uniaxial-stress reference solution.
//
// Under uniaxial stress the Rankine return is one-dimensional and every
// history variable is a function of the current axial strain and its
// running maximum, which gives a closed form independent of the
// plane-stress kernel:
//   eps_p  = min(cap, <eps_max - sy/E>)
//   eps_d  = <eps - eps_cr>            once eps_max >= eps_cr = sy/E + cap
//   jump   = <eps_max - eps_cr>
//   sig_eff = E (eps - eps_p - eps_d)

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "dstrain/constitutive.hpp"
#include "dstrain/csv.hpp"

namespace dstrain {

/// Piecewise-linear path through knots, each segment split into equal
/// increments. Samples include the starting knot.
template <class T>
std::vector<T> sample_path(const std::vector<T>& knots, int increments_per_segment) {
  if (knots.empty()) throw std::invalid_argument("sample_path: no knots");
  if (increments_per_segment < 1) throw std::invalid_argument("sample_path: increments must be >= 1");
  std::vector<T> out{knots.front()};
  for (std::size_t k = 1; k < knots.size(); ++k) {
    for (int i = 1; i <= increments_per_segment; ++i) {
      const double w = static_cast<double>(i) / increments_per_segment;
      out.push_back((1.0 - w) * knots[k - 1] + w * knots[k]);
    }
  }
  return out;
}

/// Reference strain of the standard cyclic path: yield strain plus the
/// plastic cap, or plus 0.01 when the cap is disabled.
inline double cyclic_reference_strain(const MaterialParams& p) {
  const double cap = p.critical_plastic_strain();
  return p.sigma_y / p.E + (std::isfinite(cap) ? cap : 0.01);
}

/// Axial knots of the standard cyclic path: load past crack formation,
/// unload into compression, reload beyond the previous maximum, unload
/// into compression again.
inline std::vector<double> standard_cyclic_axial(const MaterialParams& p) {
  const double r = cyclic_reference_strain(p);
  return {0.0, r + 0.002, r - 0.0005, r + 0.004, r - 0.0004};
}

/// Non-proportional counterpart of the cyclic path with rotating principal
/// axes, for strain-controlled drives.
inline std::vector<SymTensor2> standard_cyclic_strain(const MaterialParams& p) {
  const double r = cyclic_reference_strain(p);
  const double ey = p.sigma_y / p.E;
  return {SymTensor2::zero(),
          {3.0 * ey, -3.0 * p.nu * ey, 0.0},
          {r + 0.002, -p.nu * r, 4.0 * ey},
          {r - 0.0005, -p.nu * r + 0.3 * ey, -0.5 * ey},
          {r + 0.004, 0.5 * ey, 1.5 * ey},
          {r - 0.0004, -ey, 0.2 * ey}};
}

enum class UniaxialSegment { Elastic, PlasticDamage, CrackOpen, FrozenUnload, ClosedElastic };

inline const char* to_string(UniaxialSegment s) {
  switch (s) {
    case UniaxialSegment::Elastic: return "elastic";
    case UniaxialSegment::PlasticDamage: return "plastic-damage";
    case UniaxialSegment::CrackOpen: return "crack-open";
    case UniaxialSegment::FrozenUnload: return "frozen-unload";
    case UniaxialSegment::ClosedElastic: return "closed-elastic";
  }
  return "?";
}

struct UniaxialPoint {
  double strain = 0.0;
  double stress = 0.0;
  double damage = 0.0;
  UniaxialSegment segment = UniaxialSegment::Elastic;
  double stress_eff = 0.0;
  double discontinuity = 0.0;
};

using UniaxialTrace = std::vector<UniaxialPoint>;

/// Exact uniaxial-stress response at the sampled axial strains.
inline UniaxialTrace uniaxial_closed_form(const MaterialParams& p, const std::vector<double>& axial_strain) {
  p.validate();
  if (axial_strain.empty() || axial_strain.front() != 0.0) {
    throw std::invalid_argument("uniaxial_closed_form: history must start at zero strain");
  }
  const double eps_y = p.sigma_y / p.E;
  const double cap = p.critical_plastic_strain();
  const double eps_cr = eps_y + cap;  // +inf when d_cr = 1

  UniaxialTrace trace;
  trace.reserve(axial_strain.size());
  double eps_max = 0.0;
  for (double eps : axial_strain) {
    if (!std::isfinite(eps)) throw std::invalid_argument("uniaxial_closed_form: non-finite strain");
    const bool advancing = eps >= eps_max;
    eps_max = std::max(eps_max, eps);
    const double eps_p = std::min(cap, macaulay(eps_max - eps_y));
    const bool cracked = eps_max >= eps_cr;
    const double eps_d = cracked ? macaulay(eps - eps_cr) : 0.0;
    const double jump = cracked ? eps_max - eps_cr : 0.0;
    const double damage = -std::expm1(-(p.a * eps_p + p.b * jump));
    const double s_eff = p.E * (eps - eps_p - eps_d);

    UniaxialPoint pt;
    pt.strain = eps;
    pt.stress_eff = s_eff;
    pt.damage = damage;
    pt.discontinuity = eps_d;
    pt.stress = (1.0 - damage) * macaulay(s_eff) + std::min(s_eff, 0.0);
    if (cracked) {
      if (eps >= eps_cr) pt.segment = advancing ? UniaxialSegment::CrackOpen : UniaxialSegment::FrozenUnload;
      else pt.segment = UniaxialSegment::ClosedElastic;
    } else {
      pt.segment = (advancing && eps > eps_y) ? UniaxialSegment::PlasticDamage : UniaxialSegment::Elastic;
    }
    trace.push_back(pt);
  }
  return trace;
}

inline void write_csv(std::ostream& os, const UniaxialTrace& trace) {
  os << "strain,stress,damage,regime\n";
  for (const auto& pt : trace) {
    os << csv::row({csv::real(pt.strain), csv::real(pt.stress), csv::real(pt.damage), to_string(pt.segment)})
       << '\n';
  }
}

/// One committed material-point state along a driven path.
struct PathRecord {
  int step = 0;
  SymTensor2 strain;
  SymTensor2 stress_eff;
  SymTensor2 stress;
  SymTensor2 discontinuity;
  double damage = 0.0;
  double acc_plastic = 0.0;
  double max_jump = 0.0;
  Regime regime = Regime::Elastoplastic;
};

inline PathRecord make_record(int step, const UpdateResult& r) {
  PathRecord rec;
  rec.step = step;
  rec.strain = r.state.strain;
  rec.stress_eff = r.sigma_eff;
  rec.stress = r.sigma;
  rec.discontinuity = r.state.discontinuity;
  rec.damage = r.damage;
  rec.acc_plastic = r.state.acc_plastic;
  rec.max_jump = r.state.max_jump;
  rec.regime = r.state.regime;
  return rec;
}

inline UpdateResult initial_result(const MaterialParams& p) {
  UpdateResult r;
  r.sigma_eff = SymTensor2::zero();
  r.sigma = SymTensor2::zero();
  r.damage = damage_from_state(r.state, p);
  return r;
}

namespace detail {

inline constexpr int kMaxDriverBisections = 12;

/// Applies an increment, halving it on rejection.
template <class Step>
UpdateResult advance_with_cuts(const UpdateResult& from, const SymTensor2& deps, Step&& step, int depth = 0) {
  try {
    return step(from, deps);
  } catch (const StepRejected&) {
    if (depth >= kMaxDriverBisections) throw;
    const UpdateResult mid = advance_with_cuts(from, 0.5 * deps, step, depth + 1);
    return advance_with_cuts(mid, 0.5 * deps, step, depth + 1);
  }
}

}  // namespace detail

/// Strain-controlled material-point path (all three components prescribed).
inline std::vector<PathRecord> drive_strain_path(const MaterialParams& p, const std::vector<SymTensor2>& samples) {
  p.validate();
  if (samples.empty() || !(samples.front() == SymTensor2::zero())) {
    throw std::invalid_argument("drive_strain_path: path must start at zero strain");
  }
  std::vector<PathRecord> out;
  UpdateResult cur = initial_result(p);
  out.push_back(make_record(0, cur));
  auto step = [&p](const UpdateResult& from, const SymTensor2& d) { return update(from.state, d, p); };
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const SymTensor2 deps = samples[i] - cur.state.strain;
    cur = detail::advance_with_cuts(cur, deps, step);
    out.push_back(make_record(static_cast<int>(i), cur));
  }
  return out;
}

/// Lateral stress target tolerance of the mixed-control drive.
inline constexpr double kLateralTolerance = 1e-6;

/// Solves the lateral strain increment so that the lateral Cauchy stress
/// vanishes, for a prescribed axial increment and zero shear.
inline UpdateResult mixed_control_step(const MaterialState& state, double daxial, const MaterialParams& p) {
  const double tight = 1e-13 * p.sigma_y;
  const double loose = kLateralTolerance * p.sigma_y;
  auto at = [&](double dlat) { return update(state, SymTensor2{daxial, dlat, 0.0}, p); };

  const double guess = -p.nu * daxial;
  UpdateResult best = at(guess);
  if (std::abs(best.sigma.yy) <= tight) return best;

  const double scale = std::max({std::abs(daxial), std::abs(guess), 1e-12});
  double lo = guess, hi = guess;
  double flo = best.sigma.yy, fhi = best.sigma.yy;
  double width = scale;
  for (int k = 0; k < 80 && !(flo <= 0.0 && fhi >= 0.0); ++k) {
    if (flo > 0.0) {
      lo -= width;
      flo = at(lo).sigma.yy;
    }
    if (fhi < 0.0) {
      hi += width;
      fhi = at(hi).sigma.yy;
    }
    width *= 2.0;
  }
  if (!(flo <= 0.0 && fhi >= 0.0)) throw StepRejected("mixed_control_step: lateral stress not bracketed");

  if (flo == 0.0) return at(lo);
  if (fhi == 0.0) return at(hi);
  boost::uintmax_t iters = 200;
  const auto bracket = boost::math::tools::toms748_solve(
      [&](double x) { return at(x).sigma.yy; }, lo, hi, flo, fhi,
      [&](double a, double b) { return std::abs(b - a) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b)); },
      iters);
  const UpdateResult ra = at(bracket.first), rb = at(bracket.second);
  const UpdateResult& r = std::abs(ra.sigma.yy) <= std::abs(rb.sigma.yy) ? ra : rb;
  if (std::abs(r.sigma.yy) > loose) throw StepRejected("mixed_control_step: lateral stress not resolved");
  return r;
}

/// Uniaxial-stress drive: axial strain prescribed, lateral Cauchy stress
/// held at zero, shear strain zero.
inline std::vector<PathRecord> mixed_control_drive(const MaterialParams& p, const std::vector<double>& axial) {
  p.validate();
  if (axial.empty() || axial.front() != 0.0) {
    throw std::invalid_argument("mixed_control_drive: history must start at zero strain");
  }
  std::vector<PathRecord> out;
  UpdateResult cur = initial_result(p);
  out.push_back(make_record(0, cur));
  auto step = [&p](const UpdateResult& from, const SymTensor2& d) { return mixed_control_step(from.state, d.xx, p); };
  for (std::size_t i = 1; i < axial.size(); ++i) {
    const double d = axial[i] - cur.state.strain.xx;
    cur = detail::advance_with_cuts(cur, SymTensor2{d, 0.0, 0.0}, step);
    out.push_back(make_record(static_cast<int>(i), cur));
  }
  return out;
}

/// Largest stress deviation between a kernel trace and the reference,
/// normalised by max(|reference|, sigma_y).
inline double max_relative_deviation(const std::vector<PathRecord>& kernel, const UniaxialTrace& reference,
                                     const MaterialParams& p) {
  if (kernel.size() != reference.size()) throw std::invalid_argument("max_relative_deviation: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const double scale = std::max(std::abs(reference[i].stress), p.sigma_y);
    worst = std::max(worst, std::abs(kernel[i].stress.xx - reference[i].stress) / scale);
  }
  return worst;
}

}  // namespace dstrain
