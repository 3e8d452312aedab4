#pragma once

// Benchmark generators (notched beams in three-point bending and a
// double-edge-notched tension-compression specimen), load protocols, and
// the scenario document that binds mesh, material, loads and probes.
//
// Lengths are in metres. Notches are slots one fine element wide, cut out
// of a structured grid.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dstrain/constitutive.hpp"
#include "dstrain/fem/mesh.hpp"
#include "dstrain/fem/probe.hpp"
#include "dstrain/fem/solver.hpp"

namespace dstrain::scenarios {

using nlohmann::json;

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BeamGeometry {
  double span = 0.3048;
  double height = 0.0762;
  double overhang = 0.0254;
  double thickness = 0.0286;
  double notch_depth = 0.0762 / 3.0;
  double notch_offset = 0.0;  ///< notch x measured from mid-span

  void validate() const {
    if (!(span > 0 && height > 0 && overhang > 0 && thickness > 0 && notch_depth > 0)) {
      throw ScenarioError("beam geometry: dimensions must be positive");
    }
    if (!(notch_depth < height)) throw ScenarioError("beam geometry: notch depth must be below the height");
    if (!(std::abs(notch_offset) < 0.5 * span)) throw ScenarioError("beam geometry: notch must lie between the supports");
  }
};

struct DenGeometry {
  double length = 0.25;
  double width = 0.06;
  double thickness = 0.05;
  double notch_depth = 0.005;
  double probe_offset = 0.0175;

  void validate() const {
    if (!(length > 0 && width > 0 && thickness > 0 && notch_depth > 0 && probe_offset > 0)) {
      throw ScenarioError("double-edge-notch geometry: dimensions must be positive");
    }
    if (!(2.0 * notch_depth < width)) throw ScenarioError("double-edge-notch geometry: notches overlap");
    if (!(probe_offset < 0.5 * length)) throw ScenarioError("double-edge-notch geometry: probe lines outside the specimen");
  }
};

/// Generated mesh with the default probe of the benchmark.
struct Benchmark {
  fem::Mesh mesh;
  fem::Probe probe;
};

namespace detail {

inline int find_coordinate(const std::vector<double>& v, double x) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::abs(v[i] - x) <= 1e-12 * (1.0 + std::abs(x))) return static_cast<int>(i);
  }
  throw ScenarioError("generator: coordinate missing from the grid");
}

/// Graded 1-D grid on [lo, hi]: uniform spacing h_fine on [fine_lo, fine_hi]
/// anchored at `anchor`, geometric growth outside, capped at h_max. The
/// required coordinates are then snapped onto the grid.
inline std::vector<double> graded_axis(double lo, double hi, double anchor, double fine_lo, double fine_hi,
                                       double h_fine, double growth, double h_max, std::vector<double> required) {
  struct Point {
    double x;
    bool fixed;
  };
  std::vector<Point> pts{{anchor, true}};
  for (double x = anchor + h_fine; x <= fine_hi + 1e-12 && x < hi - 0.5 * h_fine; x += h_fine) pts.push_back({x, false});
  for (double x = anchor - h_fine; x >= fine_lo - 1e-12 && x > lo + 0.5 * h_fine; x -= h_fine) pts.push_back({x, false});
  auto grow = [&](double start, double dir, double bound) {
    double x = start, h = h_fine;
    while (true) {
      h = std::min(h * growth, h_max);
      if (dir * (bound - (x + dir * h)) < 0.5 * h) break;
      x += dir * h;
      pts.push_back({x, false});
    }
    pts.push_back({bound, true});
  };
  double top = anchor, bottom = anchor;
  for (const Point& p : pts) {
    top = std::max(top, p.x);
    bottom = std::min(bottom, p.x);
  }
  grow(top, 1.0, hi);
  grow(bottom, -1.0, lo);
  auto by_x = [](const Point& a, const Point& b) { return a.x < b.x; };
  std::sort(pts.begin(), pts.end(), by_x);
  for (double m : required) {
    if (m < lo || m > hi) throw ScenarioError("generator: required coordinate outside the domain");
    auto it = std::min_element(pts.begin(), pts.end(),
                               [m](const Point& a, const Point& b) { return std::abs(a.x - m) < std::abs(b.x - m); });
    if (std::abs(it->x - m) <= 1e-12) {
      it->fixed = true;
      continue;
    }
    const std::size_t k = static_cast<std::size_t>(it - pts.begin());
    const double left = k > 0 ? pts[k].x - pts[k - 1].x : pts[k + 1].x - pts[k].x;
    const double right = k + 1 < pts.size() ? pts[k + 1].x - pts[k].x : left;
    if (!it->fixed && std::abs(it->x - m) < 0.5 * std::min(left, right)) {
      *it = {m, true};
    } else {
      pts.push_back({m, true});
      std::sort(pts.begin(), pts.end(), by_x);
    }
  }
  std::vector<double> out;
  for (const Point& p : pts) out.push_back(p.x);
  return out;
}

/// Removes the QUAD4 grid elements of column `column` on the listed
/// element rows, leaving a slot one element wide.
inline void cut_slot(fem::Mesh& m, int nx, int column, const std::vector<int>& rows) {
  std::vector<bool> drop(m.elements.size(), false);
  for (int j : rows) drop[static_cast<std::size_t>(j * (nx - 1) + column)] = true;
  std::vector<fem::Element> kept;
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    if (!drop[e]) kept.push_back(m.elements[e]);
  }
  m.elements = std::move(kept);
}

/// Nodes of row j whose x lies within [x0, x1].
inline std::vector<int> row_nodes(const std::vector<double>& xs, int j, double x0, double x1) {
  std::vector<int> out;
  const int nx = static_cast<int>(xs.size());
  for (int i = 0; i < nx; ++i) {
    if (xs[static_cast<std::size_t>(i)] >= x0 - 1e-12 && xs[static_cast<std::size_t>(i)] <= x1 + 1e-12) out.push_back(j * nx + i);
  }
  return out;
}

}  // namespace detail

/// Notched beam in three-point bending, mid-span at x = 0, bottom fibre at
/// y = 0. The notch is a slot one fine element wide centred on the notch
/// line, so the ligament above it is a single element column. Sets:
/// support_left, support_right, load (top nodes within half an element of
/// mid-span), cmd_a, cmd_b (bottom slot corners), notch_tip (top slot
/// corners). Probe: crack mouth opening |ux(cmd_a) - ux(cmd_b)|.
inline Benchmark gen_notched_beam(int refinement, const BeamGeometry& g) {
  if (refinement < 1) throw ScenarioError("generator: refinement must be >= 1");
  g.validate();
  const double ligament = g.height - g.notch_depth;
  const int lig_elements = 4 * refinement;
  const double h_fine = ligament / lig_elements;
  const int notch_rows = std::max(1, static_cast<int>(std::lround(g.notch_depth / h_fine)));

  std::vector<double> ys = fem::linspace(0.0, g.notch_depth, notch_rows);
  for (double y : fem::linspace(g.notch_depth, g.height, lig_elements)) {
    if (y > g.notch_depth) ys.push_back(y);
  }

  const double half = 0.5 * g.span + g.overhang;
  const double margin = 3.0 * h_fine;
  const double h_max = std::max(h_fine, std::min(4.0 * h_fine, g.height / 3.0));
  const double xl = g.notch_offset - 0.5 * h_fine, xr = g.notch_offset + 0.5 * h_fine;
  std::vector<double> required{-0.5 * g.span, 0.5 * g.span, xr};
  if (std::abs(g.notch_offset) > h_fine) required.push_back(0.0);
  const std::vector<double> xs = detail::graded_axis(-half, half, xl, std::min(xl, 0.0) - margin,
                                                     std::max(xr, 0.0) + margin, h_fine, 1.3, h_max, required);

  Benchmark b;
  fem::Mesh& m = b.mesh;
  m = fem::grid_mesh(xs, ys, g.thickness);
  const int nx = static_cast<int>(xs.size());
  const int top = static_cast<int>(ys.size()) - 1;
  const int il = detail::find_coordinate(xs, xl), ir = detail::find_coordinate(xs, xr);
  m.node_sets["support_left"] = {detail::find_coordinate(xs, -0.5 * g.span)};
  m.node_sets["support_right"] = {detail::find_coordinate(xs, 0.5 * g.span)};
  m.node_sets["load"] = detail::row_nodes(xs, top, -0.5 * h_fine, 0.5 * h_fine);
  m.node_sets["notch_tip"] = {notch_rows * nx + il, notch_rows * nx + ir};
  m.node_sets["cmd_a"] = {il};
  m.node_sets["cmd_b"] = {ir};
  std::vector<int> rows(static_cast<std::size_t>(notch_rows));
  for (int j = 0; j < notch_rows; ++j) rows[static_cast<std::size_t>(j)] = j;
  detail::cut_slot(m, nx, il, rows);
  m.validate();
  b.probe = {fem::Probe::Kind::NodePair, "cmd_a", "cmd_b", fem::kX};
  return b;
}

inline Benchmark gen_opening_mode(int refinement, BeamGeometry g = {}) {
  g.notch_offset = 0.0;
  return gen_notched_beam(refinement, g);
}

inline Benchmark gen_mixed_mode(int refinement, BeamGeometry g = {}) {
  if (g.notch_offset == 0.0) g.notch_offset = 0.0756;
  return gen_notched_beam(refinement, g);
}

/// Double-edge-notched specimen centred at the origin, loaded along x.
/// Both notches are slots one fine element wide centred on x = 0. Sets:
/// left, right (edges), probe_left, probe_right (vertical lines at
/// -/+ probe_offset), notch_tip_bottom, notch_tip_top (slot corners at the
/// tips). Probe: mean ux on probe_right minus mean ux on probe_left.
inline Benchmark gen_full_cycle(int refinement, DenGeometry g = {}) {
  if (refinement < 1) throw ScenarioError("generator: refinement must be >= 1");
  g.validate();
  const double h_fine = g.notch_depth / refinement;
  const int rows = std::max(2, static_cast<int>(std::lround(g.width / h_fine)));
  const std::vector<double> ys = fem::linspace(-0.5 * g.width, 0.5 * g.width, rows);
  const double half = 0.5 * g.length;
  const double fine = g.probe_offset + 2.0 * h_fine;
  const double xl = -0.5 * h_fine, xr = 0.5 * h_fine;
  const std::vector<double> xs = detail::graded_axis(-half, half, xl, -fine, fine, h_fine, 1.3, 4.0 * g.notch_depth,
                                                     {xr, -g.probe_offset, g.probe_offset});

  Benchmark b;
  fem::Mesh& m = b.mesh;
  m = fem::grid_mesh(xs, ys, g.thickness);
  const int nx = static_cast<int>(xs.size());
  const int ny = static_cast<int>(ys.size());
  const int il = detail::find_coordinate(xs, xl), ir = detail::find_coordinate(xs, xr);
  const int jb = detail::find_coordinate(ys, -0.5 * g.width + g.notch_depth);
  const int jt = detail::find_coordinate(ys, 0.5 * g.width - g.notch_depth);
  const int ixl = detail::find_coordinate(xs, -g.probe_offset), ixr = detail::find_coordinate(xs, g.probe_offset);
  for (int j = 0; j < ny; ++j) {
    m.node_sets["probe_left"].push_back(j * nx + ixl);
    m.node_sets["probe_right"].push_back(j * nx + ixr);
  }
  m.node_sets["notch_tip_bottom"] = {jb * nx + il, jb * nx + ir};
  m.node_sets["notch_tip_top"] = {jt * nx + il, jt * nx + ir};
  std::vector<int> slot_rows;
  for (int j = 0; j < jb; ++j) slot_rows.push_back(j);
  for (int j = jt; j + 1 < ny; ++j) slot_rows.push_back(j);
  detail::cut_slot(m, nx, il, slot_rows);
  m.validate();
  b.probe = {fem::Probe::Kind::LinePair, "probe_left", "probe_right", fem::kX};
  return b;
}

// ---------------------------------------------------------------------------
// Load protocols

enum class ProtocolKind { Fixed, Monotonic, TwoUnload, FullReversal, Table };

inline const char* to_string(ProtocolKind k) {
  switch (k) {
    case ProtocolKind::Fixed: return "fixed";
    case ProtocolKind::Monotonic: return "monotonic";
    case ProtocolKind::TwoUnload: return "two_unload";
    case ProtocolKind::FullReversal: return "full_reversal";
    case ProtocolKind::Table: return "table";
  }
  return "?";
}

/// fixed: constant `value`; monotonic: ramp to peaks[0]; two_unload:
/// 0 -> p1 -> unload_to -> p2 -> unload_to -> p3; full_reversal:
/// 0 -> peaks[0] -> peaks[1] -> ...; table: explicit knots. Template knots
/// are spaced in pseudo-time by displacement travelled, so equal steps give
/// equal increments. With `reverse_at` set, an unloading segment ends at
/// the first step whose reported reaction has fallen to that value, and the
/// next segment starts from there (later knots keep their times).
struct LoadProtocol {
  ProtocolKind kind = ProtocolKind::Fixed;
  double value = 0.0;
  std::vector<double> peaks;
  double unload_to = 0.0;
  std::vector<double> times;
  std::vector<double> values;
  std::optional<double> reverse_at;
};

namespace detail {

inline fem::Amplitude by_travel(const std::vector<double>& values) {
  std::vector<double> t{0.0};
  double total = 0.0;
  for (std::size_t i = 1; i < values.size(); ++i) total += std::abs(values[i] - values[i - 1]);
  if (!(total > 0.0)) throw ScenarioError("load protocol: zero travel");
  double acc = 0.0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    acc += std::abs(values[i] - values[i - 1]);
    t.push_back(i + 1 == values.size() ? 1.0 : acc / total);
  }
  try {
    return fem::Amplitude(t, values);
  } catch (const std::invalid_argument& ex) {
    throw ScenarioError(std::string("load protocol: ") + ex.what());
  }
}

}  // namespace detail

/// Knot values of a template protocol (before pseudo-time spacing).
inline std::vector<double> protocol_values(const LoadProtocol& p) {
  switch (p.kind) {
    case ProtocolKind::Fixed: return {p.value, p.value};
    case ProtocolKind::Monotonic:
      if (p.peaks.size() != 1) throw ScenarioError("monotonic protocol: needs one peak");
      return {0.0, p.peaks[0]};
    case ProtocolKind::TwoUnload:
      if (p.peaks.size() != 3) throw ScenarioError("two_unload protocol: needs three peaks");
      return {0.0, p.peaks[0], p.unload_to, p.peaks[1], p.unload_to, p.peaks[2]};
    case ProtocolKind::FullReversal: {
      if (p.peaks.size() < 2) throw ScenarioError("full_reversal protocol: needs at least two peaks");
      std::vector<double> v{0.0};
      v.insert(v.end(), p.peaks.begin(), p.peaks.end());
      return v;
    }
    case ProtocolKind::Table: return p.values;
  }
  return {};
}

inline fem::Amplitude load_protocol(const LoadProtocol& p) {
  if (p.kind == ProtocolKind::Fixed) return fem::Amplitude::constant(p.value);
  if (p.kind == ProtocolKind::Table) {
    try {
      return fem::Amplitude(p.times, p.values);
    } catch (const std::invalid_argument& ex) {
      throw ScenarioError(std::string("table protocol: ") + ex.what());
    }
  }
  return detail::by_travel(protocol_values(p));
}

// ---------------------------------------------------------------------------
// Scenario document

struct LoadEntry {
  std::string set;
  int dof = fem::kX;
  LoadProtocol protocol;
  double scale = 1.0;
};

struct ReactionSpec {
  std::string set;
  int dof = fem::kX;
  double scale = 1.0;
};

struct MeshSpec {
  std::string generator;  ///< opening_mode, mixed_mode or full_cycle
  int refinement = 1;
  json geometry = json::object();
  std::string path;  ///< external mesh document, used when no generator
};

struct Scenario {
  std::string name;
  MeshSpec mesh;
  MaterialParams params;
  std::vector<LoadEntry> loads;
  std::optional<fem::Probe> probe;  ///< generator default when absent
  ReactionSpec reaction;
  double area = 0.0;  ///< average stress = reaction / area when positive
  int steps = 100;
  fem::SolverConfig solver;
  std::vector<int> field_steps;
  std::vector<double> dcr_sweep;
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ScenarioError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; })) {
      throw ScenarioError(where + ": unknown key '" + key + "'");
    }
  }
}

inline int parse_dof(const json& j) {
  const std::string s = j.get<std::string>();
  if (s == "x") return fem::kX;
  if (s == "y") return fem::kY;
  throw ScenarioError("dof must be \"x\" or \"y\"");
}

inline const char* dof_name(int dof) { return dof == fem::kX ? "x" : "y"; }

inline LoadProtocol parse_protocol(const json& j) {
  check_keys(j, {"kind", "value", "peaks", "unload_to", "times", "values", "reverse_at"}, "protocol");
  LoadProtocol p;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "fixed") p.kind = ProtocolKind::Fixed;
  else if (kind == "monotonic") p.kind = ProtocolKind::Monotonic;
  else if (kind == "two_unload") p.kind = ProtocolKind::TwoUnload;
  else if (kind == "full_reversal") p.kind = ProtocolKind::FullReversal;
  else if (kind == "table") p.kind = ProtocolKind::Table;
  else throw ScenarioError("protocol: unknown kind '" + kind + "'");
  p.value = j.value("value", 0.0);
  p.peaks = j.value("peaks", std::vector<double>{});
  p.unload_to = j.value("unload_to", 0.0);
  p.times = j.value("times", std::vector<double>{});
  p.values = j.value("values", std::vector<double>{});
  if (j.contains("reverse_at")) p.reverse_at = j.at("reverse_at").get<double>();
  load_protocol(p);  // validates
  return p;
}

inline json protocol_json(const LoadProtocol& p) {
  json j{{"kind", to_string(p.kind)}};
  switch (p.kind) {
    case ProtocolKind::Fixed: j["value"] = p.value; break;
    case ProtocolKind::Monotonic:
    case ProtocolKind::FullReversal: j["peaks"] = p.peaks; break;
    case ProtocolKind::TwoUnload:
      j["peaks"] = p.peaks;
      j["unload_to"] = p.unload_to;
      break;
    case ProtocolKind::Table:
      j["times"] = p.times;
      j["values"] = p.values;
      break;
  }
  if (p.reverse_at) j["reverse_at"] = *p.reverse_at;
  return j;
}

}  // namespace detail

inline Scenario scenario_from_json(const json& j) {
  using detail::check_keys;
  try {
    check_keys(j, {"name", "mesh", "material", "loads", "probe", "reaction", "area", "steps", "solver", "field_steps",
                   "dcr_sweep"},
               "scenario");
    Scenario s;
    s.name = j.at("name").get<std::string>();

    const json& jm = j.at("mesh");
    check_keys(jm, {"generator", "refinement", "geometry", "path"}, "mesh");
    s.mesh.generator = jm.value("generator", std::string{});
    s.mesh.refinement = jm.value("refinement", 1);
    s.mesh.geometry = jm.value("geometry", json::object());
    s.mesh.path = jm.value("path", std::string{});
    if (s.mesh.generator.empty() == s.mesh.path.empty()) throw ScenarioError("mesh: give exactly one of generator or path");

    const json& mat = j.at("material");
    check_keys(mat, {"E", "nu", "sigma_y", "a", "b", "d_cr"}, "material");
    s.params.E = mat.at("E").get<double>();
    s.params.nu = mat.at("nu").get<double>();
    s.params.sigma_y = mat.at("sigma_y").get<double>();
    s.params.a = mat.at("a").get<double>();
    s.params.b = mat.at("b").get<double>();
    s.params.d_cr = mat.value("d_cr", 1.0);
    s.params.validate();

    for (const json& jl : j.at("loads")) {
      check_keys(jl, {"set", "dof", "protocol", "scale"}, "load");
      s.loads.push_back({jl.at("set").get<std::string>(), detail::parse_dof(jl.at("dof")),
                         detail::parse_protocol(jl.at("protocol")), jl.value("scale", 1.0)});
    }
    if (s.loads.empty()) throw ScenarioError("scenario: no loads");

    if (j.contains("probe")) {
      const json& jp = j.at("probe");
      check_keys(jp, {"kind", "a", "b", "dof"}, "probe");
      fem::Probe p;
      const std::string kind = jp.at("kind").get<std::string>();
      if (kind == "node_pair") p.kind = fem::Probe::Kind::NodePair;
      else if (kind == "line_pair") p.kind = fem::Probe::Kind::LinePair;
      else throw ScenarioError("probe: unknown kind '" + kind + "'");
      p.a = jp.at("a").get<std::string>();
      p.b = jp.at("b").get<std::string>();
      p.dof = detail::parse_dof(jp.at("dof"));
      s.probe = p;
    }

    const json& jr = j.at("reaction");
    check_keys(jr, {"set", "dof", "scale"}, "reaction");
    s.reaction = {jr.at("set").get<std::string>(), detail::parse_dof(jr.at("dof")), jr.value("scale", 1.0)};

    s.area = j.value("area", 0.0);
    if (s.area < 0.0) throw ScenarioError("scenario: area must be non-negative");
    s.steps = j.value("steps", 100);
    if (s.steps < 1) throw ScenarioError("scenario: steps must be >= 1");
    if (j.contains("solver")) {
      const json& js = j.at("solver");
      check_keys(js, {"tolerance", "max_iterations", "cut_factor", "max_cuts"}, "solver");
      s.solver.tolerance = js.value("tolerance", s.solver.tolerance);
      s.solver.max_iterations = js.value("max_iterations", s.solver.max_iterations);
      s.solver.cut_factor = js.value("cut_factor", s.solver.cut_factor);
      s.solver.max_cuts = js.value("max_cuts", s.solver.max_cuts);
    }
    s.solver.steps = s.steps;
    s.solver.validate();
    s.field_steps = j.value("field_steps", std::vector<int>{});
    s.dcr_sweep = j.value("dcr_sweep", std::vector<double>{});
    for (double d : s.dcr_sweep) {
      if (!(d > 0.0 && d <= 1.0)) throw ScenarioError("scenario: sweep values must lie in (0, 1]");
    }
    return s;
  } catch (const json::exception& ex) {
    throw ScenarioError(std::string("scenario document: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw ScenarioError(std::string("scenario document: ") + ex.what());
  }
}

inline json to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  json m;
  if (!s.mesh.generator.empty()) {
    m["generator"] = s.mesh.generator;
    m["refinement"] = s.mesh.refinement;
    if (!s.mesh.geometry.empty()) m["geometry"] = s.mesh.geometry;
  } else {
    m["path"] = s.mesh.path;
  }
  j["mesh"] = m;
  j["material"] = {{"E", s.params.E},         {"nu", s.params.nu}, {"sigma_y", s.params.sigma_y},
                   {"a", s.params.a},         {"b", s.params.b},   {"d_cr", s.params.d_cr}};
  j["loads"] = json::array();
  for (const auto& l : s.loads) {
    json jl{{"set", l.set}, {"dof", detail::dof_name(l.dof)}, {"protocol", detail::protocol_json(l.protocol)}};
    if (l.scale != 1.0) jl["scale"] = l.scale;
    j["loads"].push_back(jl);
  }
  if (s.probe) {
    j["probe"] = {{"kind", fem::to_string(s.probe->kind)},
                  {"a", s.probe->a},
                  {"b", s.probe->b},
                  {"dof", detail::dof_name(s.probe->dof)}};
  }
  j["reaction"] = {{"set", s.reaction.set}, {"dof", detail::dof_name(s.reaction.dof)}, {"scale", s.reaction.scale}};
  if (s.area > 0.0) j["area"] = s.area;
  j["steps"] = s.steps;
  j["solver"] = {{"tolerance", s.solver.tolerance},
                 {"max_iterations", s.solver.max_iterations},
                 {"cut_factor", s.solver.cut_factor},
                 {"max_cuts", s.solver.max_cuts}};
  if (!s.field_steps.empty()) j["field_steps"] = s.field_steps;
  if (!s.dcr_sweep.empty()) j["dcr_sweep"] = s.dcr_sweep;
  return j;
}

inline Scenario read_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw ScenarioError("scenario file " + path + ": " + ex.what());
  }
  Scenario s = scenario_from_json(j);
  if (!s.mesh.path.empty() && std::filesystem::path(s.mesh.path).is_relative()) {
    s.mesh.path = (std::filesystem::path(path).parent_path() / s.mesh.path).string();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Built-in benchmark configurations

/// Opening-mode beam: E 28 GPa, sigma_y 3.8 MPa, two-unload protocol on the load
/// point (downward), crack mouth opening probe.
inline Scenario opening_mode_scenario() {
  Scenario s;
  s.name = "opening_mode";
  s.mesh.generator = "opening_mode";
  s.mesh.refinement = 3;
  s.params = {28e9, 0.2, 3.8e6, 80.0, 70.0, 1.0};
  LoadProtocol two_unload{ProtocolKind::TwoUnload, 0.0, {-1.5e-4, -3.0e-4, -4.5e-4}, 0.0, {}, {}, 0.0};
  s.loads = {{"support_left", fem::kX, {}, 1.0},
             {"support_left", fem::kY, {}, 1.0},
             {"support_right", fem::kY, {}, 1.0},
             {"load", fem::kY, two_unload, 1.0}};
  s.reaction = {"load", fem::kY, -1.0};
  s.steps = 300;
  s.solver.steps = s.steps;
  s.dcr_sweep = {1.0, 0.85, 0.60, 0.45};
  return s;
}

/// Mixed-mode beam: offset notch, E 34 GPa, sigma_y 4.2 MPa.
inline Scenario mixed_mode_scenario() {
  Scenario s = opening_mode_scenario();
  s.name = "mixed_mode";
  s.mesh.generator = "mixed_mode";
  s.mesh.refinement = 2;
  s.params = {34e9, 0.2, 4.2e6, 110.0, 70.0, 1.0};
  return s;
}

/// Double-edge-notched specimen: opposing x displacements on the edges
/// (edges held in y), E 25 GPa, sigma_y 3.2 MPa, two tension-compression cycles.
inline Scenario full_cycle_scenario() {
  Scenario s;
  s.name = "full_cycle";
  s.mesh.generator = "full_cycle";
  s.mesh.refinement = 1;
  s.params = {25e9, 0.2, 3.2e6, 150.0, 140.0, 1.0};
  LoadProtocol cycles{ProtocolKind::FullReversal, 0.0, {1.0e-4, -1.0e-4, 2.0e-4, -1.0e-4}, 0.0, {}, {}, std::nullopt};
  s.loads = {{"left", fem::kX, cycles, -0.5},
             {"right", fem::kX, cycles, 0.5},
             {"left", fem::kY, {}, 1.0},
             {"right", fem::kY, {}, 1.0}};
  s.reaction = {"right", fem::kX, 1.0};
  s.area = 0.06 * 0.05;
  s.steps = 300;
  s.solver.steps = s.steps;
  s.dcr_sweep = {1.0, 0.60, 0.40, 0.20};
  return s;
}

inline std::optional<Scenario> builtin_scenario(const std::string& name) {
  if (name == "opening_mode") return opening_mode_scenario();
  if (name == "mixed_mode") return mixed_mode_scenario();
  if (name == "full_cycle") return full_cycle_scenario();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Case preparation and execution

namespace detail {

inline BeamGeometry beam_geometry(const json& g) {
  check_keys(g, {"span", "height", "overhang", "thickness", "notch_depth", "notch_offset"}, "beam geometry");
  BeamGeometry b;
  b.span = g.value("span", b.span);
  b.height = g.value("height", b.height);
  b.overhang = g.value("overhang", b.overhang);
  b.thickness = g.value("thickness", b.thickness);
  b.notch_depth = g.value("notch_depth", b.height / 3.0);
  b.notch_offset = g.value("notch_offset", b.notch_offset);
  return b;
}

inline DenGeometry den_geometry(const json& g) {
  check_keys(g, {"length", "width", "thickness", "notch_depth", "probe_offset"}, "double-edge-notch geometry");
  DenGeometry d;
  d.length = g.value("length", d.length);
  d.width = g.value("width", d.width);
  d.thickness = g.value("thickness", d.thickness);
  d.notch_depth = g.value("notch_depth", d.notch_depth);
  d.probe_offset = g.value("probe_offset", d.probe_offset);
  return d;
}

}  // namespace detail

inline Benchmark generate(const MeshSpec& spec) {
  if (spec.generator == "opening_mode") return gen_opening_mode(spec.refinement, detail::beam_geometry(spec.geometry));
  if (spec.generator == "mixed_mode") {
    BeamGeometry g = detail::beam_geometry(spec.geometry);
    if (!spec.geometry.contains("notch_offset")) g.notch_offset = 0.0756;
    return gen_mixed_mode(spec.refinement, g);
  }
  if (spec.generator == "full_cycle") return gen_full_cycle(spec.refinement, detail::den_geometry(spec.geometry));
  throw ScenarioError("mesh: unknown generator '" + spec.generator + "'");
}

struct PreparedCase {
  fem::Mesh mesh;
  std::vector<fem::DirichletHistory> histories;
  std::vector<std::optional<double>> reverse_at;  ///< per history
  fem::Probe probe;
  ReactionSpec reaction;
  double area = 0.0;
  MaterialParams params;
};

inline PreparedCase prepare(const Scenario& s, double d_cr) {
  PreparedCase c;
  std::optional<fem::Probe> default_probe;
  if (!s.mesh.generator.empty()) {
    Benchmark b = generate(s.mesh);
    c.mesh = std::move(b.mesh);
    default_probe = b.probe;
  } else {
    try {
      c.mesh = fem::read_mesh(s.mesh.path);
    } catch (const fem::MeshError& ex) {
      throw ScenarioError(ex.what());
    }
  }
  if (s.probe) c.probe = *s.probe;
  else if (default_probe) c.probe = *default_probe;
  else throw ScenarioError("scenario: external meshes need an explicit probe");

  auto require = [&](const std::string& set) {
    if (!c.mesh.node_sets.contains(set)) throw ScenarioError("scenario: node set '" + set + "' does not exist");
    if (c.mesh.node_sets.at(set).empty()) throw ScenarioError("scenario: node set '" + set + "' is empty");
  };
  for (const auto& l : s.loads) {
    require(l.set);
    const fem::Amplitude base = load_protocol(l.protocol);
    std::vector<double> v = base.values();
    for (double& x : v) x *= l.scale;
    c.histories.push_back({l.set, l.dof, fem::Amplitude(base.times(), v)});
    c.reverse_at.push_back(l.protocol.reverse_at);
  }
  require(c.probe.a);
  require(c.probe.b);
  require(s.reaction.set);
  c.reaction = s.reaction;
  c.area = s.area;
  c.params = s.params;
  c.params.d_cr = d_cr;
  try {
    c.params.validate();
  } catch (const std::invalid_argument& ex) {
    throw ScenarioError(ex.what());
  }
  return c;
}

struct CurveRow {
  int step = 0;
  double time = 0.0;
  double probe = 0.0;
  double reaction = 0.0;
  std::optional<double> avg_stress;
};

struct CaseHooks {
  std::function<void(const CurveRow&, const fem::StepOutput&, const fem::QuadraturePointStore&)> on_step;
  bool verbose = false;
};

struct CaseResult {
  fem::RunStatus status = fem::RunStatus::Completed;
  std::string message;
  std::vector<CurveRow> curve;
  fem::RunStats stats;
  std::vector<fem::Amplitude> amplitudes;  ///< as applied, after reversals
};

inline CurveRow curve_row(const PreparedCase& c, const fem::StepOutput& out) {
  CurveRow row;
  row.step = out.step;
  row.time = out.time;
  row.probe = c.probe.evaluate(c.mesh, out.displacement);
  const Vec2 r = out.reactions.at(c.reaction.set);
  row.reaction = c.reaction.scale * (c.reaction.dof == fem::kX ? r.x : r.y);
  if (c.area > 0.0) row.avg_stress = row.reaction / c.area;
  return row;
}

namespace detail {

/// Amplitude with the unloading segment that contains t cut short at t.
/// Empty when t does not lie strictly inside an unloading segment.
inline std::optional<fem::Amplitude> reverse_now(const fem::Amplitude& a, double t) {
  const auto& T = a.times();
  const auto& V = a.values();
  const auto it = std::upper_bound(T.begin(), T.end(), t);
  if (it == T.begin() || it == T.end()) return std::nullopt;
  const std::size_t k = static_cast<std::size_t>(it - T.begin()) - 1;
  if (!(t > T[k] && t < T[k + 1]) || !(std::abs(V[k + 1]) < std::abs(V[k]))) return std::nullopt;
  std::vector<double> nt(T.begin(), T.begin() + static_cast<std::ptrdiff_t>(k) + 1);
  std::vector<double> nv(V.begin(), V.begin() + static_cast<std::ptrdiff_t>(k) + 1);
  nt.push_back(t);
  nv.push_back(a(t));
  nt.insert(nt.end(), T.begin() + static_cast<std::ptrdiff_t>(k) + 2, T.end());
  nv.insert(nv.end(), V.begin() + static_cast<std::ptrdiff_t>(k) + 2, V.end());
  if (nt.size() == k + 2) return std::nullopt;  // the unload was the last segment
  return fem::Amplitude(nt, nv);
}

}  // namespace detail

inline CaseResult run_case(const PreparedCase& c, const fem::SolverConfig& config, const std::set<int>& field_steps = {},
                           const CaseHooks& hooks = {}) {
  CaseResult result;
  fem::Solver solver(c.mesh, c.histories, c.params, config);
  fem::RunOptions opt;
  opt.field_steps = field_steps;
  opt.verbose = hooks.verbose;
  opt.on_step = [&](const fem::StepOutput& out, const fem::QuadraturePointStore& store) {
    const CurveRow row = curve_row(c, out);
    result.curve.push_back(row);
    if (hooks.on_step) hooks.on_step(row, out, store);
    for (std::size_t h = 0; h < c.reverse_at.size(); ++h) {
      if (!c.reverse_at[h] || row.reaction > *c.reverse_at[h]) continue;
      if (auto a = detail::reverse_now(solver.histories()[h].amplitude, out.time)) solver.set_amplitude(h, std::move(*a));
    }
  };
  fem::RunResult run = solver.run(opt);
  result.status = run.status;
  result.message = run.message;
  result.stats = run.stats;
  for (const auto& h : solver.histories()) result.amplitudes.push_back(h.amplitude);
  return result;
}

// ---------------------------------------------------------------------------
// Curve analysis

/// Probe value where the reaction first changes sign from positive to
/// non-positive between two rows of [from, to), interpolated linearly. Empty when
/// there is no crossing.
inline std::optional<double> zero_force_probe(const std::vector<CurveRow>& curve, std::size_t from, std::size_t to) {
  to = std::min(to, curve.size());
  for (std::size_t i = from + 1; i < to; ++i) {
    const CurveRow& a = curve[i - 1];
    const CurveRow& b = curve[i];
    if (a.reaction > 0.0 && b.reaction <= 0.0) {
      const double w = a.reaction / (a.reaction - b.reaction);
      return a.probe + w * (b.probe - a.probe);
    }
  }
  return std::nullopt;
}

/// Index range [begin, end) of the curve rows whose pseudo-time lies in the
/// k-th segment (0-based) of an amplitude.
inline std::pair<std::size_t, std::size_t> segment_rows(const std::vector<CurveRow>& curve, const fem::Amplitude& amp,
                                                        std::size_t k) {
  const auto& t = amp.times();
  if (k + 1 >= t.size()) throw std::out_of_range("segment_rows: no such segment");
  const double t0 = t[k], t1 = t[k + 1];
  std::size_t b = curve.size(), e = curve.size();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (b == curve.size() && curve[i].time > t0 + 1e-12) b = i;
    if (curve[i].time <= t1 + 1e-12) e = i + 1;
  }
  return {b, std::max(b, e)};
}

}  // namespace dstrain::scenarios
