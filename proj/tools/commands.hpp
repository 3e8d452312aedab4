#pragma once

// simulate and matpoint commands. Each returns a process exit code.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dstrain/csv.hpp"
#include "dstrain/fem/output.hpp"
#include "dstrain/oracle.hpp"
#include "dstrain/scenarios.hpp"

namespace dstrain::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum Exit { kOk = 0, kBadInput = 2, kNonConvergence = 3, kInternal = 4 };

/// Input rejected before any output was written.
class BadInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes through a sibling temporary file and renames it into place.
inline void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string dcr_label(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "dcr_%g", d);
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Output root: --out, else $DSTRAIN_OUT/<name>, else ./dstrain_out/<name>.
inline fs::path output_root(const std::optional<std::string>& out, const std::string& name) {
  if (out) return *out;
  const char* env = std::getenv("DSTRAIN_OUT");
  return fs::path(env && *env ? env : "dstrain_out") / name;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string scenario;  ///< built-in name or path to a scenario document
  std::optional<double> dcr;
  std::vector<double> sweep;
  std::optional<int> refine;
  std::optional<int> steps;
  std::optional<std::string> out;
  std::vector<std::string> set;  ///< key=value overrides, dotted keys
  bool verbose = false;
};

/// Applies one key=value override to a scenario document. The value is
/// read as JSON when it parses, otherwise as a string.
inline void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw BadInput("override '" + kv + "': expected key=value");
  std::string key = kv.substr(0, eq);
  const std::string text = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  std::string pointer = "/" + key;
  for (char& c : pointer) {
    if (c == '.') c = '/';
  }
  try {
    doc[json::json_pointer(pointer)] = value;
  } catch (const json::exception& ex) {
    throw BadInput("override '" + kv + "': " + ex.what());
  }
}

inline scenarios::Scenario resolve_scenario(const SimulateArgs& a) {
  json doc;
  std::optional<scenarios::Scenario> base = scenarios::builtin_scenario(a.scenario);
  if (!base) {
    if (!fs::is_regular_file(a.scenario)) throw BadInput("unknown scenario '" + a.scenario + "'");
    base = scenarios::read_scenario(a.scenario);
  }
  doc = scenarios::to_json(*base);
  for (const auto& kv : a.set) apply_override(doc, kv);
  if (a.refine) doc["mesh"]["refinement"] = *a.refine;
  if (a.steps) doc["steps"] = *a.steps;
  if (a.refine && !doc["mesh"].contains("generator")) throw BadInput("--refine applies to generated meshes only");
  scenarios::Scenario s = scenarios::scenario_from_json(doc);
  if (s.mesh.refinement < 1) throw BadInput("refinement must be >= 1");
  return s;
}

struct CaseOutcome {
  double d_cr = 1.0;
  fs::path dir;
  scenarios::CaseResult result;
  std::uint64_t checksum = 0;
  std::vector<std::string> files;
};

inline CaseOutcome run_one(const scenarios::Scenario& s, const scenarios::PreparedCase& c, double d_cr,
                           const fs::path& dir, const fs::path& root, bool verbose) {
  CaseOutcome o;
  o.d_cr = d_cr;
  o.dir = dir;
  o.checksum = c.mesh.checksum();
  fs::create_directories(dir);
  const std::set<int> field_steps(s.field_steps.begin(), s.field_steps.end());
  if (!field_steps.empty()) fs::create_directories(dir / "fields");

  const fem::Model model(c.mesh, c.params);
  csv::Writer curve((dir / "curve.csv").string());
  curve.line("step,time,probe,reaction,avg_stress");
  curve.line(csv::row({"0", csv::real(0.0), csv::real(0.0), csv::real(0.0), c.area > 0.0 ? csv::real(0.0) : ""}));
  o.files.push_back(fs::relative(dir / "curve.csv", root).string());

  scenarios::CaseHooks hooks;
  hooks.verbose = verbose;
  hooks.on_step = [&](const scenarios::CurveRow& row, const fem::StepOutput& out, const fem::QuadraturePointStore&) {
    curve.line(csv::row({std::to_string(row.step), csv::real(row.time), csv::real(row.probe), csv::real(row.reaction),
                         row.avg_stress ? csv::real(*row.avg_stress) : ""}));
    if (out.field) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%05d.csv", row.step);
      const fs::path p = dir / "fields" / name;
      fem::write_field_csv(p.string(), model, *out.field);
      o.files.push_back(fs::relative(p, root).string());
    }
  };
  o.result = scenarios::run_case(c, s.solver, field_steps, hooks);
  return o;
}

inline json params_json(const MaterialParams& p) {
  return {{"E", p.E}, {"nu", p.nu}, {"sigma_y", p.sigma_y}, {"a", p.a}, {"b", p.b}, {"d_cr", p.d_cr}};
}

inline int simulate(const SimulateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  scenarios::Scenario s;
  std::vector<double> dcrs;
  std::vector<scenarios::PreparedCase> cases;
  bool sweep = false;
  try {
    s = resolve_scenario(a);
    if (a.dcr && !a.sweep.empty()) throw BadInput("--dcr and --sweep-dcr are exclusive");
    if (a.dcr) {
      dcrs = {*a.dcr};
    } else if (!a.sweep.empty()) {
      dcrs = a.sweep;
      sweep = true;
    } else if (!s.dcr_sweep.empty()) {
      dcrs = s.dcr_sweep;
      sweep = true;
    } else {
      dcrs = {s.params.d_cr};
    }
    for (double d : dcrs) {
      if (!(d > 0.0 && d <= 1.0)) throw BadInput("d_cr values must lie in (0, 1]");
      cases.push_back(scenarios::prepare(s, d));
    }
    for (std::size_t i = 0; i < dcrs.size(); ++i) {
      for (std::size_t k = 0; k < i; ++k) {
        if (dcr_label(dcrs[i]) == dcr_label(dcrs[k])) throw BadInput("duplicate d_cr value in sweep");
      }
    }
  } catch (const BadInput& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kBadInput;
  } catch (const scenarios::ScenarioError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kBadInput;
  } catch (const fem::MeshError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kBadInput;
  }

  const fs::path root = output_root(a.out, s.name);
  fs::create_directories(root);
  const std::string resolved = scenarios::to_json(s).dump(2) + "\n";
  write_atomic(root / "scenario.json", resolved);

  json manifest;
  manifest["scenario"] = s.name;
  manifest["refinement"] = s.mesh.refinement;
  manifest["steps"] = s.steps;
  manifest["files"] = json::array({"scenario.json"});
  manifest["cases"] = json::array();
  bool all_ok = true;
  for (std::size_t i = 0; i < dcrs.size(); ++i) {
    const fs::path dir = sweep ? root / dcr_label(dcrs[i]) : root;
    const CaseOutcome o = run_one(s, cases[i], dcrs[i], dir, root, a.verbose);
    const auto& r = o.result;
    const bool ok = r.status == fem::RunStatus::Completed;
    all_ok = all_ok && ok;
    if (!ok) std::cerr << s.name << " d_cr=" << dcrs[i] << ": " << r.message << '\n';
    json jc;
    jc["d_cr"] = dcrs[i];
    jc["directory"] = sweep ? dcr_label(dcrs[i]) : ".";
    jc["params"] = params_json(cases[i].params);
    jc["mesh_checksum"] = hex64(o.checksum);
    jc["nodes"] = cases[i].mesh.nodes.size();
    jc["elements"] = cases[i].mesh.elements.size();
    jc["status"] = ok ? "completed" : "non_convergence";
    if (!ok) jc["message"] = r.message;
    jc["last_step"] = r.curve.empty() ? 0 : r.curve.back().step;
    jc["stats"] = {{"steps", r.stats.steps},
                   {"newton_iterations", r.stats.newton_iterations},
                   {"cuts", r.stats.cuts},
                   {"max_cuts_in_step", r.stats.max_cuts_in_step},
                   {"wall_seconds", r.stats.wall_seconds}};
    jc["files"] = o.files;
    for (const auto& f : o.files) manifest["files"].push_back(f);
    manifest["cases"].push_back(jc);
    std::cout << s.name << " d_cr=" << dcrs[i] << ' ' << (ok ? "completed" : "non-convergence") << " steps "
              << r.stats.steps << " iterations " << r.stats.newton_iterations << " cuts " << r.stats.cuts << '\n';
  }
  manifest["status"] = all_ok ? "completed" : "non_convergence";
  manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_atomic(root / "manifest.json", manifest.dump(2) + "\n");
  return all_ok ? kOk : kNonConvergence;
}

/// Prints the resolved scenario document (overrides applied) to stdout.
inline int show(const SimulateArgs& a) {
  try {
    std::cout << scenarios::to_json(resolve_scenario(a)).dump(2) << '\n';
    return kOk;
  } catch (const BadInput& ex) {
    std::cerr << "error: " << ex.what() << '\n';
  } catch (const scenarios::ScenarioError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
  }
  return kBadInput;
}

// ---------------------------------------------------------------------------
// matpoint

/// Material-point path document:
///   {"control": "strain", "knots": [[exx, eyy, exy], ...], "increments": n}
///   {"control": "uniaxial", "knots": [e0, e1, ...], "increments": n}
///   {"template": "cyclic", "increments": n}
/// Shear is tensorial. Knots start at zero; each segment is split into
/// `increments` equal steps (default 512). The cyclic template is the
/// uniaxial load, unload, reload and compress path scaled to the material.
struct PathSpec {
  bool uniaxial = true;
  std::vector<double> axial;
  std::vector<SymTensor2> strain;
};

inline PathSpec read_path(const std::string& file, const MaterialParams& p) {
  std::ifstream in(file);
  if (!in) throw BadInput("cannot open path file " + file);
  try {
    const json j = json::parse(in);
    for (const auto& [key, value] : j.items()) {
      if (key != "control" && key != "knots" && key != "increments" && key != "template") {
        throw BadInput("path document: unknown key '" + key + "'");
      }
    }
    const int n = j.value("increments", 512);
    if (n < 1) throw BadInput("path document: increments must be >= 1");
    PathSpec ps;
    if (j.contains("template")) {
      if (j.contains("knots") || j.contains("control")) throw BadInput("path document: template excludes knots and control");
      if (j.at("template").get<std::string>() != "cyclic") throw BadInput("path document: unknown template");
      ps.axial = sample_path(standard_cyclic_axial(p), n);
      return ps;
    }
    const std::string control = j.at("control").get<std::string>();
    if (control == "uniaxial") {
      ps.axial = sample_path(j.at("knots").get<std::vector<double>>(), n);
    } else if (control == "strain") {
      ps.uniaxial = false;
      std::vector<SymTensor2> knots;
      for (const auto& k : j.at("knots")) {
        if (k.size() != 3) throw BadInput("path document: strain knots need three components");
        knots.push_back({k[0].get<double>(), k[1].get<double>(), k[2].get<double>()});
      }
      ps.strain = sample_path(knots, n);
    } else {
      throw BadInput("path document: control must be 'strain' or 'uniaxial'");
    }
    return ps;
  } catch (const json::exception& ex) {
    throw BadInput(std::string("path document: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw BadInput(std::string("path document: ") + ex.what());
  }
}

struct MatpointArgs {
  std::optional<std::string> params;
  std::optional<double> E, nu, sy, a, b, dcr;
  std::string path;
  std::string out;
};

inline MaterialParams read_params(const MatpointArgs& a) {
  MaterialParams p;
  if (a.params) {
    std::ifstream in(*a.params);
    if (!in) throw BadInput("cannot open parameter file " + *a.params);
    try {
      const json j = json::parse(in);
      for (const auto& [key, value] : j.items()) {
        if (key != "E" && key != "nu" && key != "sigma_y" && key != "a" && key != "b" && key != "d_cr") {
          throw BadInput("parameter file: unknown key '" + key + "'");
        }
      }
      p.E = j.value("E", p.E);
      p.nu = j.value("nu", p.nu);
      p.sigma_y = j.value("sigma_y", p.sigma_y);
      p.a = j.value("a", p.a);
      p.b = j.value("b", p.b);
      p.d_cr = j.value("d_cr", p.d_cr);
    } catch (const json::exception& ex) {
      throw BadInput(std::string("parameter file: ") + ex.what());
    }
  }
  if (a.E) p.E = *a.E;
  if (a.nu) p.nu = *a.nu;
  if (a.sy) p.sigma_y = *a.sy;
  if (a.a) p.a = *a.a;
  if (a.b) p.b = *a.b;
  if (a.dcr) p.d_cr = *a.dcr;
  try {
    p.validate();
  } catch (const std::invalid_argument& ex) {
    throw BadInput(ex.what());
  }
  return p;
}

inline int matpoint(const MatpointArgs& a) {
  MaterialParams p;
  PathSpec ps;
  try {
    p = read_params(a);
    ps = read_path(a.path, p);
    if (ps.uniaxial ? ps.axial.front() != 0.0 : !(ps.strain.front() == SymTensor2::zero())) {
      throw BadInput("path document: the first knot must be zero strain");
    }
  } catch (const BadInput& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kBadInput;
  }

  std::vector<PathRecord> trace;
  try {
    trace = ps.uniaxial ? mixed_control_drive(p, ps.axial) : drive_strain_path(p, ps.strain);
  } catch (const StepRejected& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kNonConvergence;
  }

  std::optional<UniaxialTrace> ref;
  if (ps.uniaxial) {
    try {
      ref = uniaxial_closed_form(p, ps.axial);
    } catch (const std::invalid_argument& ex) {
      std::cerr << "oracle: " << ex.what() << '\n';
    }
  } else {
    std::cerr << "oracle: strain-controlled paths are outside the closed-form scope\n";
  }

  std::ostringstream os;
  os << "step,exx,eyy,exy,sxx,syy,sxy,seff_xx,seff_yy,seff_xy,ed_xx,ed_yy,ed_xy,damage,acc_plastic,max_jump,regime";
  if (ref) os << ",oracle_stress,oracle_damage,oracle_segment,relative_deviation";
  os << '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const PathRecord& r = trace[i];
    std::vector<std::string> cells{std::to_string(r.step)};
    for (const SymTensor2* t : {&r.strain, &r.stress, &r.stress_eff, &r.discontinuity}) {
      for (int k = 0; k < 3; ++k) cells.push_back(csv::real((*t)[k]));
    }
    cells.push_back(csv::real(r.damage));
    cells.push_back(csv::real(r.acc_plastic));
    cells.push_back(csv::real(r.max_jump));
    cells.push_back(to_string(r.regime));
    if (ref) {
      const UniaxialPoint& q = (*ref)[i];
      cells.push_back(csv::real(q.stress));
      cells.push_back(csv::real(q.damage));
      cells.push_back(to_string(q.segment));
      cells.push_back(csv::real(std::abs(r.stress.xx - q.stress) / std::max(std::abs(q.stress), p.sigma_y)));
    }
    os << csv::row(cells) << '\n';
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_atomic(out, os.str());
  if (ref) std::cout << "max relative deviation " << csv::real(max_relative_deviation(trace, *ref, p)) << '\n';
  return kOk;
}

}  // namespace dstrain::cli
