#pragma once

// Displacement-controlled incremental Newton solver for plane stress.
//
// Every Newton iterate re-integrates all Gauss points from the last
// converged state with the total increment since that state, so rejected
// iterations and cut steps never touch the committed history.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "dstrain/constitutive.hpp"
#include "dstrain/fem/mesh.hpp"

namespace dstrain::fem {

enum Dof { kX = 0, kY = 1 };

/// Piecewise-linear function of pseudo-time, held constant outside the knots.
class Amplitude {
 public:
  Amplitude() : Amplitude({0.0, 1.0}, {0.0, 0.0}) {}
  Amplitude(std::vector<double> times, std::vector<double> values)
      : times_(std::move(times)), values_(std::move(values)) {
    if (times_.empty() || times_.size() != values_.size()) {
      throw std::invalid_argument("Amplitude: need matching, non-empty time and value lists");
    }
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (!(times_[i] > times_[i - 1])) throw std::invalid_argument("Amplitude: knot times must increase strictly");
    }
  }

  static Amplitude constant(double v) { return Amplitude({0.0, 1.0}, {v, v}); }

  double operator()(double t) const {
    if (t <= times_.front()) return values_.front();
    if (t >= times_.back()) return values_.back();
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times_.begin());
    const double w = (t - times_[k - 1]) / (times_[k] - times_[k - 1]);
    return (1.0 - w) * values_[k - 1] + w * values_[k];
  }

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

struct DirichletHistory {
  std::string set;
  int dof = kX;
  Amplitude amplitude;
};

struct SolverConfig {
  int steps = 100;
  double tolerance = 1e-6;
  int max_iterations = 25;
  double cut_factor = 0.5;
  int max_cuts = 8;

  void validate() const {
    if (steps < 1 || max_iterations < 1 || max_cuts < 0) throw std::invalid_argument("SolverConfig: counts must be positive");
    if (!(tolerance > 0.0 && tolerance < 1.0)) throw std::invalid_argument("SolverConfig: tolerance must lie in (0, 1)");
    if (!(cut_factor > 0.0 && cut_factor < 1.0)) throw std::invalid_argument("SolverConfig: cut factor must lie in (0, 1)");
  }
};

struct PointRecord {
  MaterialState state;
  SymTensor2 stress;
  SymTensor2 stress_eff;
  double damage = 0.0;
};

/// Committed material history, one record per element Gauss point.
class QuadraturePointStore {
 public:
  QuadraturePointStore() = default;
  explicit QuadraturePointStore(const Mesh& mesh) {
    offsets_.reserve(mesh.elements.size() + 1);
    offsets_.push_back(0);
    for (const auto& e : mesh.elements) offsets_.push_back(offsets_.back() + gauss_count(e.type));
    points_.resize(static_cast<std::size_t>(offsets_.back()));
  }

  int offset(int element) const { return offsets_[static_cast<std::size_t>(element)]; }
  int size() const { return static_cast<int>(points_.size()); }
  const PointRecord& at(int element, int gauss) const { return points_[static_cast<std::size_t>(offset(element) + gauss)]; }
  std::span<const PointRecord> points() const { return points_; }
  std::vector<PointRecord>& mutable_points() { return points_; }

 private:
  std::vector<int> offsets_;
  std::vector<PointRecord> points_;
};

/// Mesh, material and precomputed Gauss-point geometry.
class Model {
 public:
  Model(const Mesh& mesh, const MaterialParams& params) : mesh_(mesh), params_(params) {
    mesh_.validate();
    params_.validate();
    gauss_.reserve(mesh_.elements.size());
    for (const auto& e : mesh_.elements) gauss_.push_back(gauss_points(e, mesh_.nodes));
  }

  const Mesh& mesh() const { return mesh_; }
  const MaterialParams& params() const { return params_; }
  const std::vector<GaussPoint>& gauss(int element) const { return gauss_[static_cast<std::size_t>(element)]; }

 private:
  Mesh mesh_;
  MaterialParams params_;
  std::vector<std::vector<GaussPoint>> gauss_;
};

class AssemblyError : public std::runtime_error {
 public:
  AssemblyError(int element, int gauss, const std::string& what)
      : std::runtime_error("element " + std::to_string(element) + " gauss point " + std::to_string(gauss) + ": " + what),
        element_(element),
        gauss_(gauss) {}
  int element() const { return element_; }
  int gauss() const { return gauss_; }

 private:
  int element_;
  int gauss_;
};

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Assembly {
  Eigen::VectorXd internal_force;
  SparseMatrix tangent;
  std::vector<PointRecord> trial;  ///< same layout as the store
};

namespace detail {

/// Tangent of a point that stays elastic and undamaged under the
/// finite-difference perturbations.
inline bool pristine_elastic(const MaterialState& committed, const UpdateResult& r, const SymTensor2& deps,
                             const MaterialParams& p) {
  if (r.damage != 0.0 || r.transitions != 0 || r.state.regime != Regime::Elastoplastic) return false;
  if (r.state.acc_plastic != committed.acc_plastic) return false;
  const double h = std::max(1e-8, 1e-6 * norm(deps));
  return yield_function(r.sigma_eff, p) < -8.0 * p.E * h;
}

}  // namespace detail

/// Internal forces and (optionally) the tangent for the displacement
/// increment du measured from the committed state.
inline Assembly assemble(const Model& model, const QuadraturePointStore& store, const Eigen::VectorXd& du,
                         bool with_tangent = true) {
  const Mesh& mesh = model.mesh();
  const MaterialParams& p = model.params();
  const Mat3 elastic = p.elastic().matrix();
  const int ndof = mesh.dof_count();
  if (du.size() != ndof) throw std::invalid_argument("assemble: displacement size mismatch");

  Assembly out;
  out.internal_force = Eigen::VectorXd::Zero(ndof);
  out.trial.resize(static_cast<std::size_t>(store.size()));
  std::vector<Eigen::Triplet<double>> triplets;
  if (with_tangent) triplets.reserve(mesh.elements.size() * 64);

  for (int e = 0; e < static_cast<int>(mesh.elements.size()); ++e) {
    const Element& el = mesh.elements[static_cast<std::size_t>(e)];
    const int nn = el.size();
    std::array<double, 8> ue{};
    std::array<int, 8> dofs{};
    for (int a = 0; a < nn; ++a) {
      dofs[2 * a] = 2 * el.nodes[a];
      dofs[2 * a + 1] = 2 * el.nodes[a] + 1;
      ue[2 * a] = du[dofs[2 * a]];
      ue[2 * a + 1] = du[dofs[2 * a + 1]];
    }
    std::array<double, 8> fe{};
    std::array<std::array<double, 8>, 8> ke{};
    const auto& gps = model.gauss(e);
    for (int g = 0; g < static_cast<int>(gps.size()); ++g) {
      const GaussPoint& gp = gps[static_cast<std::size_t>(g)];
      const PointRecord& committed = store.at(e, g);
      const SymTensor2 deps = strain_at(gp, nn, ue);
      UpdateResult r;
      Mat3 C{};
      try {
        r = update(committed.state, deps, p);
        if (with_tangent) {
          if (detail::pristine_elastic(committed.state, r, deps, p)) C = elastic;
          else C = tangent_numeric(committed.state, deps, p, r);
          stabilize_tangent(C, r.state.regime, p);
        }
      } catch (const StepRejected& ex) {
        throw AssemblyError(e, g, ex.what());
      }
      PointRecord& rec = out.trial[static_cast<std::size_t>(store.offset(e) + g)];
      rec.state = r.state;
      rec.stress = r.sigma;
      rec.stress_eff = r.sigma_eff;
      rec.damage = r.damage;

      const double w = gp.weight * mesh.thickness;
      for (int a = 0; a < nn; ++a) {
        const Vec2 ga = gp.grad[a];
        fe[2 * a] += w * (ga.x * r.sigma.xx + ga.y * r.sigma.xy);
        fe[2 * a + 1] += w * (ga.y * r.sigma.yy + ga.x * r.sigma.xy);
      }
      if (!with_tangent) continue;
      for (int b = 0; b < nn; ++b) {
        const Vec2 gb = gp.grad[b];
        // d(eps_xx, eps_yy, eps_xy) / d(u_bx), d(u_by); tensorial shear
        const std::array<std::array<double, 3>, 2> deps_du = {{{gb.x, 0.0, 0.5 * gb.y}, {0.0, gb.y, 0.5 * gb.x}}};
        for (int c = 0; c < 2; ++c) {
          std::array<double, 3> ds{};
          for (int i = 0; i < 3; ++i) {
            for (int k = 0; k < 3; ++k) ds[i] += C[i][k] * deps_du[c][k];
          }
          for (int a = 0; a < nn; ++a) {
            const Vec2 ga = gp.grad[a];
            ke[2 * a][2 * b + c] += w * (ga.x * ds[0] + ga.y * ds[2]);
            ke[2 * a + 1][2 * b + c] += w * (ga.y * ds[1] + ga.x * ds[2]);
          }
        }
      }
    }
    for (int i = 0; i < 2 * nn; ++i) {
      out.internal_force[dofs[i]] += fe[i];
      if (!with_tangent) continue;
      for (int j = 0; j < 2 * nn; ++j) triplets.emplace_back(dofs[i], dofs[j], ke[i][j]);
    }
  }
  if (with_tangent) {
    out.tangent.resize(ndof, ndof);
    out.tangent.setFromTriplets(triplets.begin(), triplets.end());
  }
  return out;
}

struct StepOutput {
  int step = 0;
  double time = 0.0;
  Eigen::VectorXd displacement;
  std::map<std::string, Vec2> reactions;  ///< per constrained set, summed over its nodes
  Vec2 reaction_balance;                  ///< sum of all reactions
  double reference_force = 0.0;
  int iterations = 0;
  int cuts = 0;
  std::optional<std::vector<PointRecord>> field;
};

enum class RunStatus { Completed, NonConvergence };

struct RunStats {
  int steps = 0;
  int newton_iterations = 0;
  int cuts = 0;
  int max_cuts_in_step = 0;
  double wall_seconds = 0.0;
};

struct RunResult {
  RunStatus status = RunStatus::Completed;
  std::string message;
  std::vector<StepOutput> steps;
  RunStats stats;
  QuadraturePointStore store;
};

struct RunOptions {
  std::set<int> field_steps;  ///< steps whose Gauss-point field is kept
  std::function<void(const StepOutput&, const QuadraturePointStore&)> on_step;
  bool verbose = false;
};

class Solver {
 public:
  Solver(const Mesh& mesh, std::vector<DirichletHistory> histories, const MaterialParams& params,
         const SolverConfig& config)
      : model_(mesh, params), histories_(std::move(histories)), config_(config), store_(model_.mesh()) {
    config_.validate();
    const Mesh& m = model_.mesh();
    const int ndof = m.dof_count();
    constrained_.assign(static_cast<std::size_t>(ndof), false);
    for (const auto& h : histories_) {
      if (h.dof != kX && h.dof != kY) throw std::invalid_argument("DirichletHistory: dof must be x or y");
      const auto& ids = m.set(h.set);
      if (ids.empty()) throw std::invalid_argument("DirichletHistory: empty node set '" + h.set + "'");
      for (int n : ids) constrained_[static_cast<std::size_t>(2 * n + h.dof)] = true;
      reaction_sets_.insert(h.set);
    }
    free_index_.assign(static_cast<std::size_t>(ndof), -1);
    for (int d = 0; d < ndof; ++d) {
      if (!constrained_[static_cast<std::size_t>(d)]) free_index_[static_cast<std::size_t>(d)] = free_count_++;
    }
    u_ = Eigen::VectorXd::Zero(ndof);
    double lx = 0, ly = 0;
    if (!m.nodes.empty()) {
      auto [xmin, xmax] = std::minmax_element(m.nodes.begin(), m.nodes.end(), [](Vec2 a, Vec2 b) { return a.x < b.x; });
      auto [ymin, ymax] = std::minmax_element(m.nodes.begin(), m.nodes.end(), [](Vec2 a, Vec2 b) { return a.y < b.y; });
      lx = xmax->x - xmin->x;
      ly = ymax->y - ymin->y;
    }
    force_floor_ = 1e-10 * params.sigma_y * m.thickness * std::hypot(lx, ly);
  }

  const Model& model() const { return model_; }
  const QuadraturePointStore& store() const { return store_; }
  const std::vector<DirichletHistory>& histories() const { return histories_; }

  /// Replaces the amplitude of one history. Meant for on_step callbacks
  /// that steer the protocol; it must agree with the committed time.
  void set_amplitude(std::size_t history, Amplitude a) {
    if (history >= histories_.size()) throw std::out_of_range("set_amplitude: no such history");
    histories_[history].amplitude = std::move(a);
  }
  const Eigen::VectorXd& displacement() const { return u_; }
  int free_dofs() const { return free_count_; }

  RunResult run(const RunOptions& options = {}) {
    verbose_ = options.verbose;
    const auto t0 = std::chrono::steady_clock::now();
    RunResult result;
    const double dt_step = 1.0 / config_.steps;
    for (int step = 1; step <= config_.steps; ++step) {
      const double t_end = step == config_.steps ? 1.0 : step * dt_step;
      double dt = t_end - time_;
      int cuts = 0, iterations = 0;
      std::optional<Attempt> last;
      std::string failure;
      while (time_ < t_end) {
        dt = std::min(dt, t_end - time_);
        const double t_next = (t_end - (time_ + dt) <= 1e-12 * dt_step) ? t_end : time_ + dt;
        Attempt at = attempt(t_next);
        iterations += at.iterations;
        if (at.converged) {
          commit(at, t_next);
          last = std::move(at);
          continue;
        }
        failure = at.message;
        if (cuts >= config_.max_cuts) break;
        ++cuts;
        dt *= config_.cut_factor;
        if (options.verbose) std::fprintf(stderr, "  step %d: cut %d (%s)\n", step, cuts, failure.c_str());
      }
      result.stats.newton_iterations += iterations;
      result.stats.cuts += cuts;
      result.stats.max_cuts_in_step = std::max(result.stats.max_cuts_in_step, cuts);
      if (time_ < t_end) {
        result.status = RunStatus::NonConvergence;
        result.message = "step " + std::to_string(step) + " did not converge after " + std::to_string(cuts) +
                         " cuts: " + failure;
        break;
      }
      StepOutput out;
      out.step = step;
      out.time = t_end;
      out.displacement = u_;
      out.iterations = iterations;
      out.cuts = cuts;
      out.reactions = last->reactions;
      out.reaction_balance = last->balance;
      out.reference_force = last->reference;
      if (options.field_steps.contains(step)) out.field = std::vector<PointRecord>(store_.points().begin(), store_.points().end());
      if (options.verbose) {
        std::fprintf(stderr, "step %d t=%.4f iters=%d cuts=%d\n", step, t_end, iterations, cuts);
      }
      if (options.on_step) options.on_step(out, store_);
      result.steps.push_back(std::move(out));
      ++result.stats.steps;
    }
    result.stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.store = store_;
    return result;
  }

 private:
  struct Attempt {
    bool converged = false;
    int iterations = 0;
    std::string message;
    Eigen::VectorXd u;
    std::vector<PointRecord> trial;
    std::map<std::string, Vec2> reactions;
    Vec2 balance;
    double reference = 0.0;
    double reaction_norm = 0.0;
  };

  Eigen::VectorXd prescribed(double t) const {
    Eigen::VectorXd v = u_;
    for (const auto& h : histories_) {
      const double value = h.amplitude(t);
      for (int n : model_.mesh().set(h.set)) v[2 * n + h.dof] = value;
    }
    return v;
  }

  void split(const SparseMatrix& K, SparseMatrix& Kff, const Eigen::VectorXd& du_c, Eigen::VectorXd& kfc_du) const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(K.nonZeros()));
    kfc_du = Eigen::VectorXd::Zero(free_count_);
    for (int col = 0; col < K.outerSize(); ++col) {
      const int fc = free_index_[static_cast<std::size_t>(col)];
      for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
        const int fr = free_index_[static_cast<std::size_t>(it.row())];
        if (fr < 0) continue;
        if (fc >= 0) t.emplace_back(fr, fc, it.value());
        else kfc_du[fr] += it.value() * du_c[col];
      }
    }
    Kff.resize(free_count_, free_count_);
    Kff.setFromTriplets(t.begin(), t.end());
  }

  bool factorize(const SparseMatrix& Kff) {
    if (!pattern_ready_) {
      lu_.analyzePattern(Kff);
      pattern_ready_ = true;
    }
    lu_.factorize(Kff);
    return lu_.info() == Eigen::Success;
  }

  Eigen::VectorXd free_part(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(free_count_);
    for (int d = 0; d < full.size(); ++d) {
      const int f = free_index_[static_cast<std::size_t>(d)];
      if (f >= 0) out[f] = full[d];
    }
    return out;
  }

  Attempt attempt(double t_next) {
    Attempt at;
    const int ndof = model_.mesh().dof_count();
    const Eigen::VectorXd target = prescribed(t_next);
    Eigen::VectorXd du_c = Eigen::VectorXd::Zero(ndof);
    for (int d = 0; d < ndof; ++d) {
      if (constrained_[static_cast<std::size_t>(d)]) du_c[d] = target[d] - u_[d];
    }
    try {
      // Predictor with the tangent of the committed state.
      Assembly a0 = assemble(model_, store_, Eigen::VectorXd::Zero(ndof));
      SparseMatrix Kff;
      Eigen::VectorXd kfc_du;
      split(a0.tangent, Kff, du_c, kfc_du);
      Eigen::VectorXd du = du_c;
      if (free_count_ > 0) {
        if (!factorize(Kff)) throw std::runtime_error("singular predictor matrix");
        const Eigen::VectorXd rhs = -(free_part(a0.internal_force) + kfc_du);
        const Eigen::VectorXd dfree = lu_.solve(rhs);
        for (int d = 0; d < ndof; ++d) {
          const int f = free_index_[static_cast<std::size_t>(d)];
          if (f >= 0) du[d] = dfree[f];
        }
      }
      const double ref0 = kfc_du.norm();

      Eigen::VectorXd last_step;
      double last_norm = INFINITY;
      for (int it = 0; it <= config_.max_iterations; ++it) {
        std::optional<Assembly> trial_a;
        try {
          trial_a = assemble(model_, store_, du, true);
        } catch (const AssemblyError&) {
          if (it == 0) throw;
        }
        if (it > 0 && (!trial_a || !(free_part(trial_a->internal_force).norm() < last_norm))) {
          // Backtrack along the last correction on the residual alone.
          const Eigen::VectorXd base = du - last_step;
          double best_s = 0.0, best_norm = INFINITY;
          for (double s = 0.5; s >= 1.0 / 32.0; s *= 0.5) {
            try {
              const Assembly b = assemble(model_, store_, base + s * last_step, false);
              const double n = free_part(b.internal_force).norm();
              if (n < best_norm) {
                best_norm = n;
                best_s = s;
                if (n < 0.5 * last_norm) break;
              }
            } catch (const AssemblyError&) {
            }
          }
          if (best_s > 0.0 && (best_norm < last_norm || !trial_a || !(free_part(trial_a->internal_force).norm() < 10.0 * last_norm))) {
            du = base + best_s * last_step;
            trial_a = assemble(model_, store_, du, true);
          }
        }
        Assembly a = std::move(*trial_a);
        const Eigen::VectorXd R = free_part(a.internal_force);
        if (!R.allFinite()) throw std::runtime_error("non-finite residual");
        last_norm = R.norm();
        Vec2 fc, sum_free;
        double fc_sq = 0.0;
        for (int d = 0; d < ndof; ++d) {
          const double f = a.internal_force[d];
          if (constrained_[static_cast<std::size_t>(d)]) {
            fc_sq += f * f;
            (d % 2 == 0 ? fc.x : fc.y) += f;
          } else {
            (d % 2 == 0 ? sum_free.x : sum_free.y) += f;
          }
        }
        const double ref = std::max({ref0, std::sqrt(fc_sq), peak_force_, force_floor_});
        const double tol = config_.tolerance * ref;
        at.iterations = it;
        if (verbose_) std::fprintf(stderr, "    iter %d |R| %.3e ref %.3e\n", it, R.norm(), ref);
        if (R.norm() <= tol && std::abs(sum_free.x) <= tol && std::abs(sum_free.y) <= tol) {
          at.converged = true;
          at.u = u_ + du;
          at.trial = std::move(a.trial);
          at.balance = fc;
          at.reference = ref;
          at.reaction_norm = std::sqrt(fc_sq);
          for (const auto& name : reaction_sets_) {
            Vec2 r;
            for (int n : model_.mesh().set(name)) r = r + Vec2{a.internal_force[2 * n], a.internal_force[2 * n + 1]};
            at.reactions[name] = r;
          }
          return at;
        }
        if (it == config_.max_iterations) break;
        if (R.norm() > 1e6 * ref) throw std::runtime_error("residual diverged");
        SparseMatrix K;
        split(a.tangent, K, Eigen::VectorXd::Zero(ndof), kfc_du);
        if (!factorize(K)) throw std::runtime_error("singular tangent");
        const Eigen::VectorXd dfree = lu_.solve(-R);
        if (!dfree.allFinite()) throw std::runtime_error("non-finite Newton correction");
        last_step = Eigen::VectorXd::Zero(ndof);
        for (int d = 0; d < ndof; ++d) {
          const int f = free_index_[static_cast<std::size_t>(d)];
          if (f >= 0) last_step[d] = dfree[f];
        }
        du += last_step;
      }
      at.message = "Newton iteration limit reached";
    } catch (const AssemblyError& ex) {
      at.message = ex.what();
    } catch (const std::runtime_error& ex) {
      at.message = ex.what();
    }
    return at;
  }

  void commit(Attempt& at, double t) {
    u_ = at.u;
    store_.mutable_points() = std::move(at.trial);
    time_ = t;
    peak_force_ = std::max(peak_force_, at.reaction_norm);
  }

  Model model_;
  std::vector<DirichletHistory> histories_;
  SolverConfig config_;
  QuadraturePointStore store_;
  std::vector<bool> constrained_;
  std::vector<int> free_index_;
  int free_count_ = 0;
  std::set<std::string> reaction_sets_;
  Eigen::VectorXd u_;
  double time_ = 0.0;
  double force_floor_ = 0.0;
  double peak_force_ = 0.0;  ///< largest converged reaction norm so far
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  bool pattern_ready_ = false;
  bool verbose_ = false;
};

/// Runs a prescribed-displacement history to pseudo-time 1.
inline RunResult run_history(const Mesh& mesh, const std::vector<DirichletHistory>& histories,
                             const MaterialParams& params, const SolverConfig& config,
                             const RunOptions& options = {}) {
  Solver solver(mesh, histories, params, config);
  return solver.run(options);
}

}  // namespace dstrain::fem
