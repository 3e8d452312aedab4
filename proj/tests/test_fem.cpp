#include <gtest/gtest.h>

#include <cmath>

#include "dstrain/fem/output.hpp"
#include "dstrain/fem/probe.hpp"
#include "dstrain/fem/solver.hpp"

using namespace dstrain;
using namespace dstrain::fem;

namespace {

Mesh unit_square() { return grid_mesh({0.0, 1.0}, {0.0, 1.0}, 1.0); }

MaterialParams strong() {
  MaterialParams p;
  p.sigma_y = 1e12;  // never yields
  return p;
}

}  // namespace

TEST(ElementStrain, RigidTranslationIsStrainFree) {
  const Mesh m = unit_square();
  const std::vector<double> u{1e-3, 2e-3, 1e-3, 2e-3, 1e-3, 2e-3, 1e-3, 2e-3};
  for (const auto& e : element_strain(m.elements[0], m.nodes, u)) EXPECT_LT(norm(e), 1e-18);
}

TEST(ElementStrain, InfinitesimalRotationIsStrainFree) {
  const Mesh m = grid_mesh({0.0, 2.0}, {0.0, 1.5}, 1.0);
  std::vector<double> u;
  const double w = 1e-4;
  for (const Vec2& x : m.nodes) {
    u.push_back(-w * x.y);
    u.push_back(w * x.x);
  }
  for (const auto& e : element_strain(m.elements[0], m.nodes, u)) EXPECT_LT(norm(e), 1e-18);
}

TEST(ElementStrain, LinearFieldIsExact) {
  const Mesh m = unit_square();
  std::vector<double> u;
  for (const Vec2& x : m.nodes) {
    u.push_back(1e-3 * x.x);
    u.push_back(0.0);
  }
  const auto eps = element_strain(m.elements[0], m.nodes, u);
  ASSERT_EQ(eps.size(), 4u);
  for (const auto& e : eps) {
    EXPECT_NEAR(e.xx, 1e-3, 1e-18);
    EXPECT_NEAR(e.yy, 0.0, 1e-18);
    EXPECT_NEAR(e.xy, 0.0, 1e-18);
  }
}

TEST(ElementStrain, TriangleIsConstant) {
  Mesh m;
  m.nodes = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  m.elements = {{ElementType::Tri3, {0, 1, 2, -1}}};
  const std::vector<double> u{0.0, 0.0, 1e-3, 0.0, 0.0, 2e-3};
  const auto eps = element_strain(m.elements[0], m.nodes, u);
  ASSERT_EQ(eps.size(), 1u);
  EXPECT_NEAR(eps[0].xx, 1e-3, 1e-18);
  EXPECT_NEAR(eps[0].yy, 2e-3, 1e-18);
}

TEST(ElementStrain, DegenerateElementIsRejected) {
  Mesh m;
  m.nodes = {{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}, {0.0, 1.0}};
  m.elements = {{ElementType::Quad4, {0, 1, 2, 3}}};
  EXPECT_THROW(m.validate(), MeshError);
  m.nodes = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}};  // clockwise
  EXPECT_THROW(m.validate(), MeshError);
}

TEST(MeshDocument, RoundTripsAndRejectsUnknownKeys) {
  const Mesh m = grid_mesh(linspace(0, 1, 3), linspace(0, 1, 2), 0.05);
  const Mesh back = mesh_from_json(to_json(m));
  EXPECT_EQ(back.checksum(), m.checksum());
  auto j = to_json(m);
  j["colour"] = "red";
  EXPECT_THROW(mesh_from_json(j), MeshError);
  auto bad = to_json(m);
  bad["sets"]["left"].push_back(999);
  EXPECT_THROW(mesh_from_json(bad), MeshError);
}

TEST(Assemble, ZeroIncrementGivesZeroForce) {
  const Model model(grid_mesh(linspace(0, 1, 3), linspace(0, 1, 3), 1.0), MaterialParams{});
  const QuadraturePointStore store(model.mesh());
  const auto a = assemble(model, store, Eigen::VectorXd::Zero(model.mesh().dof_count()));
  EXPECT_EQ(a.internal_force.norm(), 0.0);
}

TEST(Assemble, SingleQuadPatchReactions) {
  // Uniaxial stress: ux = e x, uy = -nu e y gives sigma_xx = E e only.
  const MaterialParams p = strong();
  const double L = 2.0, H = 1.0, t = 0.1, e = 1e-4;
  const Model model(grid_mesh({0.0, L}, {0.0, H}, t), p);
  const QuadraturePointStore store(model.mesh());
  Eigen::VectorXd u(8);
  for (int n = 0; n < 4; ++n) {
    u[2 * n] = e * model.mesh().nodes[n].x;
    u[2 * n + 1] = -p.nu * e * model.mesh().nodes[n].y;
  }
  const auto a = assemble(model, store, u);
  const double sigma = p.E * e;
  // right edge nodes 1 and 3 carry half of sigma * H * t each
  EXPECT_NEAR(a.internal_force[2], 0.5 * sigma * H * t, 1e-9 * sigma * H * t);
  EXPECT_NEAR(a.internal_force[6], 0.5 * sigma * H * t, 1e-9 * sigma * H * t);
  EXPECT_NEAR(a.internal_force[0], -0.5 * sigma * H * t, 1e-9 * sigma * H * t);
  for (int k = 1; k < 8; k += 2) EXPECT_NEAR(a.internal_force[k], 0.0, 1e-9 * sigma * H * t);
}

TEST(Assemble, TangentMatchesForceDifferences) {
  const MaterialParams p;
  const Model model(grid_mesh({0.0, 0.3, 1.0}, {0.0, 0.4, 0.7}, 0.05), p);
  const QuadraturePointStore store(model.mesh());
  const int n = model.mesh().dof_count();
  Eigen::VectorXd u(n);
  for (int k = 0; k < n; ++k) u[k] = 1e-6 * std::sin(1.3 * k + 0.2);
  const auto a = assemble(model, store, u);
  const Eigen::MatrixXd K(a.tangent);
  const double h = 1e-9;
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd up = u, um = u;
    up[k] += h;
    um[k] -= h;
    const Eigen::VectorXd col =
        (assemble(model, store, up, false).internal_force - assemble(model, store, um, false).internal_force) / (2 * h);
    EXPECT_LE((col - K.col(k)).norm(), 1e-4 * K.col(k).norm()) << "column " << k;
  }
}

TEST(Solver, PatchTestUniformStress) {
  const MaterialParams p = strong();
  // Distorted interior nodes to make the patch non-trivial.
  Mesh m = grid_mesh(linspace(0, 1, 2), linspace(0, 1, 2), 0.1);
  m.nodes[4] = {0.55, 0.42};
  m.node_sets["boundary"] = {0, 1, 2, 3, 5, 6, 7, 8};
  const double ex = 1e-4, ey = -3e-5, gxy = 5e-5;
  std::vector<DirichletHistory> h;
  for (int node : m.node_sets["boundary"]) {
    const std::string name = "b" + std::to_string(node);
    m.node_sets[name] = {node};
    const Vec2 x = m.nodes[node];
    h.push_back({name, kX, Amplitude({0.0, 1.0}, {0.0, ex * x.x + gxy * x.y})});
    h.push_back({name, kY, Amplitude({0.0, 1.0}, {0.0, ey * x.y})});
  }
  const RunResult r = run_history(m, h, p, SolverConfig{.steps = 1});
  ASSERT_EQ(r.status, RunStatus::Completed) << r.message;
  const SymTensor2 exact = p.elastic().apply({ex, ey, 0.5 * gxy});
  const double scale = norm(exact);
  for (const auto& pt : r.store.points()) EXPECT_LE(norm(pt.stress - exact), 1e-10 * scale);
}

TEST(Solver, CantileverMatchesBeamTheory) {
  const MaterialParams p = strong();
  const double L = 1.0, H = 0.1, t = 0.01;
  Mesh m = grid_mesh(linspace(0, L, 40), linspace(0, H, 4), t);
  // Apply the tip deflection of beam theory and compare the tip force.
  const double I = t * H * H * H / 12.0;
  const double delta = 1e-4;
  const double P_beam = 3.0 * p.E * I * delta / (L * L * L);
  m.node_sets["tip"] = {m.node_sets["right"][2]};  // mid-height of the tip
  const std::vector<DirichletHistory> h{{"left", kX, Amplitude::constant(0.0)},
                                        {"left", kY, Amplitude::constant(0.0)},
                                        {"tip", kY, Amplitude({0.0, 1.0}, {0.0, -delta})}};
  const RunResult r = run_history(m, h, p, SolverConfig{.steps = 1});
  ASSERT_EQ(r.status, RunStatus::Completed) << r.message;
  const double force = -r.steps.back().reactions.at("tip").y;
  EXPECT_NEAR(force / P_beam, 1.0, 0.05);
}

TEST(Solver, ReactionsBalance) {
  const MaterialParams p;
  Mesh m = grid_mesh(linspace(0, 0.2, 8), linspace(0, 0.05, 3), 0.05);
  m.node_sets["corner"] = {0};
  const std::vector<DirichletHistory> h{{"left", kX, Amplitude::constant(0.0)},
                                        {"corner", kY, Amplitude::constant(0.0)},
                                        {"right", kX, Amplitude({0.0, 0.5, 1.0}, {0.0, 4e-5, -2e-5})}};
  const SolverConfig cfg{.steps = 20};
  const RunResult r = run_history(m, h, p, cfg);
  ASSERT_EQ(r.status, RunStatus::Completed) << r.message;
  for (const auto& s : r.steps) {
    const double tol = cfg.tolerance * s.reference_force;
    EXPECT_LE(std::abs(s.reaction_balance.x), tol);
    EXPECT_LE(std::abs(s.reaction_balance.y), tol);
  }
}

TEST(Solver, FailedStepLeavesStoreUntouched) {
  const MaterialParams p;
  Mesh m = grid_mesh(linspace(0, 0.1, 4), linspace(0, 0.05, 2), 0.05);
  m.node_sets["corner"] = {0};
  // step 1 is elastic; step 2 jumps far into softening with no cuts allowed
  const std::vector<DirichletHistory> h{{"left", kX, Amplitude::constant(0.0)},
                                        {"corner", kY, Amplitude::constant(0.0)},
                                        {"right", kX, Amplitude({0.0, 0.5, 1.0}, {0.0, 1e-6, 5e-4})}};
  const SolverConfig cfg{.steps = 2, .tolerance = 1e-12, .max_iterations = 1, .cut_factor = 0.5, .max_cuts = 0};
  Solver solver(m, h, p, cfg);
  RunOptions opt;
  opt.field_steps = {1};
  const RunResult r = solver.run(opt);
  ASSERT_EQ(r.status, RunStatus::NonConvergence);
  ASSERT_EQ(r.steps.size(), 1u);
  const auto& committed = *r.steps[0].field;
  const auto pts = solver.store().points();
  ASSERT_EQ(pts.size(), committed.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(pts[i].state.strain, committed[i].state.strain);
    EXPECT_EQ(pts[i].state.acc_plastic, committed[i].state.acc_plastic);
    EXPECT_EQ(pts[i].stress, committed[i].stress);
  }
  EXPECT_EQ(solver.displacement(), r.steps[0].displacement);
}

TEST(Probe, NodeAndLinePairs) {
  Mesh m = grid_mesh(linspace(0, 1, 2), linspace(0, 1, 2), 1.0);
  m.node_sets["A"] = {0};
  m.node_sets["B"] = {1};
  m.node_sets["L"] = {0, 3, 6};
  m.node_sets["R"] = {2, 5, 8};
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m.dof_count());
  const Probe pair{Probe::Kind::NodePair, "A", "B", kX};
  EXPECT_EQ(pair.evaluate(m, u), 0.0);
  u[0] = 1e-5;
  u[2] = -1e-5;
  EXPECT_DOUBLE_EQ(pair.evaluate(m, u), 2e-5);
  u.setZero();
  for (int n : m.node_sets["L"]) u[2 * n] = -2e-5;
  for (int n : m.node_sets["R"]) u[2 * n] = 2e-5;
  const Probe lines{Probe::Kind::LinePair, "L", "R", kX};
  EXPECT_DOUBLE_EQ(lines.evaluate(m, u), 4e-5);
  m.node_sets["E"] = {};
  EXPECT_THROW((Probe{Probe::Kind::LinePair, "E", "R", kX}.evaluate(m, u)), std::invalid_argument);
}

TEST(Probe, RigidTranslationInvariant) {
  Mesh m = grid_mesh(linspace(0, 1, 2), linspace(0, 1, 2), 1.0);
  m.node_sets["A"] = {0};
  m.node_sets["B"] = {8};
  Eigen::VectorXd u(m.dof_count());
  for (int k = 0; k < u.size(); ++k) u[k] = 1e-5 * std::cos(0.7 * k);
  const Probe pair{Probe::Kind::NodePair, "A", "B", kY};
  const Probe lines{Probe::Kind::LinePair, "left", "right", kX};
  const double p0 = pair.evaluate(m, u), l0 = lines.evaluate(m, u);
  for (int k = 0; k < u.size(); k += 2) u[k] += 3e-3;
  for (int k = 1; k < u.size(); k += 2) u[k] -= 7e-3;
  EXPECT_NEAR(pair.evaluate(m, u), p0, 1e-15);
  EXPECT_NEAR(lines.evaluate(m, u), l0, 1e-15);
}
