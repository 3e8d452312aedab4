#pragma once

// Linear plane elements: constant-strain triangle and bilinear quad with
// 2x2 Gauss integration. Small-strain B-operator.

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "dstrain/tensor2d.hpp"

namespace dstrain::fem {

enum class ElementType { Tri3, Quad4 };

inline int node_count(ElementType t) { return t == ElementType::Tri3 ? 3 : 4; }
inline int gauss_count(ElementType t) { return t == ElementType::Tri3 ? 1 : 4; }
inline const char* to_string(ElementType t) { return t == ElementType::Tri3 ? "TRI3" : "QUAD4"; }

struct Element {
  ElementType type = ElementType::Quad4;
  std::array<int, 4> nodes{-1, -1, -1, -1};

  int size() const { return node_count(type); }
  std::span<const int> connectivity() const { return {nodes.data(), static_cast<std::size_t>(size())}; }
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geometry of one integration point: physical shape-function gradients,
/// position, and weight times Jacobian determinant.
struct GaussPoint {
  std::array<Vec2, 4> grad{};
  Vec2 position;
  double weight = 0.0;
};

namespace detail {

struct RefPoint {
  double xi, eta, w;
};

inline std::span<const RefPoint> reference_points(ElementType t) {
  static constexpr double g = 0.57735026918962576;  // 1/sqrt(3)
  static constexpr RefPoint quad[4] = {{-g, -g, 1.0}, {g, -g, 1.0}, {g, g, 1.0}, {-g, g, 1.0}};
  static constexpr RefPoint tri[1] = {{1.0 / 3.0, 1.0 / 3.0, 0.5}};
  if (t == ElementType::Tri3) return tri;
  return quad;
}

inline void shape(ElementType t, double xi, double eta, std::array<double, 4>& N, std::array<Vec2, 4>& dN) {
  if (t == ElementType::Tri3) {
    N = {1.0 - xi - eta, xi, eta, 0.0};
    dN = {Vec2{-1.0, -1.0}, Vec2{1.0, 0.0}, Vec2{0.0, 1.0}, Vec2{}};
    return;
  }
  static constexpr double sx[4] = {-1.0, 1.0, 1.0, -1.0};
  static constexpr double sy[4] = {-1.0, -1.0, 1.0, 1.0};
  for (int a = 0; a < 4; ++a) {
    N[a] = 0.25 * (1.0 + sx[a] * xi) * (1.0 + sy[a] * eta);
    dN[a] = {0.25 * sx[a] * (1.0 + sy[a] * eta), 0.25 * sy[a] * (1.0 + sx[a] * xi)};
  }
}

}  // namespace detail

/// Jacobian determinant at a reference point.
inline double jacobian_det(const Element& e, std::span<const Vec2> coords, double xi, double eta) {
  std::array<double, 4> N{};
  std::array<Vec2, 4> dN{};
  detail::shape(e.type, xi, eta, N, dN);
  double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
  for (int a = 0; a < e.size(); ++a) {
    const Vec2 x = coords[e.nodes[a]];
    j11 += dN[a].x * x.x;
    j12 += dN[a].x * x.y;
    j21 += dN[a].y * x.x;
    j22 += dN[a].y * x.y;
  }
  return j11 * j22 - j12 * j21;
}

/// Smallest Jacobian determinant over the element. The bilinear map has a
/// determinant linear in (xi, eta), so the corners bound it.
inline double min_jacobian(const Element& e, std::span<const Vec2> coords) {
  if (e.type == ElementType::Tri3) return jacobian_det(e, coords, 0.0, 0.0);
  double m = INFINITY;
  for (double xi : {-1.0, 1.0}) {
    for (double eta : {-1.0, 1.0}) m = std::min(m, jacobian_det(e, coords, xi, eta));
  }
  return m;
}

inline std::vector<GaussPoint> gauss_points(const Element& e, std::span<const Vec2> coords) {
  std::vector<GaussPoint> out;
  for (const auto& rp : detail::reference_points(e.type)) {
    std::array<double, 4> N{};
    std::array<Vec2, 4> dN{};
    detail::shape(e.type, rp.xi, rp.eta, N, dN);
    double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
    GaussPoint gp;
    for (int a = 0; a < e.size(); ++a) {
      const Vec2 x = coords[e.nodes[a]];
      j11 += dN[a].x * x.x;
      j12 += dN[a].x * x.y;
      j21 += dN[a].y * x.x;
      j22 += dN[a].y * x.y;
      gp.position = gp.position + N[a] * x;
    }
    const double det = j11 * j22 - j12 * j21;
    if (!(det > 0.0)) throw MeshError("element has a non-positive Jacobian");
    // grad N = J^{-T} dN/dxi
    for (int a = 0; a < e.size(); ++a) {
      gp.grad[a] = {(j22 * dN[a].x - j12 * dN[a].y) / det, (-j21 * dN[a].x + j11 * dN[a].y) / det};
    }
    gp.weight = rp.w * det;
    out.push_back(gp);
  }
  return out;
}

/// Small strain at a Gauss point from the element nodal displacements
/// (ux, uy interleaved). Shear is returned as the tensorial component.
inline SymTensor2 strain_at(const GaussPoint& gp, int nodes, std::span<const double> ue) {
  SymTensor2 eps;
  for (int a = 0; a < nodes; ++a) {
    const double ux = ue[2 * a], uy = ue[2 * a + 1];
    eps.xx += gp.grad[a].x * ux;
    eps.yy += gp.grad[a].y * uy;
    eps.xy += 0.5 * (gp.grad[a].y * ux + gp.grad[a].x * uy);
  }
  return eps;
}

/// Per-Gauss-point strains of one element.
inline std::vector<SymTensor2> element_strain(const Element& e, std::span<const Vec2> coords,
                                              std::span<const double> nodal_displacements) {
  std::array<double, 8> ue{};
  for (int a = 0; a < e.size(); ++a) {
    const int n = e.nodes[a];
    ue[2 * a] = nodal_displacements[2 * n];
    ue[2 * a + 1] = nodal_displacements[2 * n + 1];
  }
  std::vector<SymTensor2> out;
  for (const auto& gp : gauss_points(e, coords)) out.push_back(strain_at(gp, e.size(), ue));
  return out;
}

}  // namespace dstrain::fem
