#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dstrain/fem/mesh.hpp"

namespace dstrain::fem {

/// Relative displacement between two nodes (|u(A) - u(B)| in one dof) or
/// between two node sets (mean over `b` minus mean over `a`).
struct Probe {
  enum class Kind { NodePair, LinePair };
  Kind kind = Kind::NodePair;
  std::string a;  ///< node set; a node pair uses single-node sets
  std::string b;
  int dof = 0;

  double evaluate(const Mesh& mesh, const Eigen::VectorXd& u) const {
    const auto& sa = mesh.set(a);
    const auto& sb = mesh.set(b);
    if (sa.empty() || sb.empty()) throw std::invalid_argument("probe: empty node set");
    if (kind == Kind::NodePair) {
      if (sa.size() != 1 || sb.size() != 1) throw std::invalid_argument("probe: node pair sets must hold one node");
      return std::abs(u[2 * sa.front() + dof] - u[2 * sb.front() + dof]);
    }
    return set_mean(sb, u) - set_mean(sa, u);
  }

  double set_mean(const std::vector<int>& ids, const Eigen::VectorXd& u) const {
    double s = 0.0;
    for (int n : ids) s += u[2 * n + dof];
    return s / static_cast<double>(ids.size());
  }
};

inline const char* to_string(Probe::Kind k) { return k == Probe::Kind::NodePair ? "node_pair" : "line_pair"; }

}  // namespace dstrain::fem
