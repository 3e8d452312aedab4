#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dstrain/fem/element.hpp"

namespace dstrain::fem {

struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<Element> elements;
  std::map<std::string, std::vector<int>> node_sets;
  double thickness = 1.0;

  int dof_count() const { return 2 * static_cast<int>(nodes.size()); }

  const std::vector<int>& set(const std::string& name) const {
    const auto it = node_sets.find(name);
    if (it == node_sets.end()) throw MeshError("unknown node set '" + name + "'");
    return it->second;
  }

  void validate() const {
    if (!(thickness > 0.0)) throw MeshError("thickness must be positive");
    if (nodes.empty() || elements.empty()) throw MeshError("mesh has no nodes or no elements");
    const int n = static_cast<int>(nodes.size());
    for (std::size_t e = 0; e < elements.size(); ++e) {
      for (int id : elements[e].connectivity()) {
        if (id < 0 || id >= n) throw MeshError("element " + std::to_string(e) + " references a missing node");
      }
      if (!(min_jacobian(elements[e], nodes) > 0.0)) {
        throw MeshError("element " + std::to_string(e) + " has a non-positive Jacobian");
      }
    }
    for (const auto& [name, ids] : node_sets) {
      for (int id : ids) {
        if (id < 0 || id >= n) throw MeshError("node set '" + name + "' references a missing node");
      }
    }
  }

  /// FNV-1a over coordinates, connectivity, sets and thickness.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t len) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
      }
    };
    for (const Vec2& x : nodes) {
      mix(&x.x, sizeof(double));
      mix(&x.y, sizeof(double));
    }
    for (const Element& e : elements) {
      const int t = static_cast<int>(e.type);
      mix(&t, sizeof t);
      for (int id : e.connectivity()) mix(&id, sizeof id);
    }
    for (const auto& [name, ids] : node_sets) {
      mix(name.data(), name.size());
      for (int id : ids) mix(&id, sizeof id);
    }
    mix(&thickness, sizeof thickness);
    return h;
  }
};

/// Mesh document: {"thickness": t, "nodes": [[x, y], ...],
/// "elements": [[n0, n1, n2(, n3)], ...], "sets": {"name": [ids]}}.
/// Three node ids make a TRI3, four a QUAD4 (counter-clockwise).
inline Mesh mesh_from_json(const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key != "thickness" && key != "nodes" && key != "elements" && key != "sets") {
      throw MeshError("mesh document: unknown key '" + key + "'");
    }
  }
  Mesh m;
  try {
    m.thickness = j.at("thickness").get<double>();
    for (const auto& n : j.at("nodes")) {
      if (n.size() != 2) throw MeshError("mesh document: node needs two coordinates");
      m.nodes.push_back({n[0].get<double>(), n[1].get<double>()});
    }
    for (const auto& e : j.at("elements")) {
      Element el;
      if (e.size() == 3) el.type = ElementType::Tri3;
      else if (e.size() == 4) el.type = ElementType::Quad4;
      else throw MeshError("mesh document: elements need 3 or 4 nodes");
      for (std::size_t a = 0; a < e.size(); ++a) el.nodes[a] = e[a].get<int>();
      m.elements.push_back(el);
    }
    if (j.contains("sets")) {
      for (const auto& [name, ids] : j.at("sets").items()) m.node_sets[name] = ids.get<std::vector<int>>();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw MeshError(std::string("mesh document: ") + ex.what());
  }
  m.validate();
  return m;
}

/// Structured QUAD4 grid over the tensor product of two coordinate lists.
/// Node (i, j) has id j * xs.size() + i. Adds the edge sets "left",
/// "right", "bottom" and "top".
inline Mesh grid_mesh(const std::vector<double>& xs, const std::vector<double>& ys, double thickness) {
  if (xs.size() < 2 || ys.size() < 2) throw MeshError("grid_mesh: need at least two coordinates per direction");
  Mesh m;
  m.thickness = thickness;
  const int nx = static_cast<int>(xs.size()), ny = static_cast<int>(ys.size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) m.nodes.push_back({xs[i], ys[j]});
  }
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int n0 = j * nx + i;
      m.elements.push_back({ElementType::Quad4, {n0, n0 + 1, n0 + 1 + nx, n0 + nx}});
    }
  }
  for (int j = 0; j < ny; ++j) {
    m.node_sets["left"].push_back(j * nx);
    m.node_sets["right"].push_back(j * nx + nx - 1);
  }
  for (int i = 0; i < nx; ++i) {
    m.node_sets["bottom"].push_back(i);
    m.node_sets["top"].push_back((ny - 1) * nx + i);
  }
  m.validate();
  return m;
}

/// n + 1 equally spaced values on [a, b].
inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / n;
  v.back() = b;
  return v;
}

inline nlohmann::json to_json(const Mesh& m) {
  nlohmann::json j;
  j["thickness"] = m.thickness;
  j["nodes"] = nlohmann::json::array();
  for (const Vec2& x : m.nodes) j["nodes"].push_back({x.x, x.y});
  j["elements"] = nlohmann::json::array();
  for (const Element& e : m.elements) {
    nlohmann::json c = nlohmann::json::array();
    for (int id : e.connectivity()) c.push_back(id);
    j["elements"].push_back(c);
  }
  j["sets"] = m.node_sets;
  return j;
}

inline Mesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file " + path);
  try {
    return mesh_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw MeshError(std::string("mesh file ") + path + ": " + ex.what());
  }
}

}  // namespace dstrain::fem
