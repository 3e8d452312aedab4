#pragma once

// Gauss-point field dumps: a flat CSV table and legacy VTK points.

#include <fstream>
#include <span>
#include <string>

#include "dstrain/csv.hpp"
#include "dstrain/fem/solver.hpp"

namespace dstrain::fem {

inline void write_field_csv(const std::string& path, const Model& model, std::span<const PointRecord> field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "element,gauss,x,y,sxx,syy,sxy,s1,s2,damage,regime\n";
  int k = 0;
  for (int e = 0; e < static_cast<int>(model.mesh().elements.size()); ++e) {
    const auto& gps = model.gauss(e);
    for (int g = 0; g < static_cast<int>(gps.size()); ++g, ++k) {
      const PointRecord& r = field[static_cast<std::size_t>(k)];
      const Spectral2 sp = spectral(r.stress);
      out << e << ',' << g << ','
          << csv::row({csv::real(gps[g].position.x), csv::real(gps[g].position.y), csv::real(r.stress.xx),
                       csv::real(r.stress.yy), csv::real(r.stress.xy), csv::real(sp.values[0]),
                       csv::real(sp.values[1]), csv::real(r.damage), to_string(r.state.regime)})
          << '\n';
    }
  }
}

/// Gauss points as VTK vertices with stress, principal stresses and damage.
inline void write_field_vtk(const std::string& path, const Model& model, std::span<const PointRecord> field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::size_t n = field.size();
  out << "# vtk DataFile Version 3.0\ngauss point field\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n << " double\n";
  for (int e = 0; e < static_cast<int>(model.mesh().elements.size()); ++e) {
    for (const auto& gp : model.gauss(e)) out << csv::real(gp.position.x) << ' ' << csv::real(gp.position.y) << " 0\n";
  }
  out << "CELLS " << n << ' ' << 2 * n << '\n';
  for (std::size_t i = 0; i < n; ++i) out << "1 " << i << '\n';
  out << "CELL_TYPES " << n << '\n';
  for (std::size_t i = 0; i < n; ++i) out << "1\n";
  out << "POINT_DATA " << n << "\nTENSORS stress double\n";
  for (const auto& r : field) {
    out << csv::real(r.stress.xx) << ' ' << csv::real(r.stress.xy) << " 0 " << csv::real(r.stress.xy) << ' '
        << csv::real(r.stress.yy) << " 0 0 0 0\n";
  }
  out << "SCALARS damage double 1\nLOOKUP_TABLE default\n";
  for (const auto& r : field) out << csv::real(r.damage) << '\n';
  out << "SCALARS max_principal double 1\nLOOKUP_TABLE default\n";
  for (const auto& r : field) out << csv::real(spectral(r.stress).values[0]) << '\n';
}

}  // namespace dstrain::fem
