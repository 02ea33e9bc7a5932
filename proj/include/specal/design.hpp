#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "specal/core.hpp"
#include "specal/random.hpp"

namespace specal {

enum class DesignKind { training, test };

inline const char* design_kind_name(DesignKind k) {
  return k == DesignKind::training ? "training" : "test";
}

/// A Latin hypercube design: for each coordinate the m values occupy the m
/// strata [(k-1)/m, k/m) exactly once.
struct Design {
  std::vector<ParameterPoint> points;
  std::uint64_t seed = 0;
  DesignKind kind = DesignKind::training;

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : points.front().dim(); }

  /// Design as an m x p matrix (rows are points).
  MatrixXd matrix() const {
    MatrixXd out(size(), dim());
    for (int i = 0; i < size(); ++i) out.row(i) = points[i].coords.transpose();
    return out;
  }
};

/// Plain LHS with uniform jitter inside each stratum. Deterministic given
/// (m, p, seed).
inline Design latin_hypercube(int m, int p, std::uint64_t seed,
                              DesignKind kind = DesignKind::training) {
  if (m < 1) throw DomainError("latin_hypercube: m must be >= 1");
  if (p < 1) throw DomainError("latin_hypercube: p must be >= 1");
  rng::Engine engine(seed);
  std::vector<std::vector<int>> strata(p, std::vector<int>(m));
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < m; ++k) strata[j][k] = k;
    rng::shuffle(strata[j], engine);
  }
  Design d;
  d.seed = seed;
  d.kind = kind;
  d.points.reserve(m);
  for (int i = 0; i < m; ++i) {
    VectorXd c(p);
    for (int j = 0; j < p; ++j)
      c[j] = (strata[j][i] + engine.uniform()) / static_cast<double>(m);
    d.points.emplace_back(std::move(c));
  }
  return d;
}

/// Copies temperature and density from `base` and pins the composition
/// coordinate to a constant (the single-element suites fix it at 0 or 1).
/// Stratification then holds only for the two copied coordinates.
inline Design fixed_composition_design(const Design& base, double sodium_fraction) {
  if (!(sodium_fraction >= 0.0 && sodium_fraction <= 1.0))
    throw DomainError("fixed_composition_design: sodium fraction outside [0,1]");
  Design d = base;
  for (auto& pt : d.points) {
    if (pt.dim() != kParamDim)
      throw DomainError("fixed_composition_design: base design is not 3-d");
    pt.coords[2] = sodium_fraction;
  }
  return d;
}

inline constexpr const char* kDesignCsvHeader = "t,log10_rho,na_frac";

/// Designs are exchanged as CSV with full decimal precision so a round trip
/// through text is bit-exact.
inline void write_design_csv(const Design& d, std::ostream& os) {
  os << kDesignCsvHeader << "\n";
  char buf[256];
  for (const auto& pt : d.points) {
    if (pt.dim() != kParamDim)
      throw DomainError("write_design_csv: expected 3 coordinates");
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", pt.coords[0],
                  pt.coords[1], pt.coords[2]);
    os << buf;
  }
}

inline Design read_design_csv(std::istream& is, std::uint64_t seed,
                              DesignKind kind) {
  std::string line;
  if (!std::getline(is, line) || line != kDesignCsvHeader)
    throw IntegrityError("design CSV: bad header");
  Design d;
  d.seed = seed;
  d.kind = kind;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    VectorXd c(kParamDim);
    char comma;
    if (!(ss >> c[0] >> comma >> c[1] >> comma >> c[2]))
      throw IntegrityError("design CSV: malformed row '" + line + "'");
    d.points.emplace_back(std::move(c));
  }
  if (d.points.empty()) throw IntegrityError("design CSV: no rows");
  return d;
}

}  // namespace specal
