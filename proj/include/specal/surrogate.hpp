#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "specal/core.hpp"
#include "specal/design.hpp"
#include "specal/random.hpp"
#include "specal/threading.hpp"

namespace specal {

// Analytic stand-in for the slow plasma physics code. It is not physics: it
// is a smooth, strictly positive map from (T, log10 rho, %Na) to a spectrum
// that reproduces the structure the statistical pipeline depends on --
// element-specific emission lines, several orders of magnitude of dynamic
// range, and a nonlinear dependence of sodium line heights on composition.

struct SpectralLine {
  double center_nm = 0.0;
  double strength = 1.0;        // relative amplitude, > 0
  double upper_energy_eV = 1.0; // Boltzmann factor exp(-E/T), > 0
};

struct LineList {
  std::vector<SpectralLine> sodium;
  std::vector<SpectralLine> copper;

  void validate(const WavelengthGrid& grid) const {
    auto check = [&](const std::vector<SpectralLine>& lines, const char* elem) {
      for (const auto& ln : lines) {
        if (!(ln.center_nm > grid.min() && ln.center_nm < grid.max()))
          throw DomainError(std::string("LineList: ") + elem + " line at " +
                            std::to_string(ln.center_nm) +
                            " nm outside the wavelength grid");
        if (!(ln.strength > 0.0) || !(ln.upper_energy_eV > 0.0))
          throw DomainError(std::string("LineList: ") + elem +
                            " line needs positive strength and energy");
      }
    };
    check(sodium, "Na");
    check(copper, "Cu");
  }
};

// Na D doublet + an IR line, and three Cu I lines. The upper-level energies
// are tuned to the [0.5, 1.5] eV temperature window so every line stays well
// above the continuum across the whole range while the Boltzmann ratios
// still spread enough to carry temperature information.
inline LineList default_line_list() {
  LineList l;
  l.sodium = {{589.0, 1.0, 0.90}, {589.6, 0.5, 0.90}, {819.5, 0.55, 2.10}};
  l.copper = {{324.8, 1.4, 1.25}, {327.4, 0.7, 1.20}, {521.8, 0.8, 3.00}};
  return l;
}

struct ContinuumParams {
  double amplitude = 6.0e4;          // b0
  double slope = 50.0;               // b1, ramp across the grid
  double temperature_scale_eV = 0.5; // T0 in exp(T/T0)
};

struct SurrogateConfig {
  LineList lines = default_line_list();
  double matrix_gain = 2.0;        // gamma: Na brightening per unit Cu
  double base_width_nm = 1.0;      // w0, Gaussian sigma at mid density
  double width_density_exponent = 0.18;     // Stark-broadening proxy
  double density_amplitude_exponent = 0.15; // h(rho) = (rho/rho_mid)^alpha
  double line_amplitude = 5.0e9;
  ContinuumParams continuum;
  GridPtr grid = make_uniform_grid(2048, 250.0, 900.0);

  void validate() const {
    if (!(matrix_gain >= 0.0)) throw DomainError("SurrogateConfig: gamma < 0");
    if (!(base_width_nm > 0.0)) throw DomainError("SurrogateConfig: w0 <= 0");
    if (!(line_amplitude > 0.0) || !(continuum.amplitude > 0.0))
      throw DomainError("SurrogateConfig: amplitudes must be positive");
    if (!grid) throw DomainError("SurrogateConfig: missing grid");
    grid->validate();
    lines.validate(*grid);
  }
};

inline constexpr double kLog10DensityMid = -5.5;  // midpoint of the rho range

namespace detail {
// Density scaling h(rho) = (rho / rho_mid)^expo evaluated from log10 rho.
inline double density_power(double log10_rho, double expo) {
  return std::pow(10.0, expo * (log10_rho - kLog10DensityMid));
}
}  // namespace detail

/// Element amplitudes. A_Na = c (1 + gamma (1 - c)) h(rho) makes sodium lines
/// superlinearly bright per unit Na while copper is present (the matrix
/// effect the calibration has to cope with); A_Cu = (1 - c) h(rho).
inline double sodium_amplitude(double sodium_fraction, double log10_rho,
                               const SurrogateConfig& cfg) {
  const double c = sodium_fraction;
  return c * (1.0 + cfg.matrix_gain * (1.0 - c)) *
         detail::density_power(log10_rho, cfg.density_amplitude_exponent);
}

inline double copper_amplitude(double sodium_fraction, double log10_rho,
                               const SurrogateConfig& cfg) {
  return (1.0 - sodium_fraction) *
         detail::density_power(log10_rho, cfg.density_amplitude_exponent);
}

/// Gaussian line sigma, broadening slowly with density.
inline double line_width_nm(double log10_rho, const SurrogateConfig& cfg) {
  return cfg.base_width_nm *
         detail::density_power(log10_rho, cfg.width_density_exponent);
}

/// Smooth positive continuum, increasing in T, tilted across the grid.
inline double continuum_at(double lambda_nm, const NativeParameters& n,
                           const SurrogateConfig& cfg) {
  const double frac =
      (lambda_nm - cfg.grid->min()) / (cfg.grid->max() - cfg.grid->min());
  return cfg.continuum.amplitude *
         std::exp(n.temperature_eV / cfg.continuum.temperature_scale_eV) *
         (1.0 + cfg.continuum.slope * frac) *
         detail::density_power(n.log10_density_gcc,
                               cfg.density_amplitude_exponent);
}

/// Deterministic raw-scale spectrum for one parameter setting:
///   I(lambda) = B(lambda; T, rho)
///             + sum_e A_e(T, rho, c) sum_k s_ek exp(-E_ek / T) G(lambda - c_ek; w(rho))
/// with G a unit-area Gaussian. Strictly positive and smooth in all three
/// parameters.
inline Spectrum simulate(const NativeParameters& n, const SurrogateConfig& cfg) {
  n.validate();
  cfg.validate();
  const VectorXd& lam = cfg.grid->values;
  const int n_bins = cfg.grid->size();
  VectorXd intensity(n_bins);
  for (int i = 0; i < n_bins; ++i) intensity[i] = continuum_at(lam[i], n, cfg);

  const double width = line_width_nm(n.log10_density_gcc, cfg);
  const double gauss_norm = 1.0 / (width * std::sqrt(2.0 * 3.14159265358979323846));
  auto add_element = [&](const std::vector<SpectralLine>& lines, double amp) {
    for (const auto& ln : lines) {
      const double peak = amp * cfg.line_amplitude * ln.strength *
                          std::exp(-ln.upper_energy_eV / n.temperature_eV) *
                          gauss_norm;
      if (peak == 0.0) continue;
      for (int i = 0; i < n_bins; ++i) {
        const double d = (lam[i] - ln.center_nm) / width;
        intensity[i] += peak * std::exp(-0.5 * d * d);
      }
    }
  };
  add_element(cfg.lines.sodium,
              sodium_amplitude(n.sodium_fraction, n.log10_density_gcc, cfg));
  add_element(cfg.lines.copper,
              copper_amplitude(n.sodium_fraction, n.log10_density_gcc, cfg));
  return Spectrum(cfg.grid, std::move(intensity), Scale::raw);
}

/// One spectrum per design point, column order preserved. Columns are
/// independent, so they are evaluated on the worker pool.
inline SpectrumSet simulate_batch(const Design& design, const SurrogateConfig& cfg) {
  if (design.size() < 1) throw DomainError("simulate_batch: empty design");
  cfg.validate();
  MatrixXd mat(cfg.grid->size(), design.size());
  parallel_for(design.size(), [&](int i) {
    mat.col(i) = simulate(to_native(design.points[i]), cfg).intensity;
  });
  return SpectrumSet(cfg.grid, std::move(mat), design.points, Scale::raw);
}

/// Per-bin observation noise, Eq-style y = eta + eps with eps ~ N(0, 1/lambda_y).
/// Defined on the standardized scale (the precision lives there).
struct NoiseModel {
  double precision = 4.0;  // lambda_y
  std::uint64_t seed = 0;

  void validate() const {
    if (!(precision > 0.0)) throw DomainError("NoiseModel: precision must be > 0");
  }
};

inline Spectrum add_noise(const Spectrum& s, const NoiseModel& nm) {
  require_scale(s.scale, Scale::standardized, "add_noise");
  nm.validate();
  rng::Engine engine(nm.seed);
  const double sd = 1.0 / std::sqrt(nm.precision);
  VectorXd noisy = s.intensity;
  for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy[i] += sd * engine.normal();
  return Spectrum(s.grid, std::move(noisy), Scale::standardized);
}

// --- JSON round trip for the surrogate configuration -----------------------

inline void to_json(nlohmann::json& j, const SpectralLine& ln) {
  j = {{"center_nm", ln.center_nm},
       {"strength", ln.strength},
       {"upper_energy_eV", ln.upper_energy_eV}};
}

inline void from_json(const nlohmann::json& j, SpectralLine& ln) {
  j.at("center_nm").get_to(ln.center_nm);
  j.at("strength").get_to(ln.strength);
  j.at("upper_energy_eV").get_to(ln.upper_energy_eV);
}

inline void to_json(nlohmann::json& j, const SurrogateConfig& cfg) {
  j = {{"sodium_lines", cfg.lines.sodium},
       {"copper_lines", cfg.lines.copper},
       {"matrix_gain", cfg.matrix_gain},
       {"base_width_nm", cfg.base_width_nm},
       {"width_density_exponent", cfg.width_density_exponent},
       {"density_amplitude_exponent", cfg.density_amplitude_exponent},
       {"line_amplitude", cfg.line_amplitude},
       {"continuum",
        {{"amplitude", cfg.continuum.amplitude},
         {"slope", cfg.continuum.slope},
         {"temperature_scale_eV", cfg.continuum.temperature_scale_eV}}}};
}

/// Fills `cfg` from JSON; keys not present keep their defaults. The grid is
/// owned by the pipeline configuration, not this file.
inline void from_json(const nlohmann::json& j, SurrogateConfig& cfg) {
  if (j.contains("sodium_lines")) j.at("sodium_lines").get_to(cfg.lines.sodium);
  if (j.contains("copper_lines")) j.at("copper_lines").get_to(cfg.lines.copper);
  if (j.contains("matrix_gain")) j.at("matrix_gain").get_to(cfg.matrix_gain);
  if (j.contains("base_width_nm")) j.at("base_width_nm").get_to(cfg.base_width_nm);
  if (j.contains("width_density_exponent"))
    j.at("width_density_exponent").get_to(cfg.width_density_exponent);
  if (j.contains("density_amplitude_exponent"))
    j.at("density_amplitude_exponent").get_to(cfg.density_amplitude_exponent);
  if (j.contains("line_amplitude")) j.at("line_amplitude").get_to(cfg.line_amplitude);
  if (j.contains("continuum")) {
    const auto& c = j.at("continuum");
    if (c.contains("amplitude")) c.at("amplitude").get_to(cfg.continuum.amplitude);
    if (c.contains("slope")) c.at("slope").get_to(cfg.continuum.slope);
    if (c.contains("temperature_scale_eV"))
      c.at("temperature_scale_eV").get_to(cfg.continuum.temperature_scale_eV);
  }
}

inline SurrogateConfig load_surrogate_config(const std::string& path, GridPtr grid) {
  std::ifstream is(path);
  if (!is) throw StateError("cannot open surrogate config '" + path + "'");
  nlohmann::json j;
  is >> j;
  SurrogateConfig cfg = j.get<SurrogateConfig>();
  if (grid) cfg.grid = std::move(grid);
  cfg.validate();
  return cfg;
}

}  // namespace specal
