#pragma once

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace specal {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Error taxonomy used across the pipeline. Everything derives from Error so
// callers can catch the whole family; the CLI maps IntegrityError to its own
// exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ScaleError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct DegenerateDataError : Error {
  using Error::Error;
};
struct IntegrityError : Error {
  using Error::Error;
};

/// Native parameter ranges. Coordinate order is fixed everywhere as
/// (temperature, log10 density, sodium fraction).
inline constexpr int kParamDim = 3;
inline constexpr double kTemperatureLo = 0.5, kTemperatureHi = 1.5;   // eV
inline constexpr double kLog10DensityLo = -7.0, kLog10DensityHi = -4.0;
inline constexpr double kSodiumLo = 0.0, kSodiumHi = 1.0;

/// A point in the unit cube [0,1]^p. The dimension is carried explicitly so
/// the design and emulator code generalize beyond p = 3, but the native-unit
/// mapping below is specific to the three-parameter plasma problem.
struct ParameterPoint {
  VectorXd coords;

  ParameterPoint() = default;
  explicit ParameterPoint(VectorXd c) : coords(std::move(c)) { validate(); }
  ParameterPoint(double a, double b, double c) : coords(3) {
    coords << a, b, c;
    validate();
  }

  int dim() const { return static_cast<int>(coords.size()); }

  void validate() const {
    if (coords.size() == 0) throw DomainError("ParameterPoint: empty");
    for (Eigen::Index j = 0; j < coords.size(); ++j) {
      if (!(coords[j] >= 0.0 && coords[j] <= 1.0))
        throw DomainError("ParameterPoint: coordinate " + std::to_string(j) +
                          " = " + std::to_string(coords[j]) +
                          " outside [0,1]");
    }
  }
};

struct NativeParameters {
  double temperature_eV = 0.0;
  double log10_density_gcc = 0.0;
  double sodium_fraction = 0.0;

  void validate() const {
    if (!(temperature_eV >= kTemperatureLo && temperature_eV <= kTemperatureHi))
      throw DomainError("NativeParameters: temperature " +
                        std::to_string(temperature_eV) + " outside [0.5,1.5] eV");
    if (!(log10_density_gcc >= kLog10DensityLo &&
          log10_density_gcc <= kLog10DensityHi))
      throw DomainError("NativeParameters: log10 density " +
                        std::to_string(log10_density_gcc) + " outside [-7,-4]");
    if (!(sodium_fraction >= kSodiumLo && sodium_fraction <= kSodiumHi))
      throw DomainError("NativeParameters: sodium fraction " +
                        std::to_string(sodium_fraction) + " outside [0,1]");
  }
};

/// Affine map from the unit cube to native units.
inline NativeParameters to_native(const ParameterPoint& t) {
  t.validate();
  if (t.dim() != kParamDim)
    throw DomainError("to_native: expected 3 coordinates, got " +
                      std::to_string(t.dim()));
  NativeParameters n;
  n.temperature_eV = kTemperatureLo + t.coords[0] * (kTemperatureHi - kTemperatureLo);
  n.log10_density_gcc =
      kLog10DensityLo + t.coords[1] * (kLog10DensityHi - kLog10DensityLo);
  n.sodium_fraction = kSodiumLo + t.coords[2] * (kSodiumHi - kSodiumLo);
  return n;
}

/// Exact inverse of to_native.
inline ParameterPoint from_native(const NativeParameters& n) {
  n.validate();
  VectorXd c(kParamDim);
  c[0] = (n.temperature_eV - kTemperatureLo) / (kTemperatureHi - kTemperatureLo);
  c[1] = (n.log10_density_gcc - kLog10DensityLo) /
         (kLog10DensityHi - kLog10DensityLo);
  c[2] = (n.sodium_fraction - kSodiumLo) / (kSodiumHi - kSodiumLo);
  // The division can land a hair outside [0,1] for boundary inputs.
  for (int j = 0; j < kParamDim; ++j) c[j] = std::min(1.0, std::max(0.0, c[j]));
  return ParameterPoint(std::move(c));
}

/// Wavelength axis shared by all spectra of a run, nm, strictly increasing.
struct WavelengthGrid {
  VectorXd values;

  WavelengthGrid() = default;
  explicit WavelengthGrid(VectorXd v) : values(std::move(v)) { validate(); }

  int size() const { return static_cast<int>(values.size()); }
  double min() const { return values[0]; }
  double max() const { return values[values.size() - 1]; }

  void validate() const {
    if (values.size() < 2) throw DomainError("WavelengthGrid: need at least 2 bins");
    for (Eigen::Index i = 1; i < values.size(); ++i)
      if (!(values[i] > values[i - 1]))
        throw DomainError("WavelengthGrid: values not strictly increasing");
  }
};

using GridPtr = std::shared_ptr<const WavelengthGrid>;

inline GridPtr make_uniform_grid(int n_bins, double lo_nm, double hi_nm) {
  if (n_bins < 2) throw DomainError("grid: need at least 2 bins");
  if (!(hi_nm > lo_nm)) throw DomainError("grid: empty wavelength span");
  VectorXd v(n_bins);
  for (int i = 0; i < n_bins; ++i)
    v[i] = lo_nm + (hi_nm - lo_nm) * static_cast<double>(i) / (n_bins - 1);
  return std::make_shared<WavelengthGrid>(std::move(v));
}

// Every spectrum container carries its scale so operations can reject
// wrong-scale inputs; the pipeline mixes raw, log, and standardized data and
// scale confusion is the worst available bug.
enum class Scale { raw, log, standardized };

inline const char* scale_name(Scale s) {
  switch (s) {
    case Scale::raw: return "raw";
    case Scale::log: return "log";
    case Scale::standardized: return "standardized";
  }
  return "?";
}

inline void require_scale(Scale got, Scale want, const char* where) {
  if (got != want)
    throw ScaleError(std::string(where) + ": expected " + scale_name(want) +
                     "-scale input, got " + scale_name(got));
}

/// One spectrum on a shared wavelength grid. Raw-scale intensities must be
/// strictly positive so the log transform stays defined.
struct Spectrum {
  GridPtr grid;
  VectorXd intensity;
  Scale scale = Scale::raw;

  Spectrum() = default;
  Spectrum(GridPtr g, VectorXd i, Scale s)
      : grid(std::move(g)), intensity(std::move(i)), scale(s) {
    validate();
  }

  int size() const { return static_cast<int>(intensity.size()); }

  void validate() const {
    if (!grid) throw DomainError("Spectrum: missing wavelength grid");
    if (intensity.size() != grid->values.size())
      throw DomainError("Spectrum: intensity length " +
                        std::to_string(intensity.size()) +
                        " != grid length " + std::to_string(grid->size()));
    if (scale == Scale::raw && (intensity.array() <= 0.0).any())
      throw DomainError("Spectrum: raw intensities must be strictly positive");
  }
};

/// A matrix of spectra: one column per run, rows indexed by wavelength bin.
struct SpectrumSet {
  GridPtr grid;
  MatrixXd matrix;  // n_eta x m
  std::vector<ParameterPoint> inputs;
  Scale scale = Scale::raw;

  SpectrumSet() = default;
  SpectrumSet(GridPtr g, MatrixXd mat, std::vector<ParameterPoint> in, Scale s)
      : grid(std::move(g)), matrix(std::move(mat)), inputs(std::move(in)), scale(s) {
    validate();
  }

  int bins() const { return static_cast<int>(matrix.rows()); }
  int runs() const { return static_cast<int>(matrix.cols()); }

  Spectrum column(int i) const {
    if (i < 0 || i >= runs()) throw DomainError("SpectrumSet: column out of range");
    return Spectrum(grid, matrix.col(i), scale);
  }

  void validate() const {
    if (!grid) throw DomainError("SpectrumSet: missing wavelength grid");
    if (matrix.rows() != grid->values.size())
      throw DomainError("SpectrumSet: row count != grid length");
    if (static_cast<std::size_t>(matrix.cols()) != inputs.size())
      throw DomainError("SpectrumSet: column count " +
                        std::to_string(matrix.cols()) + " != input count " +
                        std::to_string(inputs.size()));
    if (scale == Scale::raw && (matrix.array() <= 0.0).any())
      throw DomainError("SpectrumSet: raw intensities must be strictly positive");
  }
};

}  // namespace specal
