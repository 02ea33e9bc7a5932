#pragma once

#include <Eigen/SVD>
#include <cmath>

#include "specal/core.hpp"

namespace specal {

/// Centering/scaling of the log training matrix: per-wavelength mean vector
/// and one scalar standard deviation over all entries of the centered matrix.
struct StandardizationStats {
  VectorXd mean;      // length n_eta
  double scale = 0.0; // sigma > 0

  void validate() const {
    if (mean.size() == 0) throw StateError("StandardizationStats: unfitted");
    if (!(scale > 0.0)) throw DegenerateDataError("StandardizationStats: sigma <= 0");
  }
};

/// Elementwise natural log. Any base would do (the difference is absorbed by
/// standardization); e is fixed for reproducibility.
inline SpectrumSet log_transform(const SpectrumSet& s) {
  require_scale(s.scale, Scale::raw, "log_transform");
  if ((s.matrix.array() <= 0.0).any())
    throw DomainError("log_transform: non-positive intensity");
  return SpectrumSet(s.grid, s.matrix.array().log().matrix(), s.inputs, Scale::log);
}

inline SpectrumSet exp_transform(const SpectrumSet& s) {
  require_scale(s.scale, Scale::log, "exp_transform");
  return SpectrumSet(s.grid, s.matrix.array().exp().matrix(), s.inputs, Scale::raw);
}

inline StandardizationStats fit_standardization(const SpectrumSet& log_set) {
  require_scale(log_set.scale, Scale::log, "fit_standardization");
  const int m = log_set.runs();
  if (m < 2) throw DomainError("fit_standardization: need at least 2 runs");
  StandardizationStats stats;
  stats.mean = log_set.matrix.rowwise().mean();
  const MatrixXd centered = log_set.matrix.colwise() - stats.mean;
  // Population standard deviation over every entry of the centered matrix.
  const double n_entries = static_cast<double>(centered.size());
  stats.scale = std::sqrt(centered.squaredNorm() / n_entries);
  if (!(stats.scale > 0.0))
    throw DegenerateDataError("fit_standardization: constant training data");
  return stats;
}

inline Spectrum standardize(const Spectrum& s, const StandardizationStats& stats) {
  require_scale(s.scale, Scale::log, "standardize");
  stats.validate();
  if (s.intensity.size() != stats.mean.size())
    throw DomainError("standardize: length mismatch");
  return Spectrum(s.grid, (s.intensity - stats.mean) / stats.scale,
                  Scale::standardized);
}

inline SpectrumSet standardize(const SpectrumSet& s, const StandardizationStats& stats) {
  require_scale(s.scale, Scale::log, "standardize");
  stats.validate();
  if (s.matrix.rows() != stats.mean.size())
    throw DomainError("standardize: length mismatch");
  return SpectrumSet(s.grid, (s.matrix.colwise() - stats.mean) / stats.scale,
                     s.inputs, Scale::standardized);
}

inline Spectrum destandardize(const Spectrum& s, const StandardizationStats& stats) {
  require_scale(s.scale, Scale::standardized, "destandardize");
  stats.validate();
  if (s.intensity.size() != stats.mean.size())
    throw DomainError("destandardize: length mismatch");
  return Spectrum(s.grid, (s.intensity * stats.scale) + stats.mean, Scale::log);
}

inline SpectrumSet destandardize(const SpectrumSet& s, const StandardizationStats& stats) {
  require_scale(s.scale, Scale::standardized, "destandardize");
  stats.validate();
  return SpectrumSet(s.grid, ((s.matrix * stats.scale).colwise() + stats.mean),
                     s.inputs, Scale::log);
}

/// Truncated SVD factors of the standardized training matrix
///   Xstd = U S V^T,  K = U S / sqrt(m),  W = sqrt(m) V^T,
/// so Xstd = K W. K^T K is diagonal (s_i^2 / m), which the projector
/// K~ = (K^T K)^{-1} K^T exploits. Signs are fixed so serialized bases are
/// reproducible: the largest-magnitude entry of each basis column is positive.
struct Basis {
  MatrixXd basis;               // K, n_eta x q
  MatrixXd weights;             // W, q x m
  VectorXd ktk_diag;            // diag(K^T K), length q
  VectorXd singular_values;     // all min(n_eta, m) values, descending
  VectorXd variance_explained;  // cumulative fractions, same length
  int rank = 0;                 // q
  GridPtr grid;

  void validate() const {
    if (rank < 1 || basis.cols() != rank || weights.rows() != rank ||
        ktk_diag.size() != rank)
      throw StateError("Basis: inconsistent truncation rank");
  }

  /// Explicit projector K~ (q x n_eta); the fast paths use ktk_diag instead.
  MatrixXd projector() const {
    return ktk_diag.cwiseInverse().asDiagonal() * basis.transpose();
  }
};

inline Basis build_basis(const SpectrumSet& standardized, int q) {
  require_scale(standardized.scale, Scale::standardized, "build_basis");
  const int n = standardized.bins();
  const int m = standardized.runs();
  if (q < 1 || q > std::min(n, m))
    throw DomainError("build_basis: q = " + std::to_string(q) +
                      " outside [1, min(n_eta, m) = " +
                      std::to_string(std::min(n, m)) + "]");
  Eigen::BDCSVD<MatrixXd> svd(standardized.matrix,
                              Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("build_basis: SVD did not converge");
  MatrixXd u = svd.matrixU();
  MatrixXd v = svd.matrixV();
  const VectorXd& s = svd.singularValues();

  for (Eigen::Index i = 0; i < u.cols(); ++i) {
    Eigen::Index peak;
    u.col(i).cwiseAbs().maxCoeff(&peak);
    if (u(peak, i) < 0.0) {
      u.col(i) = -u.col(i);
      v.col(i) = -v.col(i);
    }
  }

  Basis b;
  b.rank = q;
  b.grid = standardized.grid;
  const double sqrt_m = std::sqrt(static_cast<double>(m));
  b.basis = u.leftCols(q) * (s.head(q) / sqrt_m).asDiagonal();
  b.weights = sqrt_m * v.leftCols(q).transpose();
  b.ktk_diag = s.head(q).array().square() / static_cast<double>(m);
  b.singular_values = s;
  const double total = s.array().square().sum();
  b.variance_explained = VectorXd(s.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    acc += s[i] * s[i];
    b.variance_explained[i] = acc / total;
  }
  return b;
}

inline VectorXd project(const VectorXd& standardized_intensity, const Basis& b) {
  b.validate();
  if (standardized_intensity.size() != b.basis.rows())
    throw DomainError("project: spectrum length " +
                      std::to_string(standardized_intensity.size()) +
                      " != basis length " + std::to_string(b.basis.rows()));
  // w = (K^T K)^{-1} K^T y via the diagonal structure.
  return (b.basis.transpose() * standardized_intensity).cwiseQuotient(b.ktk_diag);
}

inline VectorXd project(const Spectrum& y, const Basis& b) {
  require_scale(y.scale, Scale::standardized, "project");
  return project(y.intensity, b);
}

/// K w on the standardized scale.
inline VectorXd reconstruct_standardized(const VectorXd& w, const Basis& b) {
  b.validate();
  if (w.size() != b.rank) throw DomainError("reconstruct: weight length != q");
  return b.basis * w;
}

/// destandardize(K w): the log-scale spectrum encoded by a weight vector.
inline Spectrum reconstruct(const VectorXd& w, const Basis& b,
                            const StandardizationStats& stats) {
  const VectorXd std_scale = reconstruct_standardized(w, b);
  return destandardize(Spectrum(b.grid, std_scale, Scale::standardized), stats);
}

}  // namespace specal
