#pragma once

// Region time-series extraction and confound cleaning, plus the temporal
// descriptors used for the movement-only control.

#include "connectome/core.hpp"

#include <string>
#include <vector>

namespace connectome::signal {

/// Least-squares region signals U minimising ||Y - U V|| for voxel series
/// Y (n x p) and maps V (k x p). Throws when V is rank deficient.
Matrix extract_region_signals(const Matrix &voxels, const Matrix &maps);

/// X - Q Q^T X where Q is an orthonormal basis of span(C). Dependent
/// confound columns are dropped from Q.
Matrix orthogonalize_confounds(const Matrix &x, const Matrix &confounds);

struct Standardized {
  Matrix data;
  std::vector<int> constant_columns; // zeroed; no variance left after detrending
};

/// Removes the least-squares line from every column, then divides by the
/// sample standard deviation (n - 1).
Standardized detrend_standardize(const Matrix &x);

struct CompCor {
  Matrix components; // n x n_components, unit-norm time courses
  Vector singular_values;
  std::vector<int> voxels; // selected high-variance voxels, ascending
};

/// Principal time courses of the `variance_fraction` highest-variance
/// voxels. Components are sign-fixed so the largest-magnitude voxel loading
/// is positive.
CompCor compcor(const Matrix &voxels, double variance_fraction = 0.02, int n_components = 5);

/// [m, m^2, m_lag1, m_lag1^2] with the lag zero-padded at t = 0.
Matrix friston24(const Matrix &motion);

/// Intercept and linear trend columns.
Matrix drift_terms(int n);

struct ConfoundMatrix {
  Matrix data;
  std::vector<std::string> labels;
};

/// Assembles the region-level confound set: drift terms, CompCor of the
/// voxel data, the 24 motion regressors and noise-ROI signals. Either of
/// `motion` or `noise_rois` may be empty (0 columns).
ConfoundMatrix build_confounds(const Matrix &voxels, const Matrix &motion,
                               const Matrix &noise_rois, bool include_motion = true);

/// extract -> orthogonalize against confounds -> detrend/standardize.
Matrix clean_region_signals(const Matrix &voxels, const Matrix &maps, const Matrix &confounds);

// Temporal descriptors. Each signal contributes, in order:
//   ar1_coef, ar1_resid_var, ar2_coef1, ar2_coef2, ar2_resid_var,
//   kurtosis (excess), skewness, entropy (16 bins, nats), mean_minus_median,
//   std, fourier_1 .. fourier_4 (DFT amplitudes / n, DC excluded).
// Channels are laid out channel-major, and within a channel the raw series
// block comes before its first difference.
inline constexpr int kDescriptorsPerSignal = 14;
inline constexpr int kMinDescriptorLength = 16;

struct Descriptors {
  Vector values;
  std::vector<std::string> names;
  /// "<channel>:<raw|gradient>" entries whose AR fit or moments degenerated
  /// (constant signal); those slots are zero.
  std::vector<std::string> degenerate;
};

Descriptors extract_temporal_descriptors(const Matrix &channels);

/// Collapses motion (n x 6) to mean translation and mean rotation channels
/// and describes both: 2 channels x 2 signals x 14 = 56 values.
Descriptors motion_descriptors(const Matrix &motion);

} // namespace connectome::signal
