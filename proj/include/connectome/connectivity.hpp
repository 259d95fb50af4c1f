#pragma once

// Shrunk covariance estimation, connectivity parameterizations and
// group-level nuisance regression.

#include "connectome/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace connectome::connectivity {

enum class MatrixKind { correlation, partial, tangent };

std::string to_string(MatrixKind kind);
MatrixKind parse_matrix_kind(const std::string &name);

struct CovarianceMatrix {
  Matrix sigma;
  double shrinkage = 0.0;
};

/// Maximum-likelihood covariance (divides by n) of column-centred data.
Matrix empirical_covariance(const Matrix &series);

/// (1 - a) S + a tr(S)/k I with the Ledoit-Wolf closed-form a, clipped to
/// [0, 1].
CovarianceMatrix ledoit_wolf(const Matrix &series);

// Matrix functions on symmetric matrices through the eigendecomposition.
// Eigenvalues are floored at 1e-12 where a positive spectrum is required.
Matrix spd_sqrt(const Matrix &m);
Matrix spd_inv_sqrt(const Matrix &m);
Matrix spd_log(const Matrix &m);
Matrix sym_exp(const Matrix &m);

struct TangentReference {
  Matrix reference; // geometric mean of the training covariances
  Matrix whitener;  // reference^(-1/2)
  int iterations = 0;
  double residual = 0.0; // Frobenius norm of the mean whitened log
  std::vector<int> fit_subjects;
};

/// Karcher mean by fixed-point iteration, started at the arithmetic mean.
TangentReference fit_tangent_reference(std::span<const Matrix> sigmas, double tolerance = 1e-7,
                                       int max_iterations = 50);

int feature_count(int k, MatrixKind kind);
/// Region pair (i >= j) behind a feature index.
std::pair<int, int> feature_edge(int index, int k, MatrixKind kind);

/// Vectorised connectivity. Correlation and partial correlation use the
/// strict lower triangle; tangent uses the lower triangle with the
/// diagonal, off-diagonal entries scaled by sqrt(2).
Vector parameterize(const Matrix &sigma, MatrixKind kind,
                    const TangentReference *reference = nullptr);

/// Site one-hot (first site as baseline), age and sex columns. `sites`
/// fixes the site column order; when empty the sorted distinct sites of
/// `records` are used.
Matrix group_covariates(std::span<const SubjectRecord> records, std::vector<int> sites = {});

struct GroupConfoundModel {
  Matrix coefficients;           // (1 + kept covariates) x features
  std::vector<int> kept_columns; // covariate columns retained in the fit
  std::vector<int> fit_subjects;
  std::vector<std::string> warnings;

  /// Residuals of `features` under the fitted coefficients.
  Matrix apply(const Matrix &features, const Matrix &covariates) const;
};

/// Per-feature OLS with intercept on the rows flagged in `fit_mask`.
/// Dependent covariate columns (including site columns absent from the fit
/// rows) are dropped with a warning.
GroupConfoundModel fit_group_confounds(const Matrix &features, const Matrix &covariates,
                                       const std::vector<bool> &fit_mask,
                                       std::span<const int> subject_ids = {});

/// Convenience: fit on `fit_mask` rows, return residuals for every row.
Matrix regress_out_group_confounds(const Matrix &features, const Matrix &covariates,
                                   const std::vector<bool> &fit_mask);

} // namespace connectome::connectivity
