#include "connectome/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace connectome::connectivity {

namespace {

constexpr double kEigenFloor = 1e-12;

template <typename F> Matrix spectral_map(const Matrix &m, F &&f) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) {
    throw Error("eigendecomposition failed");
  }
  const Vector mapped = eig.eigenvalues().unaryExpr(f);
  return eig.eigenvectors() * mapped.asDiagonal() * eig.eigenvectors().transpose();
}

void require_spd(const Matrix &m, const char *what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(std::string(what) + " must be a nonempty square matrix");
  }
  if (!m.allFinite()) {
    throw Error(std::string(what) + " has non-finite entries");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(std::string(what) + " is not positive definite");
  }
}

} // namespace

std::string to_string(MatrixKind kind) {
  switch (kind) {
  case MatrixKind::correlation:
    return "correlation";
  case MatrixKind::partial:
    return "partial";
  case MatrixKind::tangent:
    return "tangent";
  }
  return "unknown";
}

MatrixKind parse_matrix_kind(const std::string &name) {
  if (name == "correlation") return MatrixKind::correlation;
  if (name == "partial") return MatrixKind::partial;
  if (name == "tangent") return MatrixKind::tangent;
  throw ConfigError("unknown matrix kind '" + name + "' (expected correlation, partial or tangent)");
}

Matrix empirical_covariance(const Matrix &series) {
  const Matrix centred = series.rowwise() - series.colwise().mean();
  return centred.transpose() * centred / static_cast<double>(series.rows());
}

CovarianceMatrix ledoit_wolf(const Matrix &series) {
  const Eigen::Index n = series.rows();
  const Eigen::Index k = series.cols();
  if (n < 2) {
    throw Error("ledoit_wolf needs at least 2 samples");
  }
  if (k < 1) {
    throw Error("ledoit_wolf needs at least 1 variable");
  }
  const Matrix x = series.rowwise() - series.colwise().mean();
  const Matrix s = x.transpose() * x / static_cast<double>(n);
  const double mu = s.trace() / static_cast<double>(k);

  // delta: ||S - mu I||_F^2 / k.
  // beta:  sum_i ||x_i x_i^T - S||_F^2 / (k n^2)
  //      = (sum_{a,b} [x^2^T x^2]_{ab} / n - ||S||_F^2) / (k n)
  const Matrix x2 = x.array().square().matrix();
  const double beta_raw = (x2.transpose() * x2).sum() / static_cast<double>(n);
  const double s_norm2 = s.squaredNorm();
  double beta = (beta_raw - s_norm2) / static_cast<double>(k * n);
  const double delta = (s_norm2 - 2.0 * mu * s.trace() + static_cast<double>(k) * mu * mu) /
                       static_cast<double>(k);
  beta = std::min(beta, delta);
  const double alpha = (delta <= 0.0 || beta <= 0.0) ? 0.0 : std::clamp(beta / delta, 0.0, 1.0);

  CovarianceMatrix out;
  out.shrinkage = alpha;
  out.sigma = (1.0 - alpha) * s;
  out.sigma.diagonal().array() += alpha * mu;
  return out;
}

Matrix spd_sqrt(const Matrix &m) {
  return spectral_map(m, [](double v) { return std::sqrt(std::max(v, kEigenFloor)); });
}

Matrix spd_inv_sqrt(const Matrix &m) {
  return spectral_map(m, [](double v) { return 1.0 / std::sqrt(std::max(v, kEigenFloor)); });
}

Matrix spd_log(const Matrix &m) {
  return spectral_map(m, [](double v) { return std::log(std::max(v, kEigenFloor)); });
}

Matrix sym_exp(const Matrix &m) {
  return spectral_map(m, [](double v) { return std::exp(v); });
}

TangentReference fit_tangent_reference(std::span<const Matrix> sigmas, double tolerance,
                                       int max_iterations) {
  if (sigmas.empty()) {
    throw Error("tangent reference needs at least one covariance");
  }
  const Eigen::Index k = sigmas.front().rows();
  Matrix mean = Matrix::Zero(k, k);
  for (const auto &s : sigmas) {
    if (s.rows() != k) {
      throw Error("tangent reference inputs differ in size");
    }
    require_spd(s, "covariance");
    mean += s;
  }
  mean /= static_cast<double>(sigmas.size());

  TangentReference out;
  Matrix g = mean;
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Matrix g_sqrt = spd_sqrt(g);
    const Matrix g_inv_sqrt = spd_inv_sqrt(g);
    Matrix mean_log = Matrix::Zero(k, k);
    for (const auto &s : sigmas) {
      mean_log += spd_log(g_inv_sqrt * s * g_inv_sqrt);
    }
    mean_log /= static_cast<double>(sigmas.size());
    out.residual = mean_log.norm();
    out.iterations = iter + 1;
    if (out.residual < tolerance) {
      break;
    }
    g = g_sqrt * sym_exp(mean_log) * g_sqrt;
    g = 0.5 * (g + g.transpose());
  }
  out.reference = g;
  out.whitener = spd_inv_sqrt(g);
  return out;
}

int feature_count(int k, MatrixKind kind) {
  return kind == MatrixKind::tangent ? k * (k + 1) / 2 : k * (k - 1) / 2;
}

std::pair<int, int> feature_edge(int index, int k, MatrixKind kind) {
  int at = 0;
  const bool diag = kind == MatrixKind::tangent;
  for (int i = 0; i < k; ++i) {
    const int row = diag ? i + 1 : i;
    if (index < at + row) {
      return {i, index - at};
    }
    at += row;
  }
  throw Error("feature index out of range");
}

Vector parameterize(const Matrix &sigma, MatrixKind kind, const TangentReference *reference) {
  const auto k = static_cast<int>(sigma.rows());
  if (sigma.cols() != k) {
    throw Error("covariance must be square");
  }
  Vector out(feature_count(k, kind));
  int at = 0;
  switch (kind) {
  case MatrixKind::correlation: {
    const Vector inv_sd = sigma.diagonal().cwiseSqrt().cwiseInverse();
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < i; ++j) {
        out(at++) = sigma(i, j) * inv_sd(i) * inv_sd(j);
      }
    }
    break;
  }
  case MatrixKind::partial: {
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw Error("partial correlation needs a positive definite covariance");
    }
    const Matrix precision = llt.solve(Matrix::Identity(k, k));
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < i; ++j) {
        out(at++) = -precision(i, j) / std::sqrt(precision(i, i) * precision(j, j));
      }
    }
    break;
  }
  case MatrixKind::tangent: {
    if (reference == nullptr) {
      throw Error("tangent embedding requires a reference fitted on training subjects");
    }
    if (reference->whitener.rows() != k) {
      throw Error("tangent reference size does not match covariance");
    }
    const Matrix &w = reference->whitener;
    const Matrix t = spd_log(w * sigma * w.transpose());
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j <= i; ++j) {
        out(at++) = (i == j) ? t(i, i) : std::sqrt(2.0) * t(i, j);
      }
    }
    break;
  }
  }
  return out;
}

Matrix group_covariates(std::span<const SubjectRecord> records, std::vector<int> sites) {
  if (sites.empty()) {
    std::set<int> distinct;
    for (const auto &r : records) {
      distinct.insert(r.site_id);
    }
    sites.assign(distinct.begin(), distinct.end());
  }
  const auto n_site_cols = static_cast<Eigen::Index>(sites.empty() ? 0 : sites.size() - 1);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(records.size()), n_site_cols + 2);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t s = 1; s < sites.size(); ++s) {
      if (records[i].site_id == sites[s]) {
        out(row, static_cast<Eigen::Index>(s - 1)) = 1.0;
      }
    }
    out(row, n_site_cols) = records[i].age;
    out(row, n_site_cols + 1) = records[i].sex;
  }
  return out;
}

Matrix GroupConfoundModel::apply(const Matrix &features, const Matrix &covariates) const {
  Matrix design(features.rows(), static_cast<Eigen::Index>(kept_columns.size()) + 1);
  design.col(0).setOnes();
  for (std::size_t c = 0; c < kept_columns.size(); ++c) {
    design.col(static_cast<Eigen::Index>(c) + 1) = covariates.col(kept_columns[c]);
  }
  return features - design * coefficients;
}

GroupConfoundModel fit_group_confounds(const Matrix &features, const Matrix &covariates,
                                       const std::vector<bool> &fit_mask,
                                       std::span<const int> subject_ids) {
  const Eigen::Index n = features.rows();
  if (covariates.rows() != n || static_cast<Eigen::Index>(fit_mask.size()) != n) {
    throw Error("group confound regression: row counts disagree");
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (fit_mask[static_cast<std::size_t>(i)]) {
      rows.push_back(i);
    }
  }
  if (rows.empty()) {
    throw Error("group confound regression: no fit subjects");
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  Matrix design(m, covariates.cols() + 1);
  Matrix target(m, features.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    design(r, 0) = 1.0;
    design.row(r).tail(covariates.cols()) = covariates.row(rows[static_cast<std::size_t>(r)]);
    target.row(r) = features.row(rows[static_cast<std::size_t>(r)]);
  }

  GroupConfoundModel model;
  // Greedy rank-revealing pass in column order keeps the intercept and
  // drops later columns that add nothing.
  std::vector<Eigen::Index> kept{0};
  for (Eigen::Index c = 1; c < design.cols(); ++c) {
    Matrix trial(m, static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      trial.col(static_cast<Eigen::Index>(i)) = design.col(kept[i]);
    }
    trial.col(trial.cols() - 1) = design.col(c);
    Eigen::ColPivHouseholderQR<Matrix> qr(trial);
    qr.setThreshold(1e-10);
    if (qr.rank() == trial.cols()) {
      kept.push_back(c);
    } else {
      model.warnings.push_back("covariate column " + std::to_string(c - 1) +
                               " is dependent on the fit subjects and was dropped");
    }
  }
  Matrix reduced(m, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    reduced.col(static_cast<Eigen::Index>(i)) = design.col(kept[i]);
    if (i > 0) {
      model.kept_columns.push_back(static_cast<int>(kept[i] - 1));
    }
  }
  model.coefficients = reduced.colPivHouseholderQr().solve(target);
  model.fit_subjects.assign(subject_ids.begin(), subject_ids.end());
  if (!model.fit_subjects.empty()) {
    std::vector<int> used;
    for (Eigen::Index r : rows) {
      used.push_back(model.fit_subjects.at(static_cast<std::size_t>(r)));
    }
    model.fit_subjects = std::move(used);
  }
  return model;
}

Matrix regress_out_group_confounds(const Matrix &features, const Matrix &covariates,
                                   const std::vector<bool> &fit_mask) {
  return fit_group_confounds(features, covariates, fit_mask).apply(features, covariates);
}

} // namespace connectome::connectivity
