#include "connectome/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace connectome::signal {

namespace {

constexpr double kRankThreshold = 1e-10;

// Returns true when no voxel carries weight in more than one map.
bool maps_are_disjoint(const Matrix &maps) {
  for (Eigen::Index v = 0; v < maps.cols(); ++v) {
    int nonzero = 0;
    for (Eigen::Index r = 0; r < maps.rows(); ++r) {
      if (maps(r, v) != 0.0 && ++nonzero > 1) {
        return false;
      }
    }
  }
  return true;
}

} // namespace

Matrix extract_region_signals(const Matrix &voxels, const Matrix &maps) {
  if (voxels.cols() != maps.cols()) {
    throw Error("voxel count mismatch between series (" + std::to_string(voxels.cols()) +
                ") and maps (" + std::to_string(maps.cols()) + ")");
  }
  const Eigen::Index k = maps.rows();
  if (k < 1) {
    throw Error("atlas has no maps");
  }
  for (Eigen::Index r = 0; r < k; ++r) {
    if ((maps.row(r).array() == 0.0).all()) {
      throw Error("atlas map " + std::to_string(r) + " is empty (rank deficient)");
    }
  }

  if (maps_are_disjoint(maps)) {
    // Least squares decouples per map: u_j = Y w_j / ||w_j||^2, i.e. the
    // weighted average (plain mean for indicator maps).
    Matrix out = Matrix::Zero(voxels.rows(), k);
    for (Eigen::Index r = 0; r < k; ++r) {
      double norm2 = 0.0;
      for (Eigen::Index v = 0; v < maps.cols(); ++v) {
        const double w = maps(r, v);
        if (w != 0.0) {
          out.col(r) += w * voxels.col(v);
          norm2 += w * w;
        }
      }
      out.col(r) /= norm2;
    }
    return out;
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(maps.transpose());
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < k) {
    std::ostringstream msg;
    msg << "atlas maps are rank deficient (rank " << qr.rank() << " < " << k
        << "); dependent rows:";
    const auto &perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < k; ++i) {
      msg << ' ' << perm(i);
    }
    throw Error(msg.str());
  }
  return qr.solve(voxels.transpose()).transpose();
}

Matrix orthogonalize_confounds(const Matrix &x, const Matrix &confounds) {
  if (x.rows() != confounds.rows()) {
    throw Error("row mismatch: signals have " + std::to_string(x.rows()) +
                " timepoints, confounds have " + std::to_string(confounds.rows()));
  }
  if (confounds.cols() == 0) {
    return x;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(confounds);
  qr.setThreshold(kRankThreshold);
  const Eigen::Index rank = qr.rank();
  if (rank == 0) {
    return x;
  }
  const Matrix q = qr.householderQ() * Matrix::Identity(x.rows(), rank);
  return x - q * (q.transpose() * x);
}

Standardized detrend_standardize(const Matrix &x) {
  const Eigen::Index n = x.rows();
  if (n < 3) {
    throw Error("detrend_standardize needs at least 3 timepoints");
  }
  Vector t = Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1));
  t.array() -= t.mean();
  const double tt = t.squaredNorm();

  Standardized out;
  out.data.resize(n, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto col = x.col(c);
    const double slope = t.dot(col) / tt;
    Vector resid = col.array() - col.mean();
    resid -= slope * t;
    const double sd = std::sqrt(resid.squaredNorm() / static_cast<double>(n - 1));
    const double scale = col.cwiseAbs().maxCoeff();
    if (sd == 0.0 || sd <= 1e-10 * scale) {
      out.data.col(c).setZero();
      out.constant_columns.push_back(static_cast<int>(c));
    } else {
      out.data.col(c) = resid / sd;
    }
  }
  return out;
}

CompCor compcor(const Matrix &voxels, double variance_fraction, int n_components) {
  const Eigen::Index n = voxels.rows();
  const Eigen::Index p = voxels.cols();
  if (n < 2 || p < 1) {
    throw Error("compcor needs at least 2 timepoints and 1 voxel");
  }
  // Small slack so 0.02 * 250 selects 5 voxels despite rounding.
  const auto n_select = static_cast<Eigen::Index>(
      std::ceil(variance_fraction * static_cast<double>(p) - 1e-9));
  if (n_select < n_components) {
    throw Error("compcor: " + std::to_string(n_select) + " high-variance voxels (" +
                std::to_string(variance_fraction) + " of " + std::to_string(p) +
                ") cannot yield " + std::to_string(n_components) + " components");
  }
  if (n_components > n) {
    throw Error("compcor: more components requested than timepoints");
  }
  const Matrix centered = voxels.rowwise() - voxels.colwise().mean();
  const Vector variance = centered.colwise().squaredNorm() / static_cast<double>(n);
  if (variance.maxCoeff() <= 0.0) {
    throw Error("compcor: voxel data has no temporal variance");
  }

  std::vector<int> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return variance(a) > variance(b); });
  CompCor out;
  out.voxels.assign(order.begin(), order.begin() + n_select);
  std::sort(out.voxels.begin(), out.voxels.end());

  Matrix sub(n, n_select);
  for (Eigen::Index i = 0; i < n_select; ++i) {
    sub.col(i) = centered.col(out.voxels[static_cast<std::size_t>(i)]);
  }
  Eigen::JacobiSVD<Matrix> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.components = svd.matrixU().leftCols(n_components);
  out.singular_values = svd.singularValues().head(n_components);
  const Matrix loadings = svd.matrixV().leftCols(n_components);
  for (int c = 0; c < n_components; ++c) {
    Eigen::Index arg = 0;
    loadings.col(c).cwiseAbs().maxCoeff(&arg);
    if (loadings(arg, c) < 0.0) {
      out.components.col(c) *= -1.0;
    }
  }
  return out;
}

Matrix friston24(const Matrix &motion) {
  if (motion.cols() != 6) {
    throw Error("friston24 expects 6 motion columns, got " + std::to_string(motion.cols()));
  }
  const Eigen::Index n = motion.rows();
  Matrix lag = Matrix::Zero(n, 6);
  if (n > 1) {
    lag.bottomRows(n - 1) = motion.topRows(n - 1);
  }
  Matrix out(n, 24);
  out.leftCols(6) = motion;
  out.middleCols(6, 6) = motion.array().square().matrix();
  out.middleCols(12, 6) = lag;
  out.rightCols(6) = lag.array().square().matrix();
  return out;
}

Matrix drift_terms(int n) {
  Matrix out(n, 2);
  out.col(0).setOnes();
  out.col(1) = Vector::LinSpaced(n, -1.0, 1.0);
  return out;
}

ConfoundMatrix build_confounds(const Matrix &voxels, const Matrix &motion,
                               const Matrix &noise_rois, bool include_motion) {
  const auto n = static_cast<int>(voxels.rows());
  ConfoundMatrix out;
  std::vector<Matrix> blocks;
  blocks.push_back(drift_terms(n));
  out.labels = {"drift_constant", "drift_linear"};

  const CompCor cc = compcor(voxels);
  blocks.push_back(cc.components);
  for (Eigen::Index c = 0; c < cc.components.cols(); ++c) {
    out.labels.push_back("compcor_" + std::to_string(c));
  }
  if (include_motion && motion.cols() > 0) {
    if (motion.rows() != n) {
      throw Error("motion series length does not match voxel series");
    }
    blocks.push_back(friston24(motion));
    for (int c = 0; c < 24; ++c) {
      out.labels.push_back("motion_" + std::to_string(c));
    }
  }
  if (noise_rois.cols() > 0) {
    if (noise_rois.rows() != n) {
      throw Error("noise-ROI series length does not match voxel series");
    }
    blocks.push_back(noise_rois);
    for (Eigen::Index c = 0; c < noise_rois.cols(); ++c) {
      out.labels.push_back("noise_roi_" + std::to_string(c));
    }
  }
  Eigen::Index total = 0;
  for (const auto &b : blocks) {
    total += b.cols();
  }
  out.data.resize(n, total);
  Eigen::Index at = 0;
  for (const auto &b : blocks) {
    out.data.middleCols(at, b.cols()) = b;
    at += b.cols();
  }
  if (!out.data.allFinite()) {
    throw Error("confound matrix has non-finite entries");
  }
  return out;
}

Matrix clean_region_signals(const Matrix &voxels, const Matrix &maps, const Matrix &confounds) {
  const Matrix regions = extract_region_signals(voxels, maps);
  return detrend_standardize(orthogonalize_confounds(regions, confounds)).data;
}

namespace {

struct SignalSummary {
  std::array<double, kDescriptorsPerSignal> values{};
  bool degenerate = false;
};

SignalSummary describe(const Vector &x) {
  SignalSummary out;
  const Eigen::Index len = x.size();
  const double mean = x.mean();
  const Vector xc = x.array() - mean;
  const double m2 = xc.squaredNorm() / static_cast<double>(len);
  const double tiny = 1e-12 * std::max(1.0, std::abs(mean));
  if (m2 <= tiny * tiny) {
    out.degenerate = true;
    return out; // all zeros, mean - median included
  }

  // AR(1) on the centred series.
  const Eigen::Index l1 = len - 1;
  const auto cur1 = xc.tail(l1);
  const auto prev1 = xc.head(l1);
  const double a1 = cur1.dot(prev1) / prev1.squaredNorm();
  const double var1 = (cur1 - a1 * prev1).squaredNorm() / static_cast<double>(l1);

  // AR(2).
  const Eigen::Index l2 = len - 2;
  Matrix design(l2, 2);
  design.col(0) = xc.segment(1, l2);
  design.col(1) = xc.head(l2);
  const Vector target = xc.tail(l2);
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  double b1 = 0.0;
  double b2 = 0.0;
  double var2 = 0.0;
  if (qr.rank() == 2) {
    const Vector coef = qr.solve(target);
    b1 = coef(0);
    b2 = coef(1);
    var2 = (target - design * coef).squaredNorm() / static_cast<double>(l2);
  } else {
    out.degenerate = true;
  }

  const double m3 = xc.array().cube().mean();
  const double m4 = xc.array().square().square().mean();
  const double skew = m3 / std::pow(m2, 1.5);
  const double kurt = m4 / (m2 * m2) - 3.0;

  const double lo = x.minCoeff();
  const double hi = x.maxCoeff();
  std::array<int, 16> bins{};
  for (Eigen::Index i = 0; i < len; ++i) {
    int b = hi > lo ? static_cast<int>((x(i) - lo) / (hi - lo) * 16.0) : 0;
    bins[static_cast<std::size_t>(std::clamp(b, 0, 15))]++;
  }
  double entropy = 0.0;
  for (int c : bins) {
    if (c > 0) {
      const double q = static_cast<double>(c) / static_cast<double>(len);
      entropy -= q * std::log(q);
    }
  }

  std::vector<double> sorted(x.data(), x.data() + len);
  std::sort(sorted.begin(), sorted.end());
  const auto half = static_cast<std::size_t>(len / 2);
  const double median =
      (len % 2 == 1) ? sorted[half] : 0.5 * (sorted[half - 1] + sorted[half]);

  std::array<double, 4> fourier{};
  for (int f = 1; f <= 4; ++f) {
    double re = 0.0;
    double im = 0.0;
    for (Eigen::Index t = 0; t < len; ++t) {
      const double phase = 2.0 * M_PI * f * static_cast<double>(t) / static_cast<double>(len);
      re += x(t) * std::cos(phase);
      im -= x(t) * std::sin(phase);
    }
    fourier[static_cast<std::size_t>(f - 1)] = std::hypot(re, im) / static_cast<double>(len);
  }

  out.values = {a1,   var1,          b1,           b2,         var2,       kurt,       skew,
                entropy, mean - median, std::sqrt(m2), fourier[0], fourier[1], fourier[2], fourier[3]};
  return out;
}

const std::array<const char *, kDescriptorsPerSignal> kDescriptorNames = {
    "ar1_coef", "ar1_resid_var", "ar2_coef1",  "ar2_coef2",  "ar2_resid_var",
    "kurtosis", "skewness",      "entropy",    "mean_minus_median", "std",
    "fourier_1", "fourier_2",    "fourier_3",  "fourier_4"};

} // namespace

Descriptors extract_temporal_descriptors(const Matrix &channels) {
  const Eigen::Index n = channels.rows();
  if (n < kMinDescriptorLength) {
    throw Error("temporal descriptors need at least " + std::to_string(kMinDescriptorLength) +
                " samples, got " + std::to_string(n));
  }
  Descriptors out;
  out.values.resize(channels.cols() * 2 * kDescriptorsPerSignal);
  Eigen::Index at = 0;
  for (Eigen::Index c = 0; c < channels.cols(); ++c) {
    const Vector raw = channels.col(c);
    const Vector gradient = raw.tail(n - 1) - raw.head(n - 1);
    const std::array<std::pair<const char *, const Vector *>, 2> signals = {
        std::pair{"raw", &raw}, std::pair{"gradient", &gradient}};
    for (const auto &[kind, series] : signals) {
      const SignalSummary s = describe(*series);
      const std::string prefix = "ch" + std::to_string(c) + ":" + kind;
      if (s.degenerate) {
        out.degenerate.push_back(prefix);
      }
      for (int d = 0; d < kDescriptorsPerSignal; ++d) {
        out.values(at++) = s.values[static_cast<std::size_t>(d)];
        out.names.push_back(prefix + ":" + kDescriptorNames[static_cast<std::size_t>(d)]);
      }
    }
  }
  return out;
}

Descriptors motion_descriptors(const Matrix &motion) {
  if (motion.cols() != 6) {
    throw Error("motion descriptors expect 6 columns, got " + std::to_string(motion.cols()));
  }
  Matrix channels(motion.rows(), 2);
  channels.col(0) = motion.leftCols(3).rowwise().mean();
  channels.col(1) = motion.rightCols(3).rowwise().mean();
  return extract_temporal_descriptors(channels);
}

} // namespace connectome::signal
