#include "connectome/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <set>

namespace connectome::stats {

AnovaResult anova_effects(const FactorTable &table) {
  const auto n = static_cast<Eigen::Index>(table.response.size());
  const std::size_t n_factors = table.factor_names.size();
  if (n == 0) {
    throw Error("anova: empty score table");
  }
  if (static_cast<Eigen::Index>(table.levels.size()) != n) {
    throw Error("anova: level rows and responses differ in length");
  }

  std::vector<std::vector<std::string>> level_sets(n_factors);
  for (std::size_t f = 0; f < n_factors; ++f) {
    std::set<std::string> seen;
    for (const auto &row : table.levels) {
      if (row.size() != n_factors) {
        throw Error("anova: row has wrong number of factors");
      }
      seen.insert(row[f]);
    }
    if (seen.size() < 2) {
      throw Error("anova: factor '" + table.factor_names[f] + "' has fewer than 2 levels");
    }
    level_sets[f].assign(seen.begin(), seen.end());
  }

  // Columns: intercept, then (L - 1) sum-coded columns per factor.
  std::vector<std::string> col_names{"intercept"};
  std::vector<Eigen::Index> factor_offset(n_factors);
  Eigen::Index p = 1;
  for (std::size_t f = 0; f < n_factors; ++f) {
    factor_offset[f] = p;
    for (std::size_t l = 0; l + 1 < level_sets[f].size(); ++l) {
      col_names.push_back(table.factor_names[f] + "=" + level_sets[f][l]);
    }
    p += static_cast<Eigen::Index>(level_sets[f].size()) - 1;
  }
  Matrix x = Matrix::Zero(n, p);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto &row = table.levels[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    y(i) = table.response[static_cast<std::size_t>(i)];
    for (std::size_t f = 0; f < n_factors; ++f) {
      const auto &levels = level_sets[f];
      const auto l = std::lower_bound(levels.begin(), levels.end(), row[f]) - levels.begin();
      const auto last = static_cast<long>(levels.size()) - 1;
      if (l == last) {
        x.row(i).segment(factor_offset[f], last).setConstant(-1.0);
      } else {
        x(i, factor_offset[f] + l) = 1.0;
      }
    }
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string aliased;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index c = 0; c < p; ++c) {
      Matrix trial(n, static_cast<Eigen::Index>(kept.size()) + 1);
      for (std::size_t k = 0; k < kept.size(); ++k) {
        trial.col(static_cast<Eigen::Index>(k)) = x.col(kept[k]);
      }
      trial.col(trial.cols() - 1) = x.col(c);
      Eigen::ColPivHouseholderQR<Matrix> t(trial);
      t.setThreshold(1e-10);
      if (t.rank() == trial.cols()) {
        kept.push_back(c);
      } else {
        aliased += (aliased.empty() ? "" : ", ") + col_names[static_cast<std::size_t>(c)];
      }
    }
    throw Error("anova: aliased factor levels: " + aliased);
  }
  if (n <= p) {
    throw Error("anova: no residual degrees of freedom");
  }

  const Vector beta = qr.solve(y);
  const Vector resid = y - x * beta;
  AnovaResult out;
  out.residual_dof = static_cast<int>(n - p);
  const double s2 = resid.squaredNorm() / static_cast<double>(out.residual_dof);
  out.residual_sd = std::sqrt(s2);
  out.grand_mean = beta(0);
  const Matrix xtx_inv = (x.transpose() * x).ldlt().solve(Matrix::Identity(p, p));
  const Matrix cov = s2 * xtx_inv;
  const boost::math::students_t t_dist(out.residual_dof);
  const double t_crit = boost::math::quantile(t_dist, 0.975);

  for (std::size_t f = 0; f < n_factors; ++f) {
    const auto width = static_cast<Eigen::Index>(level_sets[f].size()) - 1;
    const auto off = factor_offset[f];
    for (Eigen::Index l = 0; l <= width; ++l) {
      EffectEstimate e;
      e.factor = table.factor_names[f];
      e.level = level_sets[f][static_cast<std::size_t>(l)];
      double var = 0.0;
      if (l < width) {
        e.coefficient = beta(off + l);
        var = cov(off + l, off + l);
      } else {
        e.coefficient = -beta.segment(off, width).sum();
        var = cov.block(off, off, width, width).sum();
      }
      const double half = t_crit * std::sqrt(std::max(var, 0.0));
      e.ci_low = e.coefficient - half;
      e.ci_high = e.coefficient + half;
      out.effects.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) {
      ++j;
    }
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      ranks[order[k]] = r;
    }
    i = j + 1;
  }
  return ranks;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("wilcoxon: samples must be paired");
  }
  if (a.size() < 6) {
    throw Error("wilcoxon: needs at least 6 pairs");
  }
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    if (d != 0.0) {
      diff.push_back(d);
    }
  }
  WilcoxonResult out;
  out.n_nonzero = static_cast<int>(diff.size());
  if (diff.empty()) {
    out.all_zero = true;
    out.p_value = 1.0;
    return out;
  }
  std::vector<double> mags(diff.size());
  std::transform(diff.begin(), diff.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(mags);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (diff[i] > 0.0) {
      w_plus += ranks[i];
    }
  }
  out.statistic = w_plus;
  const std::size_t n = diff.size();

  if (n <= 25) {
    out.exact = true;
    // Tied ranks are halves; doubling makes every rank an integer.
    std::vector<int> doubled(n);
    int total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    for (int r : doubled) {
      for (int s = total; s >= r; --s) {
        count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - r)];
      }
    }
    const double patterns = std::ldexp(1.0, static_cast<int>(n));
    const int w2 = static_cast<int>(std::lround(2.0 * w_plus));
    double lower = 0.0;
    double upper = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w2) lower += count[static_cast<std::size_t>(s)];
      if (s >= w2) upper += count[static_cast<std::size_t>(s)];
    }
    out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
    return out;
  }

  const double nn = static_cast<double>(n);
  double tie_term = 0.0;
  std::vector<double> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) {
      ++j;
    }
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double mu = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) {
    out.p_value = 1.0;
    return out;
  }
  const double z = (w_plus - mu) / std::sqrt(var);
  const boost::math::normal_distribution<> unit;
  out.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(unit, std::abs(z))));
  return out;
}

std::vector<double> holm_correct(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double v = std::min(1.0, static_cast<double>(m - i) * p_values[order[i]]);
    running = std::max(running, v);
    adjusted[order[i]] = running;
  }
  return adjusted;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error("spearman: needs two equal-length samples of size >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

double ks_uniform_statistic(std::span<const double> sample) {
  if (sample.empty()) {
    throw Error("ks: empty sample");
  }
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double u = std::clamp(s[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  return d;
}

double mean(std::span<const double> values) {
  if (values.empty()) {
    return 0.0;
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) {
    return 0.0;
  }
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) {
    ss += (v - m) * (v - m);
  }
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

} // namespace connectome::stats
