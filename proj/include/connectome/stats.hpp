#pragma once

// Statistics over score tables.

#include "connectome/core.hpp"

#include <span>
#include <string>
#include <vector>

namespace connectome::stats {

/// Long-form table: one categorical level per factor per row.
struct FactorTable {
  std::vector<std::string> factor_names;
  std::vector<std::vector<std::string>> levels; // rows x factors
  std::vector<double> response;
};

struct EffectEstimate {
  std::string factor;
  std::string level;
  double coefficient = 0.0; // deviation from the grand mean
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct AnovaResult {
  double grand_mean = 0.0;
  int residual_dof = 0;
  double residual_sd = 0.0;
  std::vector<EffectEstimate> effects; // factor order, then sorted level order
};

/// Main-effects linear model with sum coding; 95% t intervals.
/// Throws when levels are aliased or a factor has fewer than 2 levels.
AnovaResult anova_effects(const FactorTable &table);

struct WilcoxonResult {
  double p_value = 1.0;
  double statistic = 0.0; // sum of ranks of positive differences b - a
  int n_nonzero = 0;
  bool exact = false;
  bool all_zero = false;
};

/// Two-sided paired signed-rank test; zero differences are dropped.
/// Exact null distribution for up to 25 non-zero pairs.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

/// Bonferroni-Holm adjusted p-values, in input order.
std::vector<double> holm_correct(std::span<const double> p_values);

/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> values);

double spearman(std::span<const double> x, std::span<const double> y);

/// Kolmogorov-Smirnov distance between the sample and U(0, 1).
double ks_uniform_statistic(std::span<const double> sample);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1); 0 for fewer than 2 values.
double sample_sd(std::span<const double> values);

} // namespace connectome::stats
