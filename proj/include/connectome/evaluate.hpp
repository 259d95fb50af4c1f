#pragma once

// Cross-validation plans, scoring, chance level, subsample filters and
// top-decile summaries.

#include "connectome/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace connectome::evaluate {

enum class Scheme { inter_site, intra_site };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string &name);

inline constexpr int kMinInterSiteSites = 10;

struct Fold {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};

struct FoldPlan {
  std::vector<Fold> folds;
  Scheme scheme = Scheme::intra_site;
  std::uint64_t seed = 0;
};

/// inter_site: one fold per site among the 10 largest (ties: lower site id),
/// each testing on that whole site. intra_site: 10 stratified shuffle splits
/// holding out `test_fraction` of every (site, diagnosis) cell.
FoldPlan make_folds(std::span<const SubjectRecord> records, Scheme scheme, std::uint64_t seed,
                    int n_folds = 10, double test_fraction = 0.2);

struct Scores {
  double accuracy = 0.0;
  double specificity = 0.0; // correct controls / controls
  double sensitivity = 0.0; // correct cases / cases
  int n_cases = 0;
  int n_controls = 0;
  bool specificity_defined = true;
  bool sensitivity_defined = true;
};

Scores score(std::span<const int> predictions, std::span<const int> truth);

/// Chance level of a label-distribution-only predictor: the larger of the
/// majority-vote accuracy and the mean accuracy of `n_draws` random
/// predictors drawing labels with the observed class frequencies.
double dummy_chance(std::span<const int> labels, std::uint64_t seed, int n_draws = 1000);

/// Declarative subsample predicates over SubjectRecord.
enum class Subsample {
  all,
  largest_sites,
  right_handed_males,
  right_handed_males_9_18,
  right_handed_males_9_18_3_sites
};

std::string to_string(Subsample subsample);
Subsample parse_subsample(const std::string &name);

struct SubsamplePredicate {
  int min_site_size = 0;
  bool right_handed_only = false;
  bool males_only = false;
  std::optional<std::pair<double, double>> age_range;
  std::optional<int> largest_sites;
};

SubsamplePredicate predicate_for(Subsample subsample);

/// Records passing the predicate, in input order.
std::vector<SubjectRecord> filter_subsample(std::span<const SubjectRecord> records,
                                            const SubsamplePredicate &predicate);

/// Mean accuracy of one pipeline plus its option levels.
struct PipelineScore {
  std::map<std::string, std::string> options;
  double mean_accuracy = 0.0;
};

struct DecileSummary {
  std::string factor;
  std::string level;
  int n_pipelines = 0;
  int n_kept = 0;
  double mean = 0.0;
  double sd = 0.0;
  bool fallback = false; // fewer than 10 pipelines: best one only
};

/// Per factor level, the ceil(10%) best pipelines by mean accuracy.
std::vector<DecileSummary> top_decile(std::span<const PipelineScore> pipelines,
                                      const std::vector<std::string> &factors);

} // namespace connectome::evaluate
