#pragma once

// End-to-end prediction pipeline over a cohort: atlas, region signals,
// connectivity features, group nuisance regression, classifier, scoring.
// Every train-derived artifact carries the subject ids it was fitted on and
// is audited against the fold's test ids before a score is accepted.

#include "connectome/classify.hpp"
#include "connectome/config.hpp"
#include "connectome/connectivity.hpp"
#include "connectome/evaluate.hpp"
#include "connectome/parcellation.hpp"
#include "connectome/synthdata.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace connectome::pipeline {

/// Per-subject intermediates shared by every pipeline run on one cohort.
/// Entries are computed once on first use; safe to share across threads.
class Workspace {
public:
  explicit Workspace(const synthdata::Cohort &cohort);

  const synthdata::Cohort &cohort() const { return cohort_; }

  /// Confound basis of one subject (drift, CompCor, noise ROIs and,
  /// optionally, Friston-24).
  const Matrix &confounds(std::size_t position, bool include_motion);

  /// Y^T Y of the smoothed, detrended and standardized voxel series.
  const Matrix &atlas_gram(std::size_t position, double fwhm_mm, double voxel_size_mm);

private:
  struct Entry {
    std::once_flag once;
    Matrix value;
  };
  Entry &slot(const std::string &key);

  const synthdata::Cohort &cohort_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Entry>> cache_;
};

struct ScoreRecord {
  std::string config_hash;
  std::map<std::string, std::string> options;
  std::string scheme;
  std::string subsample;
  int fold = 0;
  evaluate::Scores scores;
  int n_train = 0;
  int n_test = 0;
  double hyperparameter = 0.0;
};

struct AuditEntry {
  std::string artifact;
  bool passed = false;
};

struct FoldResult {
  int fold = 0;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  Parcellation atlas;
  parcellation::AtlasMaps rois;
  connectivity::TangentReference tangent;
  connectivity::GroupConfoundModel group_model;
  classify::Selection selection;
  /// Feature rows for train_ids followed by test_ids.
  Matrix features;
  std::vector<int> predictions;
  std::vector<int> truth;
  evaluate::Scores scores;
  std::vector<AuditEntry> audit;
  bool leakage_free = false;
  std::vector<std::string> warnings;
  std::map<std::string, double> stage_seconds;
};

/// Records of the cohort that pass the configured subsample.
std::vector<SubjectRecord> subsample_records(const synthdata::Cohort &cohort,
                                             const config::PipelineConfig &config);

/// Runs one fold. Throws Error if the leakage audit fails.
FoldResult run_fold(Workspace &ws, const config::PipelineConfig &config, const evaluate::Fold &fold,
                    int fold_index);

struct CvResult {
  evaluate::FoldPlan plan;
  std::vector<FoldResult> folds;
  std::vector<ScoreRecord> records;
  double mean_accuracy = 0.0;
  double sd_accuracy = 0.0;
};

CvResult cross_validate(Workspace &ws, const config::PipelineConfig &config, int jobs = 1);

struct CurvePoint {
  double fraction = 0.0;
  int fold = 0;
  int n_train = 0;
  double accuracy = 0.0;
  std::vector<int> train_ids;
};

struct CurveSummary {
  double fraction = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
  int n_folds = 0;
};

struct LearningCurve {
  std::vector<CurvePoint> points; // fraction-major, then fold
  std::vector<CurveSummary> summary;
};

/// Per fold, nested stratified training subsets of the fold's training
/// pool are scored against the fold's fixed test set.
LearningCurve learning_curve(Workspace &ws, const config::PipelineConfig &config,
                             const std::vector<double> &fractions, int jobs = 1);

std::vector<CurveSummary> summarize_curve(const std::vector<CurvePoint> &points);

/// Diagnosis prediction from head-motion descriptors alone, with a
/// squared-hinge l2 SVC under the configured fold plan.
struct MovementResult {
  std::vector<evaluate::Scores> folds;
  double mean_accuracy = 0.0;
  int descriptor_length = 0;
};

MovementResult movement_prediction(const synthdata::Cohort &cohort,
                                   const config::PipelineConfig &config, int jobs = 1);

struct BiomarkerEdge {
  int feature = 0;
  int region_a = 0; // consensus region ids, region_a >= region_b
  int region_b = 0;
  double weight = 0.0;
  double p_value = 1.0;
  std::string direction; // "case" when stronger in cases, "control" otherwise
};

struct BiomarkerReport {
  parcellation::Consensus consensus;
  std::vector<BiomarkerEdge> edges; // sorted by p ascending, then |weight| descending
  double hyperparameter = 0.0;
  int n_permutations = 0;
  int n_subjects = 0;
};

/// Consensus atlas across the fold atlases, features for every subsample
/// subject on that atlas, and permutation p-values of the classifier
/// weights. An empty consensus returns with consensus.empty set and no edges.
BiomarkerReport compute_biomarkers(Workspace &ws, const config::PipelineConfig &config,
                                   std::span<const Parcellation> fold_atlases,
                                   int n_permutations, int jobs = 1,
                                   bool permute_labels_first = false);

} // namespace connectome::pipeline
