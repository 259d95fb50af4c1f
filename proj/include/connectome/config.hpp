#pragma once

// JSON configuration: cohort generation settings, pipeline options and grid
// expansion. Parse failures throw ConfigError naming the JSON path.

#include "connectome/classify.hpp"
#include "connectome/connectivity.hpp"
#include "connectome/evaluate.hpp"
#include "connectome/parcellation.hpp"
#include "connectome/synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace connectome::config {

using Json = nlohmann::json;

struct PipelineConfig {
  parcellation::AtlasMethod atlas_method = parcellation::AtlasMethod::ward;
  double smoothing_fwhm_mm = 0.0;
  double voxel_size_mm = 3.0;
  int n_regions = 84;
  /// Regions kept after clustering: min(n_rois, n_regions) largest.
  int n_rois = 84;
  connectivity::MatrixKind matrix_kind = connectivity::MatrixKind::tangent;
  classify::ClassifierKind classifier = classify::ClassifierKind::ridge;
  evaluate::Scheme scheme = evaluate::Scheme::intra_site;
  evaluate::Subsample subsample = evaluate::Subsample::all;
  std::uint64_t master_seed = 0;
  std::vector<double> grid = classify::default_grid();
  int inner_folds = 5;
  int n_folds = 10;
  double test_fraction = 0.2;
  bool regress_motion = true;
  bool group_confounds = true;
  int kmeans_n_init = 10;
  std::vector<double> learning_curve_fractions;
  int n_permutations = 1000;

  void validate() const;
  Json to_json() const;
  /// FNV-1a of the canonical JSON form.
  std::string hash() const;
  /// Categorical option levels recorded with every score row.
  std::map<std::string, std::string> option_levels() const;
};

/// Keys of PipelineConfig that vary in score tables.
const std::vector<std::string> &option_factor_names();

struct RunConfig {
  synthdata::CohortConfig cohort;
  PipelineConfig pipeline;
  std::uint64_t master_seed = 0;
};

synthdata::CohortConfig parse_cohort(const Json &j, const std::string &path = "$");
Json cohort_to_json(const synthdata::CohortConfig &c);
PipelineConfig parse_pipeline(const Json &j, const std::string &path = "$");
/// Top level: {"master_seed": N, "cohort": {...}, "pipeline": {...}}; all
/// sections optional.
RunConfig parse_run_config(const Json &j);
RunConfig load_run_config(const std::string &file);

/// {"key": [values...], ...} over PipelineConfig keys. Keys are expanded in
/// sorted order, values in listed order, so the result is deterministic.
std::vector<PipelineConfig> expand_grid(const PipelineConfig &base, const Json &grid);

Json load_json(const std::string &file);

std::string format_number(double v);

} // namespace connectome::config
