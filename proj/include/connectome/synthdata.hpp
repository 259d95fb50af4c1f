#pragma once

// Synthetic multi-site cohorts on a voxel lattice with planted regions,
// planted group-discriminative connectivity edges and per-site effects.

#include "connectome/core.hpp"

#include <cstdint>
#include <vector>

namespace connectome::synthdata {

struct DiscriminativeEdge {
  int i = 0;
  int j = 0;
  double delta = 0.0; // signed covariance shift applied to cases
};

struct SiteProfile {
  double gain = 1.0;
  double offset = 0.0;
  double noise_sd = 0.0;
};

struct GroundTruth {
  Parcellation atlas;
  Matrix base_covariance;
  std::vector<DiscriminativeEdge> edges;
  std::vector<SiteProfile> sites;
  /// Voxels receiving the physiological noise sources (the "noise ROI").
  std::vector<int> physio_voxels;

  /// base_covariance with every edge delta added symmetrically.
  Matrix case_covariance() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct CohortConfig {
  int n_sites = 12;
  /// Per-site subject counts; when empty every site gets
  /// `subjects_per_site`.
  std::vector<int> site_sizes;
  int subjects_per_site = 30;
  double case_fraction = 0.5;
  int n_timepoints = 100;
  int k_regions = 20;
  LatticeDims lattice{6, 6, 6};

  double effect_size = 0.2;
  int n_discriminative_edges = 6;
  /// Rank of the random factor model behind the base covariance.
  int covariance_rank = 3;
  double covariance_loading_sd = 0.6;

  Range site_gain{0.8, 1.2};
  Range site_offset{0.0, 10.0};
  Range site_noise_sd{0.5, 1.5};

  bool drift = true;
  double drift_sd = 0.5;

  bool motion_nuisance = true;
  double motion_nuisance_scale = 1.0;
  double translation_step_sd = 0.02; // mm per timepoint
  double rotation_step_sd = 0.0005;  // rad per timepoint
  /// Cases move (1 + coupling) times more than controls. 0 keeps motion
  /// independent of diagnosis.
  double motion_diagnosis_coupling = 0.0;

  int n_physio_sources = 3;
  double physio_noise_scale = 4.0;
  double physio_voxel_fraction = 0.03;

  Range age{6.0, 40.0};
  double male_fraction = 0.8;
  double right_handed_fraction = 0.9;

  std::vector<int> resolved_site_sizes() const;
  int total_subjects() const;
  /// Throws ConfigError on invalid settings.
  void validate() const;
};

struct Cohort {
  std::vector<SubjectRecord> subjects;
  std::vector<Matrix> voxel_data;       // per subject n x p
  std::vector<Matrix> noise_regressors; // per subject n x n_physio_sources
  GroundTruth ground_truth;
  LatticeDims lattice_dims;
  std::uint64_t master_seed = 0;
  CohortConfig config;

  /// Index of a subject id in `subjects`; throws if absent.
  std::size_t position(int subject_id) const;
};

/// Voronoi cells (6-connected lattice geodesic distance) around k random
/// seed voxels. Every region is nonempty and face-connected.
Parcellation generate_atlas_phantom(const LatticeDims &dims, int k_regions, std::uint64_t seed);

GroundTruth generate_ground_truth(const CohortConfig &config, std::uint64_t master_seed);

/// Draws one subject's voxel series, motion and noise sources.
struct SubjectSample {
  Matrix voxels;
  Matrix motion;
  Matrix noise;
  Matrix latents;
};
SubjectSample generate_subject(const CohortConfig &config, const GroundTruth &truth,
                               const SubjectRecord &record, std::uint64_t master_seed);

Cohort generate_cohort(const CohortConfig &config, std::uint64_t master_seed, int jobs = 1);

} // namespace connectome::synthdata
