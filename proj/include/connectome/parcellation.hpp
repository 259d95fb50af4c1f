#pragma once

// Data-driven region estimation: smoothing, K-Means, spatially constrained
// Ward, largest-ROI selection and DICE consensus atlases.

#include "connectome/core.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace connectome::parcellation {

/// Sparse symmetric voxel adjacency.
struct Adjacency {
  std::vector<std::vector<int>> neighbors;

  std::size_t size() const { return neighbors.size(); }
  /// Throws unless symmetric and free of self-edges.
  void validate() const;
};

/// 6-connectivity on the lattice.
Adjacency lattice_adjacency(const LatticeDims &dims);
Adjacency complete_adjacency(int p);

/// Number of connected components; optionally writes the component id of
/// every vertex.
int connected_components(const Adjacency &adj, std::vector<int> *component = nullptr);

/// Normalised 1-D Gaussian, truncated at ceil(4 sigma).
Vector gaussian_kernel_1d(double sigma);

/// Separable 3-D Gaussian smoothing of every timepoint (row) of an n x p
/// series, edge-replicated. sigma = fwhm / (2 sqrt(2 ln 2)) / voxel_size.
Matrix gaussian_smooth(const Matrix &series, const LatticeDims &dims, double fwhm_mm,
                       double voxel_size_mm);

/// Voxel profiles (p x m): PCA scores of voxels treated as samples over the
/// time dimension, computed from the summed voxel Gram matrix sum_s Y_s^T Y_s.
/// m = min(total timepoints, max_components, p).
Matrix voxel_profiles_from_gram(const Matrix &gram, long total_timepoints,
                                int max_components = 100);

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
  /// Inertia after each Lloyd assignment of the winning restart.
  std::vector<double> inertia_trace;
};

/// Lloyd's algorithm with k-means++ seeding; keeps the best of n_init
/// restarts by inertia. Empty clusters are re-seeded at the point farthest
/// from its centroid.
KMeansResult kmeans(const Matrix &points, int k, std::uint64_t seed, int n_init = 10,
                    int max_iter = 300);

Parcellation kmeans_parcellate(const Matrix &profiles, const LatticeDims &dims, int k,
                               std::uint64_t seed, int n_init = 10);

struct WardMerge {
  int a = 0; // cluster ids: < p are voxels, p + i is the i-th merge
  int b = 0;
  double cost = 0.0; // increase in within-cluster sum of squares
  int size = 0;
};

struct WardResult {
  std::vector<int> labels;
  std::vector<WardMerge> merges;
};

/// Agglomerative Ward clustering restricted to merges between adjacent
/// clusters. Stops at exactly k clusters.
WardResult ward_cluster(const Matrix &profiles, int k, const Adjacency &adjacency);

Parcellation ward_parcellate(const Matrix &profiles, const LatticeDims &dims, int k,
                             const Adjacency &adjacency);

/// Relabels so that regions are numbered by their smallest voxel index.
std::vector<int> canonical_labels(std::span<const int> labels);

struct AtlasMaps {
  Matrix maps;                 // k x p indicator rows
  std::vector<int> region_ids; // source region id of every row, ascending
};

/// Indicator maps of every non-background region.
AtlasMaps indicator_maps(const Parcellation &atlas);

/// Keeps the m largest regions by voxel count (ties: lower id first).
AtlasMaps select_largest_rois(const Parcellation &atlas, int m = 84);

/// 2|A n B| / (|A| + |B|) over voxel index sets.
double dice(std::span<const int> a, std::span<const int> b);

struct Consensus {
  Parcellation atlas;
  /// Region id in the first atlas that seeded each consensus region.
  std::vector<int> source_regions;
  bool empty = false;
};

/// Greedy matching from the first atlas: a region survives when its best
/// DICE partner in every other atlas reaches the threshold; the consensus
/// region is the voxelwise majority over matched regions.
Consensus consensus_atlas(std::span<const Parcellation> atlases, double dice_threshold = 0.9);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

enum class AtlasMethod { kmeans, ward, ica, msdl };
enum class Split { train, test };

std::string to_string(AtlasMethod method);
AtlasMethod parse_atlas_method(const std::string &name);

struct AtlasOptions {
  AtlasMethod method = AtlasMethod::ward;
  int n_regions = 84;
  double fwhm_mm = 0.0;
  double voxel_size_mm = 3.0;
  std::uint64_t seed = 0;
  int n_init = 10;
  int pca_components = 100;
};

/// Smoothed, detrended and standardized series used for clustering.
Matrix prepare_for_atlas(const Matrix &voxels, const LatticeDims &dims, const AtlasOptions &opts);

/// One subject's contribution to atlas estimation: Y^T Y of its prepared
/// series.
struct AtlasInput {
  int subject_id = 0;
  Split split = Split::train;
  const Matrix *gram = nullptr;
  long n_timepoints = 0;
};

/// Estimates an atlas from training subjects only. Any input tagged
/// Split::test is refused. ICA and MSDL are recognised but unimplemented.
Parcellation fit_atlas(std::span<const AtlasInput> inputs, const LatticeDims &dims,
                       const AtlasOptions &opts);

} // namespace connectome::parcellation
