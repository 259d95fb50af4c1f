#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace connectome {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Runtime failure inside the pipeline (bad data, numerical breakdown, ...).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Diagnosis labels are carried as plain integers throughout.
inline constexpr int kCase = 1;
inline constexpr int kControl = -1;

/// 3-D box lattice standing in for voxel space. Voxel index is
/// x + nx * (y + ny * z).
struct LatticeDims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
           static_cast<std::size_t>(nz);
  }
  int index(int x, int y, int z) const { return x + nx * (y + ny * z); }
  std::array<int, 3> coords(int idx) const {
    return {idx % nx, (idx / nx) % ny, idx / (nx * ny)};
  }
  bool operator==(const LatticeDims &) const = default;
};

/// Hard assignment of voxels to regions. Label -1 marks background voxels.
struct Parcellation {
  std::vector<int> labels;
  LatticeDims dims;
  int n_regions = 0;
  /// Subjects whose data produced this atlas (leakage provenance).
  std::vector<int> fit_subjects;

  std::vector<int> region_sizes() const;
  std::vector<int> region_voxels(int region) const;
};

/// Phenotype row of one subject.
struct SubjectRecord {
  int subject_id = 0;
  int site_id = 0;
  int diagnosis = kControl;
  double age = 0.0;
  int sex = 1;        // 1 male, 0 female
  int handedness = 1; // 1 right, 0 left
  Matrix motion;      // n x 6: 3 translations (mm) then 3 rotations (rad)
};

/// Mixes (master, stream) into an independent 64-bit seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// FNV-1a, used for config and cohort fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// True when every id in `used` is in `train` and none is in `test`.
bool fitted_on_train_only(std::span<const int> used, std::span<const int> train,
                          std::span<const int> test);

/// Runs fn(0..count-1) over `jobs` worker threads. Each index is claimed
/// exactly once; the first exception thrown is rethrown after all workers
/// join. Callers store results by index so output order never depends on
/// scheduling.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)> &fn);

} // namespace connectome
