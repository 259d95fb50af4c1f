#include "connectome/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace connectome::synthdata {

namespace {

constexpr std::uint64_t kTruthStream = 1;
constexpr std::uint64_t kAtlasStream = 2;
constexpr std::uint64_t kSubjectStream = 3;
constexpr std::uint64_t kPhenotypeStream = 4;
constexpr std::uint64_t kSiteLabelStream = 5;

// Rotations are converted to millimetres on a 50 mm sphere before being
// mixed into the nuisance time course.
constexpr double kHeadRadiusMm = 50.0;

double uniform(Rng &rng, const Range &r) {
  if (r.hi <= r.lo) {
    return r.lo;
  }
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

Matrix gaussian_matrix(Rng &rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix out(rows, cols);
  // Row-major fill order keeps draws independent of Eigen storage order.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = normal(rng);
    }
  }
  return out;
}

Matrix cholesky_factor(const Matrix &cov, const char *what) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ConfigError(std::string(what) + " is not symmetric positive definite");
  }
  return llt.matrixL();
}

} // namespace

Matrix GroundTruth::case_covariance() const {
  Matrix out = base_covariance;
  for (const auto &e : edges) {
    out(e.i, e.j) += e.delta;
    out(e.j, e.i) += e.delta;
  }
  return out;
}

std::vector<int> CohortConfig::resolved_site_sizes() const {
  if (!site_sizes.empty()) {
    return site_sizes;
  }
  return std::vector<int>(static_cast<std::size_t>(std::max(n_sites, 0)), subjects_per_site);
}

int CohortConfig::total_subjects() const {
  const auto sizes = resolved_site_sizes();
  return std::accumulate(sizes.begin(), sizes.end(), 0);
}

void CohortConfig::validate() const {
  if (!site_sizes.empty() && static_cast<int>(site_sizes.size()) != n_sites) {
    throw ConfigError("site_sizes length must equal n_sites");
  }
  if (n_sites < 1) {
    throw ConfigError("n_sites must be >= 1");
  }
  for (int s : resolved_site_sizes()) {
    if (s < 1) {
      throw ConfigError("every site needs at least one subject");
    }
  }
  if (!(case_fraction > 0.0 && case_fraction < 1.0)) {
    throw ConfigError("case_fraction must lie in (0, 1)");
  }
  if (n_timepoints < 2) {
    throw ConfigError("n_timepoints must be >= 2");
  }
  if (lattice.voxel_count() == 0 || lattice.nx < 0 || lattice.ny < 0 || lattice.nz < 0) {
    throw ConfigError("lattice has zero volume");
  }
  if (k_regions < 2 || static_cast<std::size_t>(k_regions) > lattice.voxel_count()) {
    throw ConfigError("k_regions must lie in [2, voxel count]");
  }
  const int max_edges = k_regions * (k_regions - 1) / 2;
  if (n_discriminative_edges < 0 || n_discriminative_edges > max_edges) {
    throw ConfigError("n_discriminative_edges exceeds the number of region pairs");
  }
  if (covariance_rank < 0) {
    throw ConfigError("covariance_rank must be >= 0");
  }
  if (site_noise_sd.lo < 0.0 || drift_sd < 0.0 || physio_noise_scale < 0.0) {
    throw ConfigError("noise scales must be non-negative");
  }
  if (n_physio_sources < 0) {
    throw ConfigError("n_physio_sources must be >= 0");
  }
  if (motion_diagnosis_coupling < -1.0) {
    throw ConfigError("motion_diagnosis_coupling must be >= -1");
  }
}

std::size_t Cohort::position(int subject_id) const {
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (subjects[i].subject_id == subject_id) {
      return i;
    }
  }
  throw Error("unknown subject id " + std::to_string(subject_id));
}

Parcellation generate_atlas_phantom(const LatticeDims &dims, int k_regions, std::uint64_t seed) {
  const std::size_t p = dims.voxel_count();
  if (p == 0 || dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) {
    throw ConfigError("lattice has zero volume");
  }
  if (k_regions < 2) {
    throw ConfigError("k_regions must be >= 2");
  }
  if (static_cast<std::size_t>(k_regions) > p) {
    throw ConfigError("k_regions (" + std::to_string(k_regions) + ") exceeds voxel count (" +
                      std::to_string(p) + ")");
  }
  std::vector<int> order(p);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Parcellation out;
  out.dims = dims;
  out.n_regions = k_regions;
  out.labels.assign(p, -1);
  std::deque<int> queue;
  for (int r = 0; r < k_regions; ++r) {
    out.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;
    queue.push_back(order[static_cast<std::size_t>(r)]);
  }
  // Multi-source BFS: a voxel joins the cell of whichever frontier reaches
  // it first, so its BFS parent shares its label and cells stay connected.
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    const auto c = dims.coords(v);
    const int steps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const auto &s : steps) {
      const int x = c[0] + s[0];
      const int y = c[1] + s[1];
      const int z = c[2] + s[2];
      if (x < 0 || y < 0 || z < 0 || x >= dims.nx || y >= dims.ny || z >= dims.nz) {
        continue;
      }
      const int u = dims.index(x, y, z);
      if (out.labels[static_cast<std::size_t>(u)] < 0) {
        out.labels[static_cast<std::size_t>(u)] = out.labels[static_cast<std::size_t>(v)];
        queue.push_back(u);
      }
    }
  }
  return out;
}

GroundTruth generate_ground_truth(const CohortConfig &config, std::uint64_t master_seed) {
  config.validate();
  GroundTruth truth;
  truth.atlas = generate_atlas_phantom(config.lattice, config.k_regions,
                                       derive_seed(master_seed, kAtlasStream));

  Rng rng(derive_seed(master_seed, kTruthStream));
  const int k = config.k_regions;
  Matrix cov = Matrix::Identity(k, k);
  if (config.covariance_rank > 0) {
    const Matrix loadings =
        gaussian_matrix(rng, k, config.covariance_rank, config.covariance_loading_sd);
    cov += loadings * loadings.transpose();
  }
  const Vector inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  truth.base_covariance = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();

  std::vector<std::pair<int, int>> pairs;
  for (int i = 1; i < k; ++i) {
    for (int j = 0; j < i; ++j) {
      pairs.emplace_back(i, j);
    }
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  for (int e = 0; e < config.n_discriminative_edges; ++e) {
    const auto [i, j] = pairs[static_cast<std::size_t>(e)];
    const double sign = (e % 2 == 0) ? 1.0 : -1.0;
    truth.edges.push_back({i, j, sign * config.effect_size});
  }
  cholesky_factor(truth.base_covariance, "base covariance");
  cholesky_factor(truth.case_covariance(), "perturbed (case) covariance");

  for (int s = 0; s < config.n_sites; ++s) {
    SiteProfile site;
    site.gain = uniform(rng, config.site_gain);
    site.offset = uniform(rng, config.site_offset);
    site.noise_sd = uniform(rng, config.site_noise_sd);
    truth.sites.push_back(site);
  }

  if (config.n_physio_sources > 0) {
    const std::size_t p = config.lattice.voxel_count();
    const auto count = std::min<std::size_t>(
        p, std::max<std::size_t>(
               5, static_cast<std::size_t>(std::ceil(config.physio_voxel_fraction * p))));
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    truth.physio_voxels.assign(order.begin(), order.begin() + static_cast<long>(count));
    std::sort(truth.physio_voxels.begin(), truth.physio_voxels.end());
  }
  return truth;
}

SubjectSample generate_subject(const CohortConfig &config, const GroundTruth &truth,
                               const SubjectRecord &record, std::uint64_t master_seed) {
  Rng rng(derive_seed(derive_seed(master_seed, kSubjectStream),
                      static_cast<std::uint64_t>(record.subject_id)));
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = config.n_timepoints;
  const int k = config.k_regions;
  const auto p = static_cast<Eigen::Index>(config.lattice.voxel_count());
  const SiteProfile &site = truth.sites.at(static_cast<std::size_t>(record.site_id));

  SubjectSample out;
  const Matrix group_cov =
      record.diagnosis == kCase ? truth.case_covariance() : truth.base_covariance;
  const Matrix chol = cholesky_factor(group_cov, "group covariance");
  out.latents = gaussian_matrix(rng, n, k) * chol.transpose();

  // Motion: random walk in translations (mm) and rotations (rad).
  const double motion_scale =
      record.diagnosis == kCase ? 1.0 + config.motion_diagnosis_coupling : 1.0;
  out.motion = Matrix::Zero(n, 6);
  for (int t = 1; t < n; ++t) {
    for (int c = 0; c < 6; ++c) {
      const double sd = (c < 3 ? config.translation_step_sd : config.rotation_step_sd);
      out.motion(t, c) = out.motion(t - 1, c) + motion_scale * sd * normal(rng);
    }
  }

  out.voxels.resize(n, p);
  for (Eigen::Index v = 0; v < p; ++v) {
    const int region = truth.atlas.labels[static_cast<std::size_t>(v)];
    out.voxels.col(v) = site.gain * out.latents.col(region);
  }
  out.voxels.array() += site.offset;
  const Matrix white = gaussian_matrix(rng, n, p, 1.0);
  out.voxels += site.noise_sd * white;

  if (config.drift) {
    const Matrix slopes = gaussian_matrix(rng, 1, p, config.drift_sd);
    const Vector ramp = Vector::LinSpaced(n, 0.0, 1.0);
    out.voxels += ramp * slopes.row(0);
  }

  if (config.motion_nuisance) {
    Vector weights = gaussian_matrix(rng, 6, 1).col(0);
    weights /= std::max(weights.norm(), 1e-12);
    Matrix scaled = out.motion;
    scaled.rightCols(3) *= kHeadRadiusMm;
    const Vector course = scaled * weights;
    Vector pattern(p);
    const double half = std::max(1.0, 0.5 * (config.lattice.nx - 1));
    for (Eigen::Index v = 0; v < p; ++v) {
      const auto c = config.lattice.coords(static_cast<int>(v));
      pattern(v) = (c[0] - 0.5 * (config.lattice.nx - 1)) / half;
    }
    out.voxels += config.motion_nuisance_scale * course * pattern.transpose();
  }

  const int sources = config.n_physio_sources;
  out.noise = gaussian_matrix(rng, n, sources);
  if (sources > 0) {
    const auto nv = static_cast<Eigen::Index>(truth.physio_voxels.size());
    const Matrix mixing = gaussian_matrix(rng, sources, nv);
    const Matrix injected = config.physio_noise_scale * out.noise * mixing;
    for (Eigen::Index i = 0; i < nv; ++i) {
      out.voxels.col(truth.physio_voxels[static_cast<std::size_t>(i)]) += injected.col(i);
    }
  }
  return out;
}

Cohort generate_cohort(const CohortConfig &config, std::uint64_t master_seed, int jobs) {
  config.validate();
  Cohort cohort;
  cohort.config = config;
  cohort.master_seed = master_seed;
  cohort.lattice_dims = config.lattice;
  cohort.ground_truth = generate_ground_truth(config, master_seed);

  const auto sizes = config.resolved_site_sizes();
  int next_id = 1;
  for (int s = 0; s < config.n_sites; ++s) {
    const int n_site = sizes[static_cast<std::size_t>(s)];
    int n_cases = static_cast<int>(std::lround(config.case_fraction * n_site));
    if (n_site >= 2) {
      n_cases = std::clamp(n_cases, 1, n_site - 1);
    }
    std::vector<int> diagnosis(static_cast<std::size_t>(n_site), kControl);
    std::fill(diagnosis.begin(), diagnosis.begin() + n_cases, kCase);
    Rng site_rng(derive_seed(derive_seed(master_seed, kSiteLabelStream),
                             static_cast<std::uint64_t>(s)));
    std::shuffle(diagnosis.begin(), diagnosis.end(), site_rng);
    for (int j = 0; j < n_site; ++j) {
      SubjectRecord rec;
      rec.subject_id = next_id++;
      rec.site_id = s;
      rec.diagnosis = diagnosis[static_cast<std::size_t>(j)];
      Rng pheno(derive_seed(derive_seed(master_seed, kPhenotypeStream),
                            static_cast<std::uint64_t>(rec.subject_id)));
      rec.age = uniform(pheno, config.age);
      rec.sex = std::bernoulli_distribution(config.male_fraction)(pheno) ? 1 : 0;
      rec.handedness = std::bernoulli_distribution(config.right_handed_fraction)(pheno) ? 1 : 0;
      cohort.subjects.push_back(std::move(rec));
    }
  }

  const std::size_t total = cohort.subjects.size();
  cohort.voxel_data.resize(total);
  cohort.noise_regressors.resize(total);
  parallel_for(total, jobs, [&](std::size_t i) {
    auto sample = generate_subject(config, cohort.ground_truth, cohort.subjects[i], master_seed);
    cohort.voxel_data[i] = std::move(sample.voxels);
    cohort.noise_regressors[i] = std::move(sample.noise);
    cohort.subjects[i].motion = std::move(sample.motion);
  });
  return cohort;
}

} // namespace connectome::synthdata
