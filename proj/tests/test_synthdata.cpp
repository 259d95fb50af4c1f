#include "connectome/parcellation.hpp"
#include "connectome/synthdata.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace connectome;
using namespace connectome::synthdata;

namespace {

bool region_face_connected(const Parcellation &atlas, int region) {
  const auto adj = parcellation::lattice_adjacency(atlas.dims);
  const auto voxels = atlas.region_voxels(region);
  if (voxels.empty()) return false;
  std::set<int> seen{voxels.front()};
  std::vector<int> stack{voxels.front()};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u : adj.neighbors[static_cast<std::size_t>(v)]) {
      if (atlas.labels[static_cast<std::size_t>(u)] == region && seen.insert(u).second) {
        stack.push_back(u);
      }
    }
  }
  return seen.size() == voxels.size();
}

CohortConfig small_config() {
  CohortConfig c;
  c.n_sites = 3;
  c.subjects_per_site = 10;
  c.k_regions = 8;
  c.lattice = {5, 5, 4};
  c.n_timepoints = 60;
  c.n_discriminative_edges = 3;
  return c;
}

} // namespace

TEST_SUITE("synthdata") {

TEST_CASE("phantom regions cover the lattice and are face-connected") {
  const LatticeDims dims{7, 6, 5};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto atlas = generate_atlas_phantom(dims, 12, seed);
    CHECK(atlas.n_regions == 12);
    CHECK(atlas.labels.size() == dims.voxel_count());
    const auto sizes = atlas.region_sizes();
    int total = 0;
    for (int r = 0; r < 12; ++r) {
      CHECK(sizes[static_cast<std::size_t>(r)] > 0);
      CHECK(region_face_connected(atlas, r));
      total += sizes[static_cast<std::size_t>(r)];
    }
    CHECK(total == static_cast<int>(dims.voxel_count()));
  }
}

TEST_CASE("phantom is deterministic and validates its arguments") {
  const LatticeDims dims{4, 4, 4};
  CHECK(generate_atlas_phantom(dims, 5, 9).labels == generate_atlas_phantom(dims, 5, 9).labels);
  CHECK_THROWS_AS(generate_atlas_phantom(dims, 1, 0), ConfigError);
  CHECK_THROWS_AS(generate_atlas_phantom(dims, 65, 0), ConfigError);
  CHECK_THROWS_AS(generate_atlas_phantom(LatticeDims{0, 4, 4}, 2, 0), ConfigError);
  const auto singletons = generate_atlas_phantom(dims, 64, 3);
  for (int s : singletons.region_sizes()) CHECK(s == 1);
}

TEST_CASE("config validation") {
  CohortConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.case_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.site_sizes = {5, 5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.k_regions = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.n_discriminative_edges = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.site_sizes = {4, 6, 9};
  CHECK(c.total_subjects() == 19);
}

TEST_CASE("cohort has the declared counts and per-site class balance") {
  CohortConfig c = small_config();
  c.site_sizes = {10, 7, 12};
  c.case_fraction = 0.4;
  const auto cohort = generate_cohort(c, 11);
  REQUIRE(cohort.subjects.size() == 29);
  CHECK(cohort.voxel_data.size() == 29);
  std::map<int, std::pair<int, int>> per_site;
  std::set<int> ids;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto &r = cohort.subjects[i];
    ids.insert(r.subject_id);
    auto &cell = per_site[r.site_id];
    (r.diagnosis == kCase ? cell.first : cell.second)++;
    CHECK(cohort.voxel_data[i].rows() == 60);
    CHECK(cohort.voxel_data[i].cols() == 100);
    CHECK(r.motion.rows() == 60);
    CHECK(r.motion.cols() == 6);
    CHECK(r.age >= c.age.lo);
    CHECK(r.age <= c.age.hi);
  }
  CHECK(ids.size() == 29);
  CHECK(per_site.size() == 3);
  const std::vector<int> sizes{10, 7, 12};
  int s = 0;
  for (const auto &[site, cell] : per_site) {
    const int n = sizes[static_cast<std::size_t>(s++)];
    CHECK(cell.first == static_cast<int>(std::lround(0.4 * n)));
    CHECK(cell.first + cell.second == n);
  }
}

TEST_CASE("cohort generation is deterministic and seed-sensitive") {
  const auto c = small_config();
  const auto a = generate_cohort(c, 5);
  const auto b = generate_cohort(c, 5, 2);
  const auto other = generate_cohort(c, 6);
  REQUIRE(a.voxel_data.size() == b.voxel_data.size());
  for (std::size_t i = 0; i < a.voxel_data.size(); ++i) {
    CHECK(a.voxel_data[i] == b.voxel_data[i]);
    CHECK(a.subjects[i].motion == b.subjects[i].motion);
  }
  CHECK(a.voxel_data[0] != other.voxel_data[0]);
}

TEST_CASE("planted edges shift the case covariance and both groups are SPD") {
  CohortConfig c = small_config();
  c.effect_size = 0.25;
  const auto truth = generate_ground_truth(c, 3);
  REQUIRE(truth.edges.size() == 3);
  const Matrix diff = truth.case_covariance() - truth.base_covariance;
  double planted = 0.0;
  for (const auto &e : truth.edges) {
    CHECK(std::abs(e.delta) == doctest::Approx(0.25));
    CHECK(diff(e.i, e.j) == doctest::Approx(e.delta));
    CHECK(diff(e.j, e.i) == doctest::Approx(e.delta));
    planted += 2.0 * e.delta * e.delta;
  }
  CHECK(diff.squaredNorm() == doctest::Approx(planted));
  CHECK(Eigen::LLT<Matrix>(truth.base_covariance).info() == Eigen::Success);
  CHECK(Eigen::LLT<Matrix>(truth.case_covariance()).info() == Eigen::Success);
  CHECK(truth.base_covariance.diagonal().isOnes(1e-12));
}

TEST_CASE("latent region signals follow the group covariance") {
  CohortConfig c = small_config();
  c.n_timepoints = 400;
  c.effect_size = 0.3;
  const auto truth = generate_ground_truth(c, 21);
  const int k = c.k_regions;
  Matrix case_cov = Matrix::Zero(k, k);
  const int draws = 60;
  for (int s = 0; s < draws; ++s) {
    SubjectRecord r;
    r.subject_id = 1000 + s;
    r.site_id = 0;
    r.diagnosis = kCase;
    const auto sample = generate_subject(c, truth, r, 21);
    const Matrix centred = sample.latents.rowwise() - sample.latents.colwise().mean();
    case_cov += centred.transpose() * centred / static_cast<double>(c.n_timepoints);
  }
  case_cov /= draws;
  CHECK((case_cov - truth.case_covariance()).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("motion coupling makes cases move more") {
  CohortConfig c = small_config();
  c.subjects_per_site = 30;
  c.motion_diagnosis_coupling = 1.0;
  const auto cohort = generate_cohort(c, 8);
  double case_step = 0.0;
  double control_step = 0.0;
  int n_case = 0;
  int n_control = 0;
  for (const auto &r : cohort.subjects) {
    const Matrix steps = r.motion.bottomRows(r.motion.rows() - 1) - r.motion.topRows(r.motion.rows() - 1);
    const double m = steps.leftCols(3).cwiseAbs().mean();
    if (r.diagnosis == kCase) {
      case_step += m;
      ++n_case;
    } else {
      control_step += m;
      ++n_control;
    }
  }
  CHECK(case_step / n_case > 1.5 * control_step / n_control);
}

} // TEST_SUITE
