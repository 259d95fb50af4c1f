#include "connectome/config.hpp"
#include "connectome/io.hpp"
#include "connectome/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

using namespace connectome;
using namespace connectome::pipeline;
namespace fs = std::filesystem;

namespace {

synthdata::CohortConfig tiny_cohort() {
  synthdata::CohortConfig c;
  c.n_sites = 4;
  c.subjects_per_site = 12;
  c.k_regions = 8;
  c.lattice = {6, 6, 6};
  c.n_timepoints = 60;
  c.n_discriminative_edges = 3;
  c.effect_size = 0.3;
  return c;
}

config::PipelineConfig tiny_pipeline() {
  config::PipelineConfig p;
  p.n_regions = 8;
  p.n_rois = 8;
  p.n_folds = 3;
  p.inner_folds = 3;
  p.grid = {0.1, 10.0};
  p.master_seed = 3;
  return p;
}

const synthdata::Cohort &shared_cohort() {
  static const synthdata::Cohort cohort = synthdata::generate_cohort(tiny_cohort(), 77);
  return cohort;
}

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("connectome_test_" + name);
  fs::remove_all(dir);
  return dir;
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("every fold passes the leakage audit") {
  Workspace ws(shared_cohort());
  for (auto kind : {connectivity::MatrixKind::tangent, connectivity::MatrixKind::correlation}) {
    auto cfg = tiny_pipeline();
    cfg.matrix_kind = kind;
    const auto cv = cross_validate(ws, cfg);
    REQUIRE(cv.folds.size() == 3);
    for (const auto &f : cv.folds) {
      CHECK(f.leakage_free);
      CHECK(fitted_on_train_only(f.atlas.fit_subjects, f.train_ids, f.test_ids));
      CHECK(fitted_on_train_only(f.selection.model.fit_subjects, f.train_ids, f.test_ids));
      CHECK(fitted_on_train_only(f.group_model.fit_subjects, f.train_ids, f.test_ids));
      if (kind == connectivity::MatrixKind::tangent) {
        CHECK(fitted_on_train_only(f.tangent.fit_subjects, f.train_ids, f.test_ids));
      }
      CHECK(f.features.rows() == static_cast<Eigen::Index>(f.train_ids.size() + f.test_ids.size()));
      for (const auto &a : f.audit) CHECK(a.passed);
    }
    CHECK(cv.records.size() == 3);
  }
}

TEST_CASE("cross-validation is independent of the worker count") {
  Workspace ws(shared_cohort());
  const auto cfg = tiny_pipeline();
  const auto a = cross_validate(ws, cfg, 1);
  Workspace other(shared_cohort());
  const auto b = cross_validate(other, cfg, 3);
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    CHECK(a.folds[f].predictions == b.folds[f].predictions);
    CHECK(a.folds[f].features == b.folds[f].features);
  }
}

TEST_CASE("learning curve subsets are nested and the full fraction reproduces CV") {
  Workspace ws(shared_cohort());
  const auto cfg = tiny_pipeline();
  const auto cv = cross_validate(ws, cfg);
  const auto curve = learning_curve(ws, cfg, {0.5, 0.75, 1.0});
  REQUIRE(curve.points.size() == 9);
  for (int f = 0; f < 3; ++f) {
    const auto &half = curve.points[static_cast<std::size_t>(f)];
    const auto &most = curve.points[static_cast<std::size_t>(3 + f)];
    const auto &full = curve.points[static_cast<std::size_t>(6 + f)];
    CHECK(half.n_train < most.n_train);
    std::set<int> bigger(most.train_ids.begin(), most.train_ids.end());
    for (int id : half.train_ids) CHECK(bigger.count(id) == 1);
    CHECK(full.accuracy == cv.folds[static_cast<std::size_t>(f)].scores.accuracy);
  }
  REQUIRE(curve.summary.size() == 3);
  CHECK(curve.summary[2].mean == doctest::Approx(cv.mean_accuracy));
}

TEST_CASE("subsample filtering reaches the pipeline") {
  auto cfg = tiny_pipeline();
  cfg.subsample = evaluate::Subsample::right_handed_males;
  for (const auto &r : subsample_records(shared_cohort(), cfg)) {
    CHECK(r.sex == 1);
    CHECK(r.handedness == 1);
  }
}

TEST_CASE("movement descriptors have the fixed length") {
  auto cfg = tiny_pipeline();
  const auto m = movement_prediction(shared_cohort(), cfg);
  CHECK(m.descriptor_length == 56);
  CHECK(m.folds.size() == 3);
}

} // TEST_SUITE

TEST_SUITE("config") {

TEST_CASE("pipeline config parses and reports paths on error") {
  const auto j = config::Json::parse(R"({"atlas_method": "kmeans", "n_regions": 12,
                                         "classifier": "svc_l1", "grid": [1, 2]})");
  const auto p = config::parse_pipeline(j);
  CHECK(p.atlas_method == parcellation::AtlasMethod::kmeans);
  CHECK(p.n_regions == 12);
  CHECK(p.grid == std::vector<double>{1.0, 2.0});

  auto expect_error = [](const char *text, const std::string &fragment) {
    try {
      config::parse_run_config(config::Json::parse(text));
      FAIL("expected ConfigError");
    } catch (const ConfigError &e) {
      CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
    }
  };
  expect_error(R"({"pipeline": {"n_regions": "many"}})", "$.pipeline.n_regions");
  expect_error(R"({"pipeline": {"matrix_kind": "covariance"}})", "covariance");
  expect_error(R"({"pipeline": {"colour": 1}})", "$.pipeline.colour");
  expect_error(R"({"cohort": {"n_sites": 0}})", "n_sites");
}

TEST_CASE("hash is stable and sensitive") {
  auto a = tiny_pipeline();
  auto b = tiny_pipeline();
  CHECK(a.hash() == b.hash());
  b.smoothing_fwhm_mm = 6.0;
  CHECK(a.hash() != b.hash());
  CHECK(config::parse_pipeline(a.to_json()).hash() == a.hash());
}

TEST_CASE("grid expansion is a deterministic Cartesian product") {
  const auto grid = config::Json::parse(R"({"smoothing_fwhm_mm": [0, 6],
                                            "matrix_kind": ["tangent", "correlation", "partial"],
                                            "classifier": ["ridge", "svc_l2"]})");
  const auto runs = config::expand_grid(tiny_pipeline(), grid);
  REQUIRE(runs.size() == 12);
  std::set<std::string> hashes;
  for (const auto &r : runs) hashes.insert(r.hash());
  CHECK(hashes.size() == 12);
  // Keys sorted: classifier, matrix_kind, smoothing_fwhm_mm; last key varies fastest.
  CHECK(runs[0].classifier == classify::ClassifierKind::ridge);
  CHECK(runs[0].matrix_kind == connectivity::MatrixKind::tangent);
  CHECK(runs[1].smoothing_fwhm_mm == 6.0);
  CHECK(runs[2].matrix_kind == connectivity::MatrixKind::correlation);
  CHECK(runs[6].classifier == classify::ClassifierKind::svc_l2);
  CHECK(config::expand_grid(tiny_pipeline(), grid)[5].hash() == runs[5].hash());
  CHECK_THROWS_AS(config::expand_grid(tiny_pipeline(), config::Json::parse(R"({"n_regions": []})")),
                  ConfigError);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-3, 123456.789}) {
    CHECK(std::stod(config::format_number(v)) == v);
  }
  CHECK(config::format_number(6.0) == "6");
}

} // TEST_SUITE

TEST_SUITE("io") {

TEST_CASE("cohort round-trips through disk") {
  const auto dir = scratch("cohort");
  const auto &cohort = shared_cohort();
  const std::string hash = io::write_cohort(dir, cohort);
  CHECK(hash == io::cohort_hash(dir));
  const auto back = io::read_cohort(dir);
  REQUIRE(back.subjects.size() == cohort.subjects.size());
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    CHECK(back.subjects[i].subject_id == cohort.subjects[i].subject_id);
    CHECK(back.subjects[i].diagnosis == cohort.subjects[i].diagnosis);
    CHECK(back.subjects[i].age == cohort.subjects[i].age);
    CHECK(back.subjects[i].motion == cohort.subjects[i].motion);
    CHECK(back.voxel_data[i] == cohort.voxel_data[i]);
  }
  CHECK(back.ground_truth.atlas.labels == cohort.ground_truth.atlas.labels);
  CHECK(back.ground_truth.base_covariance == cohort.ground_truth.base_covariance);
  CHECK_THROWS_AS(io::read_cohort(dir / "missing"), Error);
  fs::remove_all(dir);
}

TEST_CASE("score table is sorted and round-trips") {
  Workspace ws(shared_cohort());
  auto cv = cross_validate(ws, tiny_pipeline());
  auto records = cv.records;
  std::reverse(records.begin(), records.end());
  const std::string text = io::scores_csv(records);
  CHECK(text == io::scores_csv(cv.records));
  const auto dir = scratch("scores");
  io::write_text(dir / "scores.csv", text);
  const auto back = io::read_scores_csv(dir / "scores.csv");
  REQUIRE(back.size() == cv.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].fold == static_cast<int>(i));
    CHECK(back[i].scores.accuracy == cv.records[i].scores.accuracy);
    CHECK(back[i].options == cv.records[i].options);
  }
  fs::remove_all(dir);
}

TEST_CASE("atlas csv round-trips") {
  const auto &atlas = shared_cohort().ground_truth.atlas;
  const auto dir = scratch("atlas");
  io::write_text(dir / "atlas.csv", io::atlas_csv(atlas));
  const auto back = io::read_atlas_csv(dir / "atlas.csv", atlas.dims);
  CHECK(back.labels == atlas.labels);
  CHECK(back.n_regions == atlas.n_regions);
  fs::remove_all(dir);
}

} // TEST_SUITE
