#include "connectome/evaluate.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace connectome;
using namespace connectome::evaluate;

namespace {

std::vector<SubjectRecord> cohort(const std::vector<int> &site_sizes) {
  std::vector<SubjectRecord> out;
  int id = 1;
  for (std::size_t s = 0; s < site_sizes.size(); ++s) {
    for (int j = 0; j < site_sizes[s]; ++j) {
      SubjectRecord r;
      r.subject_id = id++;
      r.site_id = static_cast<int>(s);
      r.diagnosis = j % 5 < 2 ? kCase : kControl;
      r.age = 6.0 + (j * 3) % 30;
      r.sex = j % 4 == 0 ? 0 : 1;
      r.handedness = j % 7 == 0 ? 0 : 1;
      out.push_back(r);
    }
  }
  return out;
}

} // namespace

TEST_SUITE("evaluate") {

TEST_CASE("inter-site plan needs ten sites") {
  const auto small = cohort({20, 20, 20});
  try {
    make_folds(small, Scheme::inter_site, 1);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("at least 10 acquisition sites") != std::string::npos);
  }
}

TEST_CASE("inter-site plan leaves out each of the ten largest sites") {
  const auto records = cohort({12, 30, 25, 25, 8, 40, 15, 16, 17, 18, 19, 9});
  const auto plan = make_folds(records, Scheme::inter_site, 1);
  REQUIRE(plan.folds.size() == 10);
  std::set<int> tested_sites;
  for (const auto &fold : plan.folds) {
    std::set<int> sites;
    for (int id : fold.test_ids) sites.insert(records[static_cast<std::size_t>(id - 1)].site_id);
    REQUIRE(sites.size() == 1);
    tested_sites.insert(*sites.begin());
    CHECK(fold.train_ids.size() + fold.test_ids.size() == records.size());
    for (int id : fold.train_ids) {
      CHECK(records[static_cast<std::size_t>(id - 1)].site_id != *sites.begin());
    }
  }
  // Sites 4 (8 subjects) and 11 (9 subjects) are the two smallest.
  CHECK(tested_sites.count(4) == 0);
  CHECK(tested_sites.count(11) == 0);
  CHECK(tested_sites.size() == 10);
}

TEST_CASE("intra-site splits preserve every (site, diagnosis) cell") {
  const auto records = cohort({20, 31, 17});
  const auto plan = make_folds(records, Scheme::intra_site, 7, 10, 0.2);
  REQUIRE(plan.folds.size() == 10);
  std::map<std::pair<int, int>, int> cell_size;
  for (const auto &r : records) cell_size[{r.site_id, r.diagnosis}]++;
  std::set<std::vector<int>> distinct;
  for (const auto &fold : plan.folds) {
    std::map<std::pair<int, int>, int> held;
    for (int id : fold.test_ids) {
      const auto &r = records[static_cast<std::size_t>(id - 1)];
      held[{r.site_id, r.diagnosis}]++;
    }
    for (const auto &[cell, size] : cell_size) {
      CHECK(std::abs(held[cell] - 0.2 * size) <= 1.0);
      CHECK(held[cell] >= 1);
    }
    std::set<int> all(fold.train_ids.begin(), fold.train_ids.end());
    for (int id : fold.test_ids) CHECK(all.insert(id).second);
    CHECK(all.size() == records.size());
    distinct.insert(fold.test_ids);
  }
  CHECK(distinct.size() == 10);
  CHECK(make_folds(records, Scheme::intra_site, 7).folds[3].test_ids == plan.folds[3].test_ids);
}

TEST_CASE("scores on known predictions") {
  const std::vector<int> truth{1, 1, 1, -1, -1};
  const std::vector<int> pred{1, -1, 1, -1, 1};
  const auto s = score(pred, truth);
  CHECK(s.accuracy == doctest::Approx(0.6));
  CHECK(s.sensitivity == doctest::Approx(2.0 / 3.0));
  CHECK(s.specificity == doctest::Approx(0.5));
  CHECK(s.n_cases == 3);
  CHECK(s.n_controls == 2);

  const std::vector<int> only_cases{1, 1};
  const auto t = score(only_cases, only_cases);
  CHECK_FALSE(t.specificity_defined);
  CHECK(std::isnan(t.specificity));
  CHECK(t.accuracy == 1.0);
  CHECK_THROWS_AS(score(pred, only_cases), Error);
  const std::vector<int> bad{0, 1};
  CHECK_THROWS_AS(score(bad, only_cases), Error);
}

TEST_CASE("chance level of a 403/468 split") {
  std::vector<int> labels(403, kCase);
  labels.insert(labels.end(), 468, kControl);
  CHECK(dummy_chance(labels, 0) == doctest::Approx(0.5373).epsilon(0.0001 / 0.5373));
  std::vector<int> balanced(100, kCase);
  balanced.insert(balanced.end(), 100, kControl);
  const double c = dummy_chance(balanced, 3);
  CHECK(c >= 0.5);
  CHECK(c < 0.52);
  CHECK_THROWS_AS(dummy_chance(std::vector<int>(5, kCase), 0), Error);
}

TEST_CASE("subsample predicates") {
  const auto records = cohort({40, 35, 29, 50});
  const auto largest = filter_subsample(records, predicate_for(Subsample::largest_sites));
  for (const auto &r : largest) CHECK(r.site_id != 2);
  CHECK(largest.size() == 125);

  const auto rhm = filter_subsample(records, predicate_for(Subsample::right_handed_males));
  for (const auto &r : rhm) {
    CHECK(r.sex == 1);
    CHECK(r.handedness == 1);
  }
  const auto aged = filter_subsample(records, predicate_for(Subsample::right_handed_males_9_18));
  for (const auto &r : aged) {
    CHECK(r.age >= 9.0);
    CHECK(r.age <= 18.0);
  }
  const auto three = filter_subsample(records, predicate_for(Subsample::right_handed_males_9_18_3_sites));
  std::set<int> sites;
  for (const auto &r : three) sites.insert(r.site_id);
  CHECK(sites.size() == 3);
  CHECK(three.size() < aged.size());
  CHECK(filter_subsample(records, predicate_for(Subsample::all)).size() == records.size());
  CHECK(parse_subsample(to_string(Subsample::right_handed_males_9_18)) ==
        Subsample::right_handed_males_9_18);
  CHECK_THROWS_AS(parse_subsample("left_handers"), ConfigError);
}

TEST_CASE("top decile per factor level") {
  std::vector<PipelineScore> pipelines;
  for (int i = 0; i < 24; ++i) {
    PipelineScore p;
    p.options["classifier"] = i % 2 == 0 ? "ridge" : "svc_l2";
    p.options["atlas"] = i < 4 ? "ward" : "kmeans";
    p.mean_accuracy = 0.5 + 0.01 * i;
    pipelines.push_back(p);
  }
  const auto rows = top_decile(pipelines, {"classifier", "atlas"});
  std::map<std::string, DecileSummary> by;
  for (const auto &r : rows) by[r.factor + "=" + r.level] = r;
  REQUIRE(by.size() == 4);
  const auto &ridge = by["classifier=ridge"];
  CHECK(ridge.n_pipelines == 12);
  CHECK(ridge.n_kept == 2);
  CHECK(ridge.mean == doctest::Approx((0.72 + 0.70) / 2.0));
  CHECK(ridge.sd == doctest::Approx(std::sqrt(2.0) * 0.01));
  const auto &ward = by["atlas=ward"];
  CHECK(ward.fallback);
  CHECK(ward.n_kept == 1);
  CHECK(ward.mean == doctest::Approx(0.53));
}

} // TEST_SUITE
