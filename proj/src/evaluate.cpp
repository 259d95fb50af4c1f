#include "connectome/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace connectome::evaluate {

std::string to_string(Scheme scheme) {
  return scheme == Scheme::inter_site ? "inter_site" : "intra_site";
}

Scheme parse_scheme(const std::string &name) {
  if (name == "inter_site") return Scheme::inter_site;
  if (name == "intra_site") return Scheme::intra_site;
  throw ConfigError("unknown scheme '" + name + "' (expected inter_site or intra_site)");
}

FoldPlan make_folds(std::span<const SubjectRecord> records, Scheme scheme, std::uint64_t seed,
                    int n_folds, double test_fraction) {
  FoldPlan plan;
  plan.scheme = scheme;
  plan.seed = seed;
  std::map<int, std::vector<int>> by_site;
  for (const auto &r : records) {
    by_site[r.site_id].push_back(r.subject_id);
  }

  if (scheme == Scheme::inter_site) {
    if (static_cast<int>(by_site.size()) < kMinInterSiteSites) {
      throw Error("inter-site cross-validation requires at least " +
                  std::to_string(kMinInterSiteSites) + " acquisition sites (found " +
                  std::to_string(by_site.size()) + ")");
    }
    std::vector<int> sites;
    for (const auto &[site, ids] : by_site) {
      sites.push_back(site);
    }
    std::stable_sort(sites.begin(), sites.end(),
                     [&](int a, int b) { return by_site[a].size() > by_site[b].size(); });
    sites.resize(static_cast<std::size_t>(kMinInterSiteSites));
    std::sort(sites.begin(), sites.end());
    for (int site : sites) {
      Fold fold;
      for (const auto &r : records) {
        (r.site_id == site ? fold.test_ids : fold.train_ids).push_back(r.subject_id);
      }
      std::sort(fold.train_ids.begin(), fold.train_ids.end());
      std::sort(fold.test_ids.begin(), fold.test_ids.end());
      plan.folds.push_back(std::move(fold));
    }
    return plan;
  }

  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  std::map<std::pair<int, int>, std::vector<int>> cells;
  for (const auto &r : records) {
    cells[{r.site_id, r.diagnosis}].push_back(r.subject_id);
  }
  for (auto &[cell, ids] : cells) {
    if (ids.size() < 2) {
      throw Error("intra-site cross-validation needs at least 2 subjects in every (site, "
                  "diagnosis) cell; site " +
                  std::to_string(cell.first) + " diagnosis " + std::to_string(cell.second) +
                  " has " + std::to_string(ids.size()));
    }
    std::sort(ids.begin(), ids.end());
  }
  for (int f = 0; f < n_folds; ++f) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(f)));
    Fold fold;
    for (const auto &[cell, ids] : cells) {
      std::vector<int> shuffled = ids;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const int size = static_cast<int>(ids.size());
      const int n_test =
          std::clamp(static_cast<int>(std::lround(test_fraction * size)), 1, size - 1);
      fold.test_ids.insert(fold.test_ids.end(), shuffled.begin(), shuffled.begin() + n_test);
      fold.train_ids.insert(fold.train_ids.end(), shuffled.begin() + n_test, shuffled.end());
    }
    std::sort(fold.train_ids.begin(), fold.train_ids.end());
    std::sort(fold.test_ids.begin(), fold.test_ids.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

Scores score(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) {
    throw Error("predictions and truth differ in length");
  }
  if (truth.empty()) {
    throw Error("cannot score an empty prediction set");
  }
  Scores s;
  int correct = 0;
  int correct_cases = 0;
  int correct_controls = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if ((truth[i] != kCase && truth[i] != kControl) ||
        (predictions[i] != kCase && predictions[i] != kControl)) {
      throw Error("labels must be +1 (case) or -1 (control)");
    }
    const bool ok = predictions[i] == truth[i];
    correct += ok ? 1 : 0;
    if (truth[i] == kCase) {
      ++s.n_cases;
      correct_cases += ok ? 1 : 0;
    } else {
      ++s.n_controls;
      correct_controls += ok ? 1 : 0;
    }
  }
  s.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  s.sensitivity_defined = s.n_cases > 0;
  s.specificity_defined = s.n_controls > 0;
  s.sensitivity = s.sensitivity_defined ? static_cast<double>(correct_cases) / s.n_cases
                                        : std::numeric_limits<double>::quiet_NaN();
  s.specificity = s.specificity_defined ? static_cast<double>(correct_controls) / s.n_controls
                                        : std::numeric_limits<double>::quiet_NaN();
  return s;
}

double dummy_chance(std::span<const int> labels, std::uint64_t seed, int n_draws) {
  const auto n = static_cast<double>(labels.size());
  const auto cases = static_cast<double>(std::count(labels.begin(), labels.end(), kCase));
  const double controls = n - cases;
  if (cases == 0.0 || controls == 0.0) {
    throw Error("chance level needs both classes");
  }
  const double majority = std::max(cases, controls) / n;
  Rng rng(seed);
  std::bernoulli_distribution draw(cases / n);
  double total = 0.0;
  for (int d = 0; d < n_draws; ++d) {
    int correct = 0;
    for (int label : labels) {
      const int guess = draw(rng) ? kCase : kControl;
      correct += guess == label ? 1 : 0;
    }
    total += correct / n;
  }
  const double stratified = n_draws > 0 ? total / n_draws : 0.0;
  return std::max(majority, stratified);
}

std::string to_string(Subsample subsample) {
  switch (subsample) {
  case Subsample::all:
    return "all";
  case Subsample::largest_sites:
    return "largest_sites";
  case Subsample::right_handed_males:
    return "right_handed_males";
  case Subsample::right_handed_males_9_18:
    return "right_handed_males_9_18";
  case Subsample::right_handed_males_9_18_3_sites:
    return "right_handed_males_9_18_3_sites";
  }
  return "unknown";
}

Subsample parse_subsample(const std::string &name) {
  for (auto s : {Subsample::all, Subsample::largest_sites, Subsample::right_handed_males,
                 Subsample::right_handed_males_9_18, Subsample::right_handed_males_9_18_3_sites}) {
    if (to_string(s) == name) {
      return s;
    }
  }
  throw ConfigError("unknown subsample '" + name + "'");
}

SubsamplePredicate predicate_for(Subsample subsample) {
  SubsamplePredicate p;
  switch (subsample) {
  case Subsample::all:
    break;
  case Subsample::largest_sites:
    p.min_site_size = 30;
    break;
  case Subsample::right_handed_males_9_18_3_sites:
    p.largest_sites = 3;
    [[fallthrough]];
  case Subsample::right_handed_males_9_18:
    p.age_range = std::pair{9.0, 18.0};
    [[fallthrough]];
  case Subsample::right_handed_males:
    p.right_handed_only = true;
    p.males_only = true;
    break;
  }
  return p;
}

std::vector<SubjectRecord> filter_subsample(std::span<const SubjectRecord> records,
                                            const SubsamplePredicate &predicate) {
  std::vector<SubjectRecord> kept;
  for (const auto &r : records) {
    if (predicate.right_handed_only && r.handedness != 1) continue;
    if (predicate.males_only && r.sex != 1) continue;
    if (predicate.age_range &&
        (r.age < predicate.age_range->first || r.age > predicate.age_range->second)) {
      continue;
    }
    kept.push_back(r);
  }
  // Site-level criteria apply to what is left after the subject filters.
  std::map<int, int> site_size;
  for (const auto &r : kept) {
    ++site_size[r.site_id];
  }
  std::set<int> allowed;
  for (const auto &[site, size] : site_size) {
    if (size >= predicate.min_site_size) {
      allowed.insert(site);
    }
  }
  if (predicate.largest_sites) {
    std::vector<int> sites(allowed.begin(), allowed.end());
    std::stable_sort(sites.begin(), sites.end(),
                     [&](int a, int b) { return site_size[a] > site_size[b]; });
    if (static_cast<int>(sites.size()) > *predicate.largest_sites) {
      sites.resize(static_cast<std::size_t>(*predicate.largest_sites));
    }
    allowed = std::set<int>(sites.begin(), sites.end());
  }
  std::vector<SubjectRecord> out;
  for (auto &r : kept) {
    if (allowed.count(r.site_id) > 0) {
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<DecileSummary> top_decile(std::span<const PipelineScore> pipelines,
                                      const std::vector<std::string> &factors) {
  std::vector<DecileSummary> out;
  for (const auto &factor : factors) {
    std::map<std::string, std::vector<double>> by_level;
    for (const auto &p : pipelines) {
      const auto it = p.options.find(factor);
      if (it != p.options.end()) {
        by_level[it->second].push_back(p.mean_accuracy);
      }
    }
    for (auto &[level, scores] : by_level) {
      std::sort(scores.begin(), scores.end(), std::greater<>());
      DecileSummary s;
      s.factor = factor;
      s.level = level;
      s.n_pipelines = static_cast<int>(scores.size());
      if (scores.size() < 10) {
        s.n_kept = 1;
        s.fallback = true;
      } else {
        s.n_kept = static_cast<int>(std::ceil(0.1 * static_cast<double>(scores.size()) - 1e-9));
      }
      const auto kept = static_cast<std::size_t>(s.n_kept);
      s.mean = std::accumulate(scores.begin(), scores.begin() + static_cast<long>(kept), 0.0) /
               static_cast<double>(kept);
      double ss = 0.0;
      for (std::size_t i = 0; i < kept; ++i) {
        ss += (scores[i] - s.mean) * (scores[i] - s.mean);
      }
      s.sd = kept > 1 ? std::sqrt(ss / static_cast<double>(kept - 1)) : 0.0;
      out.push_back(std::move(s));
    }
  }
  return out;
}

} // namespace connectome::evaluate
