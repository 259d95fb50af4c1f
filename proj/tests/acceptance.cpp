// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Detail lines are indented.

#include "connectome/classify.hpp"
#include "connectome/connectivity.hpp"
#include "connectome/evaluate.hpp"
#include "connectome/parcellation.hpp"
#include "connectome/pipeline.hpp"
#include "connectome/signal.hpp"
#include "connectome/stats.hpp"
#include "connectome/synthdata.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace connectome;

namespace {

struct Outcome {
  bool passed = false;
  std::string summary;
};

template <typename... Args>
std::string fmt(const char *format, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void detail(const std::string &line) { std::printf("    %s\n", line.c_str()); }

// Cohort used for the qualitative trends: 12 sites x 30 subjects, k = 20,
// with gain and noise ranges wide enough that sites differ in SNR.
synthdata::CohortConfig trend_cohort(double delta) {
  synthdata::CohortConfig c;
  c.n_sites = 12;
  c.subjects_per_site = 30;
  c.k_regions = 20;
  c.lattice = {6, 6, 6};
  c.effect_size = delta;
  c.site_gain = {0.5, 1.5};
  c.site_noise_sd = {0.5, 4.0};
  return c;
}

config::PipelineConfig trend_pipeline(std::uint64_t seed) {
  config::PipelineConfig p;
  p.n_regions = 20;
  p.n_rois = 20;
  p.master_seed = seed;
  return p;
}

double chance_of(const std::vector<SubjectRecord> &records, std::uint64_t seed) {
  std::vector<int> labels;
  for (const auto &r : records) labels.push_back(r.diagnosis);
  return evaluate::dummy_chance(labels, seed);
}

// 1 -------------------------------------------------------------------------
Outcome chance_level() {
  std::vector<int> labels(403, kCase);
  labels.insert(labels.end(), 468, kControl);
  const double c = evaluate::dummy_chance(labels, 0);
  return {std::abs(c - 0.5373) <= 1e-4, fmt("chance = %.6f (target 0.5373 +/- 1e-4)", c)};
}

// 2 -------------------------------------------------------------------------
Outcome ledoit_wolf() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pick_n(10, 100);
  std::uniform_int_distribution<int> pick_k(3, 20);
  double worst = 0.0;
  double worst_alpha = 0.0;
  int chol_fail = 0;
  for (int i = 0; i < 50; ++i) {
    const int n = pick_n(rng);
    const int k = pick_k(rng);
    Matrix x = oracle::random_matrix(rng, n, k);
    x = x * oracle::random_spd(rng, k, 10.0);
    const auto got = connectivity::ledoit_wolf(x);
    const auto want = oracle::ledoit_wolf(x);
    worst = std::max(worst, (got.sigma - want.sigma).norm());
    worst_alpha = std::max(worst_alpha, std::abs(got.shrinkage - want.alpha));
    if (got.shrinkage > 0.0 && Eigen::LLT<Matrix>(got.sigma).info() != Eigen::Success) ++chol_fail;
  }
  return {worst < 1e-10 && worst_alpha < 1e-10 && chol_fail == 0,
          fmt("max |dSigma|_F = %.2e, max |dalpha| = %.2e, Cholesky failures = %d", worst,
              worst_alpha, chol_fail)};
}

// 3 -------------------------------------------------------------------------
Outcome tangent_geometry() {
  std::mt19937_64 rng(3);
  double round_trip = 0.0;
  double at_reference = 0.0;
  double residual = 0.0;
  int max_iter = 0;
  for (int set = 0; set < 20; ++set) {
    const int k = 4 + set % 8;
    std::vector<Matrix> sigmas;
    for (int i = 0; i < 10; ++i) sigmas.push_back(oracle::random_spd(rng, k, 100.0));
    for (const auto &s : sigmas) {
      round_trip = std::max(round_trip, (connectivity::sym_exp(connectivity::spd_log(s)) - s).norm());
    }
    const auto ref = connectivity::fit_tangent_reference(sigmas);
    residual = std::max(residual, ref.residual);
    max_iter = std::max(max_iter, ref.iterations);
    at_reference = std::max(
        at_reference,
        connectivity::parameterize(ref.reference, connectivity::MatrixKind::tangent, &ref).norm());
  }
  return {round_trip < 1e-8 && at_reference < 1e-10 && residual < 1e-6,
          fmt("round trip %.2e, tangent at reference %.2e, Karcher residual %.2e (%d iterations max)",
              round_trip, at_reference, residual, max_iter)};
}

// 4 -------------------------------------------------------------------------
Outcome classifier_oracles() {
  std::mt19937_64 rng(4);
  double ridge_err = 0.0;
  for (int d : {3, 20, 80, 150, 200}) {
    const int n = 60 + d / 2;
    const Matrix x = oracle::random_matrix(rng, n, d);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = x(i, 0) + 0.5 * x(i, 1 % d) > 0 ? 1.0 : -1.0;
    for (double alpha : {1e-2, 1.0, 1e2}) {
      const auto m = classify::fit_ridge_classifier(x, y, alpha);
      const auto [w, b] = oracle::ridge(x, y, alpha);
      ridge_err = std::max(ridge_err, (m.weights - w).norm() / std::max(1.0, w.norm()));
      ridge_err = std::max(ridge_err, std::abs(m.intercept - b));
    }
  }

  int non_monotone = 0;
  int unconverged = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = oracle::random_matrix(rng, 100, 40);
    Vector y(100);
    for (int i = 0; i < 100; ++i) y(i) = x(i, 0) - x(i, 1) + 0.8 * oracle::random_matrix(rng, 1, 1)(0, 0) > 0 ? 1.0 : -1.0;
    for (double c : {1e-3, 1e-1, 10.0, 1e3}) {
      classify::SvcTrace trace;
      classify::fit_svc(x, y, classify::Penalty::l2, c, true, &trace);
      for (std::size_t i = 1; i < trace.objective.size(); ++i) {
        if (trace.objective[i] > trace.objective[i - 1] * (1.0 + 1e-12)) ++non_monotone;
      }
      if (!trace.converged) ++unconverged;
    }
  }

  // Planted sparsity: one informative coordinate among 50.
  Matrix x = oracle::random_matrix(rng, 200, 50);
  Vector y(200);
  for (int i = 0; i < 200; ++i) {
    y(i) = i % 2 == 0 ? 1.0 : -1.0;
    x(i, 0) += y(i);
  }
  const auto l1 = classify::fit_svc(x, y, classify::Penalty::l1, 0.005);
  int zeroed = 0;
  for (int j = 1; j < 50; ++j) zeroed += l1.weights(j) == 0.0;

  detail(fmt("SVC-l2 sweeps not converged: %d of 40", unconverged));
  return {ridge_err < 1e-10 && non_monotone == 0 && zeroed == 49 && l1.weights(0) != 0.0,
          fmt("ridge max error %.2e; SVC-l2 objective increases %d; SVC-l1 zeroed %d/49 noise "
              "coordinates (w_0 = %.3f)",
              ridge_err, non_monotone, zeroed, l1.weights(0))};
}

// 5 -------------------------------------------------------------------------
Outcome extraction_contract() {
  synthdata::CohortConfig c;
  c.n_sites = 2;
  c.subjects_per_site = 10;
  c.k_regions = 20;
  c.lattice = {6, 6, 6};
  const auto cohort = synthdata::generate_cohort(c, 5);
  const auto maps = parcellation::indicator_maps(cohort.ground_truth.atlas);
  double worst = 0.0;
  bool exact = true;
  for (std::size_t s = 0; s < cohort.subjects.size(); ++s) {
    const Matrix &y = cohort.voxel_data[s];
    const auto conf = signal::build_confounds(y, cohort.subjects[s].motion, cohort.noise_regressors[s]);
    const Matrix clean = signal::clean_region_signals(y, maps.maps, conf.data);
    worst = std::max(worst, (conf.data.transpose() * clean).cwiseAbs().maxCoeff());

    const Matrix u = signal::extract_region_signals(y, maps.maps);
    for (Eigen::Index r = 0; r < maps.maps.rows(); ++r) {
      const auto voxels = cohort.ground_truth.atlas.region_voxels(maps.region_ids[static_cast<std::size_t>(r)]);
      for (Eigen::Index t = 0; t < y.rows(); ++t) {
        double sum = 0.0;
        for (int v : voxels) sum += y(t, v);
        if (u(t, r) != sum / static_cast<double>(voxels.size())) exact = false;
      }
    }
  }
  return {worst < 1e-6 && exact,
          fmt("max |C^T u| = %.2e over 20 subjects; disjoint extraction equals region means: %s",
              worst, exact ? "exactly" : "no")};
}

// 6 -------------------------------------------------------------------------
Outcome parcellation_recovery() {
  const LatticeDims blob_dims{10, 6, 6};
  const int p = static_cast<int>(blob_dims.voxel_count());
  std::vector<int> truth(static_cast<std::size_t>(p));
  for (int v = 0; v < p; ++v) truth[static_cast<std::size_t>(v)] = blob_dims.coords(v)[0] < 5 ? 0 : 1;
  double min_ward = 1.0;
  double min_kmeans = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(600 + seed);
    std::vector<Matrix> grams;
    for (int s = 0; s < 3; ++s) {
      const Matrix latent = oracle::random_matrix(rng, 80, 2);
      Matrix y = 0.7 * oracle::random_matrix(rng, 80, p);
      for (int v = 0; v < p; ++v) y.col(v) += latent.col(truth[static_cast<std::size_t>(v)]);
      parcellation::AtlasOptions prep;
      prep.fwhm_mm = 0.0;
      const Matrix prepared = parcellation::prepare_for_atlas(y, blob_dims, prep);
      grams.push_back(prepared.transpose() * prepared);
    }
    std::vector<parcellation::AtlasInput> inputs;
    for (int s = 0; s < 3; ++s) inputs.push_back({s + 1, parcellation::Split::train, &grams[static_cast<std::size_t>(s)], 80});
    for (auto method : {parcellation::AtlasMethod::ward, parcellation::AtlasMethod::kmeans}) {
      parcellation::AtlasOptions opts;
      opts.method = method;
      opts.n_regions = 2;
      opts.seed = seed;
      const auto atlas = parcellation::fit_atlas(inputs, blob_dims, opts);
      const double ari = parcellation::adjusted_rand_index(atlas.labels, truth);
      (method == parcellation::AtlasMethod::ward ? min_ward : min_kmeans) =
          std::min(method == parcellation::AtlasMethod::ward ? min_ward : min_kmeans, ari);
    }
  }

  const LatticeDims cube{12, 12, 12};
  const int pc = static_cast<int>(cube.voxel_count());
  std::mt19937_64 rng(66);
  const Matrix y = oracle::random_matrix(rng, 60, pc);
  parcellation::AtlasOptions prep;
  prep.fwhm_mm = 6.0;
  const Matrix prepared = parcellation::prepare_for_atlas(y, cube, prep);
  const Matrix gram = prepared.transpose() * prepared;
  const auto adj = parcellation::lattice_adjacency(cube);
  int disconnected = 0;
  for (int k : {5, 20, 84}) {
    parcellation::AtlasOptions opts;
    opts.n_regions = k;
    const std::vector<parcellation::AtlasInput> inputs{{1, parcellation::Split::train, &gram, 60}};
    const auto atlas = parcellation::fit_atlas(inputs, cube, opts);
    for (int r = 0; r < atlas.n_regions; ++r) {
      std::vector<int> comp;
      parcellation::Adjacency sub;
      sub.neighbors.resize(adj.size());
      for (std::size_t v = 0; v < adj.size(); ++v) {
        if (atlas.labels[v] != r) continue;
        for (int u : adj.neighbors[v]) {
          if (atlas.labels[static_cast<std::size_t>(u)] == r) sub.neighbors[v].push_back(u);
        }
      }
      const int n_comp = parcellation::connected_components(sub, &comp);
      const auto size = static_cast<int>(atlas.region_voxels(r).size());
      // Isolated non-members count as components of their own.
      if (n_comp - (pc - size) != 1) ++disconnected;
    }
  }
  return {min_ward == 1.0 && min_kmeans == 1.0 && disconnected == 0,
          fmt("min ARI over 10 seeds: ward %.4f, kmeans %.4f; disconnected Ward regions at k in "
              "{5,20,84}: %d",
              min_ward, min_kmeans, disconnected)};
}

// 7 -------------------------------------------------------------------------
Outcome qualitative_trends() {
  const std::vector<double> fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  int rising = 0;
  int inter_noisier = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto cohort = synthdata::generate_cohort(trend_cohort(0.12), 7000 + s);
    pipeline::Workspace ws(cohort);
    auto cfg = trend_pipeline(7000 + s);
    const auto intra = pipeline::cross_validate(ws, cfg);
    const auto curve = pipeline::learning_curve(ws, cfg, fractions);
    cfg.scheme = evaluate::Scheme::inter_site;
    const auto inter = pipeline::cross_validate(ws, cfg);
    std::vector<double> acc;
    for (const auto &c : curve.summary) acc.push_back(c.mean);
    const double rho = stats::spearman(fractions, acc);
    rising += rho > 0.0;
    inter_noisier += inter.sd_accuracy > intra.sd_accuracy;
    detail(fmt("seed %d: curve %.3f %.3f %.3f %.3f %.3f (rho %.2f); intra %.3f sd %.3f; inter "
               "%.3f sd %.3f",
               static_cast<int>(s), acc[0], acc[1], acc[2], acc[3], acc[4], rho,
               intra.mean_accuracy, intra.sd_accuracy, inter.mean_accuracy, inter.sd_accuracy));
  }
  double null_acc = 0.0;
  double null_chance = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto cohort = synthdata::generate_cohort(trend_cohort(0.0), 7100 + s);
    pipeline::Workspace ws(cohort);
    const auto cv = pipeline::cross_validate(ws, trend_pipeline(7100 + s));
    null_acc += cv.mean_accuracy / 10.0;
    null_chance += chance_of(cohort.subjects, 7100 + s) / 10.0;
  }
  const double gap = std::abs(null_acc - null_chance);
  return {rising >= 8 && inter_noisier >= 8 && gap <= 0.05,
          fmt("(a) rising curve in %d/10 seeds; (b) inter-site sd higher in %d/10; (c) delta=0 "
              "accuracy %.3f vs chance %.3f (gap %.1f points)",
              rising, inter_noisier, null_acc, null_chance, 100.0 * gap)};
}

// 8 -------------------------------------------------------------------------
Outcome anova_recovery() {
  const std::vector<std::string> kinds{"correlation", "partial", "tangent"};
  const std::vector<std::string> atlases{"kmeans", "ward"};
  const std::vector<std::string> classifiers{"ridge", "svc_l1", "svc_l2"};
  int covered = 0;
  double balanced_err = 0.0;
  for (int sim = 0; sim < 100; ++sim) {
    std::mt19937_64 rng(8000 + sim);
    std::normal_distribution<double> noise(0.0, 4.0);
    stats::FactorTable t;
    t.factor_names = {"matrix_kind", "atlas_method", "classifier"};
    for (int fold = 0; fold < 10; ++fold)
      for (const auto &k : kinds)
        for (const auto &a : atlases)
          for (const auto &c : classifiers) {
            // Sum-coded truth: tangent +5, the other two kinds -2.5 each.
            const double effect = k == "tangent" ? 5.0 : -2.5;
            const double atlas_effect = a == "ward" ? 1.0 : -1.0;
            t.levels.push_back({k, a, c});
            t.response.push_back(65.0 + effect + atlas_effect + noise(rng));
          }
    const auto r = stats::anova_effects(t);
    for (const auto &e : r.effects) {
      if (e.factor == "matrix_kind" && e.level == "tangent") covered += e.ci_low <= 5.0 && 5.0 <= e.ci_high;
    }
    std::map<std::string, std::pair<double, int>> groups;
    for (std::size_t i = 0; i < t.response.size(); ++i) {
      for (std::size_t f = 0; f < 3; ++f) {
        auto &g = groups[t.factor_names[f] + "=" + t.levels[i][f]];
        g.first += t.response[i];
        g.second++;
      }
    }
    for (const auto &e : r.effects) {
      const auto &g = groups[e.factor + "=" + e.level];
      balanced_err = std::max(balanced_err, std::abs(e.coefficient - (g.first / g.second - r.grand_mean)));
    }
  }
  return {covered >= 93 && balanced_err < 1e-10,
          fmt("planted +5 effect inside its 95%% CI in %d/100 tables; balanced-design max error %.2e",
              covered, balanced_err)};
}

// 9 -------------------------------------------------------------------------
Outcome biomarker_recovery() {
  const auto cohort = synthdata::generate_cohort(trend_cohort(0.3), 9000);
  pipeline::Workspace ws(cohort);
  const auto cfg = trend_pipeline(9000);
  const auto cv = pipeline::cross_validate(ws, cfg);
  std::vector<Parcellation> atlases;
  for (const auto &f : cv.folds) atlases.push_back(f.atlas);
  const auto report = pipeline::compute_biomarkers(ws, cfg, atlases, 500);
  if (report.consensus.empty) return {false, "consensus atlas is empty"};

  // Consensus region -> planted region by best DICE.
  const auto &truth = cohort.ground_truth;
  std::map<int, int> to_truth;
  for (int r = 0; r < report.consensus.atlas.n_regions; ++r) {
    const auto a = report.consensus.atlas.region_voxels(r);
    if (a.empty()) continue;
    double best = -1.0;
    for (int t = 0; t < truth.atlas.n_regions; ++t) {
      const double d = parcellation::dice(a, truth.atlas.region_voxels(t));
      if (d > best) {
        best = d;
        to_truth[r] = t;
      }
    }
  }
  const auto d = report.edges.size();
  const auto decile = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(d)));
  int in_decile = 0;
  for (const auto &planted : truth.edges) {
    std::size_t rank = d + 1;
    for (std::size_t i = 0; i < d; ++i) {
      const auto &e = report.edges[i];
      if (e.region_a == e.region_b) continue;
      const int ta = to_truth.count(e.region_a) ? to_truth[e.region_a] : -1;
      const int tb = to_truth.count(e.region_b) ? to_truth[e.region_b] : -1;
      if ((ta == planted.i && tb == planted.j) || (ta == planted.j && tb == planted.i)) {
        rank = i + 1;
        break;
      }
    }
    in_decile += rank <= decile;
    detail(fmt("planted edge (%d, %d) delta %+.2f: rank %d of %d", planted.i, planted.j,
               planted.delta, static_cast<int>(rank), static_cast<int>(d)));
  }
  const double recovered = static_cast<double>(in_decile) / static_cast<double>(truth.edges.size());

  const auto null = pipeline::compute_biomarkers(ws, cfg, atlases, 500, 1, true);
  std::vector<double> p;
  for (const auto &e : null.edges) p.push_back(e.p_value);
  const double ks = stats::ks_uniform_statistic(p);
  return {recovered >= 0.8 && ks < 0.1,
          fmt("%d/%d planted edges in the top decile (%d of %d features); permuted-label KS = %.4f "
              "over %d p-values",
              in_decile, static_cast<int>(truth.edges.size()), static_cast<int>(decile),
              static_cast<int>(d), ks, static_cast<int>(p.size()))};
}

// 10 ------------------------------------------------------------------------
Outcome fold_contracts() {
  std::string message = "(no error)";
  {
    synthdata::CohortConfig c;
    c.n_sites = 3;
    c.subjects_per_site = 10;
    c.k_regions = 8;
    c.lattice = {6, 6, 6};
    c.n_timepoints = 60;
    const auto cohort = synthdata::generate_cohort(c, 10);
    try {
      evaluate::make_folds(cohort.subjects, evaluate::Scheme::inter_site, 1);
    } catch (const Error &e) {
      message = e.what();
    }
  }
  const bool errored = message.find("at least 10 acquisition sites") != std::string::npos;
  detail("3-site inter-site error: " + message);

  synthdata::CohortConfig c;
  c.n_sites = 10;
  c.site_sizes = {12, 14, 16, 10, 11, 13, 15, 12, 10, 17};
  c.k_regions = 10;
  c.lattice = {6, 6, 6};
  c.n_timepoints = 60;
  c.case_fraction = 0.4;
  const auto cohort = synthdata::generate_cohort(c, 11);
  int ratio_violations = 0;
  {
    const auto plan = evaluate::make_folds(cohort.subjects, evaluate::Scheme::intra_site, 12);
    std::map<std::pair<int, int>, int> cell;
    for (const auto &r : cohort.subjects) cell[{r.site_id, r.diagnosis}]++;
    for (const auto &fold : plan.folds) {
      std::map<std::pair<int, int>, int> held;
      for (int id : fold.test_ids) {
        const auto &r = cohort.subjects[cohort.position(id)];
        held[{r.site_id, r.diagnosis}]++;
      }
      for (const auto &[key, size] : cell) {
        if (std::abs(held[key] - 0.2 * size) > 1.0) ++ratio_violations;
      }
    }
  }

  pipeline::Workspace ws(cohort);
  int folds = 0;
  int leaks = 0;
  for (auto scheme : {evaluate::Scheme::intra_site, evaluate::Scheme::inter_site}) {
    for (auto kind : {connectivity::MatrixKind::correlation, connectivity::MatrixKind::partial,
                      connectivity::MatrixKind::tangent}) {
      config::PipelineConfig p;
      p.n_regions = 10;
      p.n_rois = 10;
      p.scheme = scheme;
      p.matrix_kind = kind;
      p.grid = {0.1, 10.0};
      p.master_seed = 13;
      const auto cv = pipeline::cross_validate(ws, p);
      for (const auto &f : cv.folds) {
        ++folds;
        bool ok = f.leakage_free;
        for (const auto &a : f.audit) ok = ok && a.passed;
        ok = ok && fitted_on_train_only(f.atlas.fit_subjects, f.train_ids, f.test_ids) &&
             fitted_on_train_only(f.selection.model.fit_subjects, f.train_ids, f.test_ids) &&
             fitted_on_train_only(f.group_model.fit_subjects, f.train_ids, f.test_ids);
        if (kind == connectivity::MatrixKind::tangent) {
          ok = ok && fitted_on_train_only(f.tangent.fit_subjects, f.train_ids, f.test_ids);
        }
        leaks += !ok;
      }
    }
  }
  return {errored && ratio_violations == 0 && leaks == 0,
          fmt("inter-site error %s; intra-site cell ratio violations %d; leakage audit failures %d "
              "of %d folds",
              errored ? "raised" : "MISSING", ratio_violations, leaks, folds)};
}

// 11 ------------------------------------------------------------------------
Outcome movement_control() {
  double acc = 0.0;
  double chance = 0.0;
  int length = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto c = trend_cohort(0.12);
    c.motion_diagnosis_coupling = 0.0;
    const auto cohort = synthdata::generate_cohort(c, 11000 + s);
    const auto m = pipeline::movement_prediction(cohort, trend_pipeline(11000 + s));
    length = m.descriptor_length;
    acc += m.mean_accuracy / 10.0;
    chance += chance_of(cohort.subjects, 11000 + s) / 10.0;
    detail(fmt("seed %d: movement-only accuracy %.3f", static_cast<int>(s), m.mean_accuracy));
  }
  const double gap = std::abs(acc - chance);
  return {gap <= 0.05 && length == 56,
          fmt("mean accuracy %.3f vs chance %.3f (gap %.1f points); descriptor length %d", acc,
              chance, 100.0 * gap, length)};
}

struct Criterion {
  int id;
  double max_seconds; // 0: no runtime bound
  std::function<Outcome()> run;
};

} // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, 1.0, chance_level},          {2, 10.0, ledoit_wolf},
      {3, 30.0, tangent_geometry},     {4, 60.0, classifier_oracles},
      {5, 0.0, extraction_contract},   {6, 120.0, parcellation_recovery},
      {7, 900.0, qualitative_trends},  {8, 0.0, anova_recovery},
      {9, 600.0, biomarker_recovery},  {10, 0.0, fold_contracts},
      {11, 0.0, movement_control},
  };
  int failures = 0;
  for (const auto &c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception &e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.max_seconds == 0.0 || secs < c.max_seconds;
    const bool passed = out.passed && in_time;
    failures += !passed;
    std::string limit = c.max_seconds > 0.0 ? fmt(" [limit %.0fs]", c.max_seconds) : "";
    std::printf("criterion %2d: %s  %s (%.1fs%s)\n", c.id, passed ? "PASS" : "FAIL",
                out.summary.c_str(), secs, limit.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
