#include "connectome/pipeline.hpp"

#include "connectome/signal.hpp"
#include "connectome/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace connectome::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int stratum(const SubjectRecord &r) { return r.site_id * 2 + (r.diagnosis == kCase ? 1 : 0); }

Matrix subject_covariance(Workspace &ws, std::size_t pos, const Matrix &maps, bool regress_motion) {
  const Matrix &conf = ws.confounds(pos, regress_motion);
  const Matrix u = signal::clean_region_signals(ws.cohort().voxel_data[pos], maps, conf);
  return connectivity::ledoit_wolf(u).sigma;
}

/// Features of every listed subject on one set of region maps. The tangent
/// reference is fitted on rows [0, n_fit).
struct FeatureBlock {
  Matrix features;
  connectivity::TangentReference tangent;
};

FeatureBlock build_features(Workspace &ws, const std::vector<std::size_t> &positions,
                            std::size_t n_fit, std::span<const int> fit_ids, const Matrix &maps,
                            const config::PipelineConfig &cfg) {
  std::vector<Matrix> sigmas;
  sigmas.reserve(positions.size());
  for (std::size_t pos : positions) {
    sigmas.push_back(subject_covariance(ws, pos, maps, cfg.regress_motion));
  }
  FeatureBlock out;
  if (cfg.matrix_kind == connectivity::MatrixKind::tangent) {
    out.tangent = connectivity::fit_tangent_reference(
        std::span<const Matrix>(sigmas.data(), n_fit));
    out.tangent.fit_subjects.assign(fit_ids.begin(), fit_ids.end());
  }
  const int k = static_cast<int>(maps.rows());
  out.features.resize(static_cast<Eigen::Index>(positions.size()),
                      connectivity::feature_count(k, cfg.matrix_kind));
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        connectivity::parameterize(sigmas[i], cfg.matrix_kind, &out.tangent).transpose();
  }
  return out;
}

std::vector<int> sorted_sites(std::span<const SubjectRecord> records) {
  std::set<int> s;
  for (const auto &r : records) {
    s.insert(r.site_id);
  }
  return {s.begin(), s.end()};
}

} // namespace

Workspace::Workspace(const synthdata::Cohort &cohort) : cohort_(cohort) {}

Workspace::Entry &Workspace::slot(const std::string &key) {
  std::lock_guard lock(mutex_);
  auto &e = cache_[key];
  if (!e) {
    e = std::make_unique<Entry>();
  }
  return *e;
}

const Matrix &Workspace::confounds(std::size_t position, bool include_motion) {
  Entry &e = slot("conf/" + std::to_string(position) + "/" + (include_motion ? "1" : "0"));
  std::call_once(e.once, [&] {
    const Matrix noise = position < cohort_.noise_regressors.size()
                             ? cohort_.noise_regressors[position]
                             : Matrix(cohort_.voxel_data[position].rows(), 0);
    e.value = signal::build_confounds(cohort_.voxel_data[position],
                                      cohort_.subjects[position].motion, noise, include_motion)
                  .data;
  });
  return e.value;
}

const Matrix &Workspace::atlas_gram(std::size_t position, double fwhm_mm, double voxel_size_mm) {
  Entry &e = slot("gram/" + std::to_string(position) + "/" + config::format_number(fwhm_mm) +
                  "/" + config::format_number(voxel_size_mm));
  std::call_once(e.once, [&] {
    parcellation::AtlasOptions opts;
    opts.fwhm_mm = fwhm_mm;
    opts.voxel_size_mm = voxel_size_mm;
    const Matrix prepared =
        parcellation::prepare_for_atlas(cohort_.voxel_data[position], cohort_.lattice_dims, opts);
    e.value = prepared.transpose() * prepared;
  });
  return e.value;
}

std::vector<SubjectRecord> subsample_records(const synthdata::Cohort &cohort,
                                             const config::PipelineConfig &config) {
  return evaluate::filter_subsample(cohort.subjects, evaluate::predicate_for(config.subsample));
}

FoldResult run_fold(Workspace &ws, const config::PipelineConfig &cfg, const evaluate::Fold &fold,
                    int fold_index) {
  const auto &cohort = ws.cohort();
  FoldResult out;
  out.fold = fold_index;
  out.train_ids = fold.train_ids;
  out.test_ids = fold.test_ids;
  if (fold.train_ids.empty() || fold.test_ids.empty()) {
    throw Error("fold " + std::to_string(fold_index) + " has an empty train or test set");
  }

  std::vector<std::size_t> positions;
  std::vector<SubjectRecord> records;
  for (const auto *ids : {&fold.train_ids, &fold.test_ids}) {
    for (int id : *ids) {
      positions.push_back(cohort.position(id));
      records.push_back(cohort.subjects[positions.back()]);
    }
  }
  const std::size_t n_train = fold.train_ids.size();

  auto t0 = Clock::now();
  parcellation::AtlasOptions opts;
  opts.method = cfg.atlas_method;
  opts.n_regions = cfg.n_regions;
  opts.fwhm_mm = cfg.smoothing_fwhm_mm;
  opts.voxel_size_mm = cfg.voxel_size_mm;
  opts.seed = derive_seed(cfg.master_seed, 0xa7000 + static_cast<std::uint64_t>(fold_index));
  opts.n_init = cfg.kmeans_n_init;
  const long n_time = cohort.voxel_data.empty() ? 0 : cohort.voxel_data.front().rows();
  std::vector<parcellation::AtlasInput> inputs;
  for (std::size_t i = 0; i < n_train; ++i) {
    inputs.push_back({fold.train_ids[i], parcellation::Split::train,
                      &ws.atlas_gram(positions[i], cfg.smoothing_fwhm_mm, cfg.voxel_size_mm),
                      n_time});
  }
  out.atlas = parcellation::fit_atlas(inputs, cohort.lattice_dims, opts);
  out.rois = parcellation::select_largest_rois(out.atlas, std::min(cfg.n_rois, out.atlas.n_regions));
  out.stage_seconds["atlas"] = seconds_since(t0);

  t0 = Clock::now();
  FeatureBlock block = build_features(ws, positions, n_train, fold.train_ids, out.rois.maps, cfg);
  out.tangent = std::move(block.tangent);
  out.features = std::move(block.features);
  out.stage_seconds["connectivity"] = seconds_since(t0);

  t0 = Clock::now();
  if (cfg.group_confounds) {
    const Matrix covariates = connectivity::group_covariates(records, sorted_sites(records));
    std::vector<bool> mask(records.size(), false);
    std::fill(mask.begin(), mask.begin() + static_cast<long>(n_train), true);
    std::vector<int> ids(fold.train_ids);
    ids.insert(ids.end(), fold.test_ids.begin(), fold.test_ids.end());
    out.group_model = connectivity::fit_group_confounds(out.features, covariates, mask, ids);
    out.features = out.group_model.apply(out.features, covariates);
    for (const auto &w : out.group_model.warnings) {
      out.warnings.push_back("group confounds: " + w);
    }
  }
  out.stage_seconds["group_confounds"] = seconds_since(t0);

  t0 = Clock::now();
  const auto n_test = static_cast<Eigen::Index>(fold.test_ids.size());
  const Matrix x_train = out.features.topRows(static_cast<Eigen::Index>(n_train));
  const Matrix x_test = out.features.bottomRows(n_test);
  Vector y_train(static_cast<Eigen::Index>(n_train));
  std::vector<int> strata(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    y_train(static_cast<Eigen::Index>(i)) = records[i].diagnosis;
    strata[i] = stratum(records[i]);
  }
  out.selection = classify::nested_select(
      x_train, y_train, strata, cfg.classifier, cfg.grid, cfg.inner_folds,
      derive_seed(cfg.master_seed, 0xc1000 + static_cast<std::uint64_t>(fold_index)),
      fold.train_ids);
  for (const auto &w : out.selection.warnings) {
    out.warnings.push_back("nested selection: " + w);
  }
  out.predictions = out.selection.model.predict(x_test);
  for (std::size_t i = n_train; i < records.size(); ++i) {
    out.truth.push_back(records[i].diagnosis);
  }
  out.scores = evaluate::score(out.predictions, out.truth);
  out.stage_seconds["classify"] = seconds_since(t0);

  auto audit = [&](const std::string &name, const std::vector<int> &used) {
    out.audit.push_back({name, fitted_on_train_only(used, fold.train_ids, fold.test_ids)});
  };
  audit("atlas", out.atlas.fit_subjects);
  if (cfg.matrix_kind == connectivity::MatrixKind::tangent) {
    audit("tangent_reference", out.tangent.fit_subjects);
  }
  if (cfg.group_confounds) {
    audit("group_confounds", out.group_model.fit_subjects);
  }
  audit("scaler_and_hyperparameters", out.selection.model.fit_subjects);
  out.leakage_free = std::all_of(out.audit.begin(), out.audit.end(),
                                 [](const AuditEntry &a) { return a.passed; });
  if (!out.leakage_free) {
    std::string failed;
    for (const auto &a : out.audit) {
      if (!a.passed) failed += " " + a.artifact;
    }
    throw Error("leakage audit failed in fold " + std::to_string(fold_index) + ":" + failed);
  }
  return out;
}

CvResult cross_validate(Workspace &ws, const config::PipelineConfig &cfg, int jobs) {
  const auto records = subsample_records(ws.cohort(), cfg);
  CvResult out;
  out.plan = evaluate::make_folds(records, cfg.scheme, cfg.master_seed, cfg.n_folds, cfg.test_fraction);
  out.folds.resize(out.plan.folds.size());
  parallel_for(out.plan.folds.size(), jobs, [&](std::size_t f) {
    out.folds[f] = run_fold(ws, cfg, out.plan.folds[f], static_cast<int>(f));
  });
  const std::string hash = cfg.hash();
  std::vector<double> acc;
  for (const auto &f : out.folds) {
    ScoreRecord r;
    r.config_hash = hash;
    r.options = cfg.option_levels();
    r.scheme = evaluate::to_string(cfg.scheme);
    r.subsample = evaluate::to_string(cfg.subsample);
    r.fold = f.fold;
    r.scores = f.scores;
    r.n_train = static_cast<int>(f.train_ids.size());
    r.n_test = static_cast<int>(f.test_ids.size());
    r.hyperparameter = f.selection.hyperparameter;
    out.records.push_back(std::move(r));
    acc.push_back(f.scores.accuracy);
  }
  out.mean_accuracy = stats::mean(acc);
  out.sd_accuracy = stats::sample_sd(acc);
  return out;
}

std::vector<CurveSummary> summarize_curve(const std::vector<CurvePoint> &points) {
  std::map<double, std::vector<double>> by_fraction;
  for (const auto &p : points) {
    by_fraction[p.fraction].push_back(p.accuracy);
  }
  std::vector<CurveSummary> out;
  for (const auto &[fraction, acc] : by_fraction) {
    CurveSummary s;
    s.fraction = fraction;
    s.mean = stats::mean(acc);
    s.n_folds = static_cast<int>(acc.size());
    s.standard_error = stats::sample_sd(acc) / std::sqrt(static_cast<double>(acc.size()));
    out.push_back(s);
  }
  return out;
}

LearningCurve learning_curve(Workspace &ws, const config::PipelineConfig &cfg,
                             const std::vector<double> &fractions, int jobs) {
  if (fractions.empty()) {
    throw ConfigError("learning curve needs at least one fraction");
  }
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError("learning curve fractions must lie in (0, 1]");
    }
  }
  std::vector<double> sorted_fractions = fractions;
  std::sort(sorted_fractions.begin(), sorted_fractions.end());
  const auto records = subsample_records(ws.cohort(), cfg);
  const auto plan =
      evaluate::make_folds(records, cfg.scheme, cfg.master_seed, cfg.n_folds, cfg.test_fraction);
  const auto &cohort = ws.cohort();

  // Shuffled strata of every fold's training pool; prefixes give nested subsets.
  std::vector<std::vector<std::vector<int>>> pools(plan.folds.size());
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    std::map<int, std::vector<int>> strata;
    for (int id : plan.folds[f].train_ids) {
      strata[stratum(cohort.subjects[cohort.position(id)])].push_back(id);
    }
    Rng rng(derive_seed(cfg.master_seed, 0x1c000 + f));
    for (auto &[key, members] : strata) {
      std::shuffle(members.begin(), members.end(), rng);
      pools[f].push_back(members);
    }
  }

  LearningCurve out;
  const std::size_t n_jobs = sorted_fractions.size() * plan.folds.size();
  out.points.resize(n_jobs);
  parallel_for(n_jobs, jobs, [&](std::size_t job) {
    const std::size_t fi = job / plan.folds.size();
    const std::size_t f = job % plan.folds.size();
    const double fraction = sorted_fractions[fi];
    evaluate::Fold subset;
    subset.test_ids = plan.folds[f].test_ids;
    for (const auto &members : pools[f]) {
      const auto size = static_cast<long>(members.size());
      const long take = std::clamp(std::lround(fraction * static_cast<double>(size)), 1L, size);
      subset.train_ids.insert(subset.train_ids.end(), members.begin(), members.begin() + take);
    }
    std::sort(subset.train_ids.begin(), subset.train_ids.end());
    std::set<int> classes;
    for (int id : subset.train_ids) {
      classes.insert(cohort.subjects[cohort.position(id)].diagnosis);
    }
    if (classes.size() < 2) {
      throw Error("learning curve fraction " + config::format_number(fraction) +
                  " yields a single-class training set");
    }
    const FoldResult r = run_fold(ws, cfg, subset, static_cast<int>(f));
    CurvePoint p;
    p.fraction = fraction;
    p.fold = static_cast<int>(f);
    p.n_train = static_cast<int>(subset.train_ids.size());
    p.accuracy = r.scores.accuracy;
    p.train_ids = subset.train_ids;
    out.points[job] = std::move(p);
  });
  out.summary = summarize_curve(out.points);
  return out;
}

MovementResult movement_prediction(const synthdata::Cohort &cohort,
                                   const config::PipelineConfig &cfg, int jobs) {
  const auto records = subsample_records(cohort, cfg);
  const auto plan =
      evaluate::make_folds(records, cfg.scheme, cfg.master_seed, cfg.n_folds, cfg.test_fraction);
  std::map<int, Vector> descriptors;
  MovementResult out;
  for (const auto &r : records) {
    const auto d = signal::motion_descriptors(r.motion);
    descriptors[r.subject_id] = d.values;
    out.descriptor_length = static_cast<int>(d.values.size());
  }
  const auto d = static_cast<Eigen::Index>(out.descriptor_length);
  out.folds.resize(plan.folds.size());
  parallel_for(plan.folds.size(), jobs, [&](std::size_t f) {
    const auto &fold = plan.folds[f];
    Matrix x_train(static_cast<Eigen::Index>(fold.train_ids.size()), d);
    Vector y_train(x_train.rows());
    std::vector<int> strata;
    for (std::size_t i = 0; i < fold.train_ids.size(); ++i) {
      const auto &r = cohort.subjects[cohort.position(fold.train_ids[i])];
      x_train.row(static_cast<Eigen::Index>(i)) = descriptors.at(r.subject_id).transpose();
      y_train(static_cast<Eigen::Index>(i)) = r.diagnosis;
      strata.push_back(stratum(r));
    }
    Matrix x_test(static_cast<Eigen::Index>(fold.test_ids.size()), d);
    std::vector<int> truth;
    for (std::size_t i = 0; i < fold.test_ids.size(); ++i) {
      const auto &r = cohort.subjects[cohort.position(fold.test_ids[i])];
      x_test.row(static_cast<Eigen::Index>(i)) = descriptors.at(r.subject_id).transpose();
      truth.push_back(r.diagnosis);
    }
    const auto sel = classify::nested_select(
        x_train, y_train, strata, classify::ClassifierKind::svc_l2, cfg.grid, cfg.inner_folds,
        derive_seed(cfg.master_seed, 0x30000 + f), fold.train_ids);
    out.folds[f] = evaluate::score(sel.model.predict(x_test), truth);
  });
  std::vector<double> acc;
  for (const auto &s : out.folds) {
    acc.push_back(s.accuracy);
  }
  out.mean_accuracy = stats::mean(acc);
  return out;
}

BiomarkerReport compute_biomarkers(Workspace &ws, const config::PipelineConfig &cfg,
                                   std::span<const Parcellation> fold_atlases,
                                   int n_permutations, int jobs, bool permute_labels_first) {
  BiomarkerReport out;
  out.n_permutations = n_permutations;
  out.consensus = parcellation::consensus_atlas(fold_atlases, 0.9);
  if (out.consensus.empty) {
    return out;
  }
  const auto &cohort = ws.cohort();
  const auto records = subsample_records(cohort, cfg);
  out.n_subjects = static_cast<int>(records.size());
  std::vector<std::size_t> positions;
  std::vector<int> ids;
  for (const auto &r : records) {
    positions.push_back(cohort.position(r.subject_id));
    ids.push_back(r.subject_id);
  }
  const auto maps = parcellation::indicator_maps(out.consensus.atlas);
  if (maps.maps.rows() < 2) {
    out.consensus.empty = true;
    return out;
  }
  FeatureBlock block = build_features(ws, positions, positions.size(), ids, maps.maps, cfg);
  Matrix x = std::move(block.features);
  if (cfg.group_confounds) {
    const Matrix covariates = connectivity::group_covariates(records, sorted_sites(records));
    x = connectivity::regress_out_group_confounds(x, covariates,
                                                  std::vector<bool>(records.size(), true));
  }
  Vector y(static_cast<Eigen::Index>(records.size()));
  std::vector<int> strata;
  for (std::size_t i = 0; i < records.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = records[i].diagnosis;
    strata.push_back(stratum(records[i]));
  }
  if (permute_labels_first) {
    std::vector<double> labels(y.data(), y.data() + y.size());
    Rng rng(derive_seed(cfg.master_seed, 0x9e000));
    std::shuffle(labels.begin(), labels.end(), rng);
    y = Eigen::Map<const Vector>(labels.data(), y.size());
  }
  const auto sel = classify::nested_select(x, y, strata, cfg.classifier, cfg.grid, cfg.inner_folds,
                                           derive_seed(cfg.master_seed, 0xb0000), ids);
  out.hyperparameter = sel.hyperparameter;
  const auto kind = cfg.classifier;
  const double hp = sel.hyperparameter;
  const classify::WeightFitter fitter = [kind, hp](const Matrix &xs, const Vector &ys) {
    return classify::fit_classifier(kind, xs, ys, hp).weights;
  };
  const auto sig = classify::permutation_weight_pvalues(
      fitter, x, y, n_permutations, derive_seed(cfg.master_seed, 0xb1000), jobs);

  const int k = static_cast<int>(maps.maps.rows());
  for (Eigen::Index f = 0; f < sig.p_values.size(); ++f) {
    const auto [i, j] = connectivity::feature_edge(static_cast<int>(f), k, cfg.matrix_kind);
    BiomarkerEdge e;
    e.feature = static_cast<int>(f);
    e.region_a = maps.region_ids[static_cast<std::size_t>(i)];
    e.region_b = maps.region_ids[static_cast<std::size_t>(j)];
    e.weight = sig.observed_weights(f);
    e.p_value = sig.p_values(f);
    e.direction = e.weight > 0.0 ? "case" : "control";
    out.edges.push_back(e);
  }
  std::stable_sort(out.edges.begin(), out.edges.end(), [](const auto &a, const auto &b) {
    if (a.p_value != b.p_value) return a.p_value < b.p_value;
    return std::abs(a.weight) > std::abs(b.weight);
  });
  return out;
}

} // namespace connectome::pipeline
