// connectome-kit: generate cohorts, run pipeline grids, report and extract
// biomarkers. Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include "connectome/config.hpp"
#include "connectome/io.hpp"
#include "connectome/pipeline.hpp"
#include "connectome/stats.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>

using namespace connectome;
namespace fs = std::filesystem;
using config::Json;

namespace {

constexpr const char *kVersion = "1.0.0";

struct Options {
  std::string config_path;
  std::string grid_path;
  std::string scores_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out = ".";
  std::optional<int> n_permutations;
};

Json module_versions() {
  Json j;
  for (const char *m : {"synthdata", "signal", "parcellation", "connectivity", "classify",
                        "evaluate", "cli"}) {
    j[m] = kVersion;
  }
  return j;
}

config::RunConfig load_config(const Options &opt) {
  if (opt.config_path.empty()) {
    throw ConfigError("--config is required");
  }
  auto rc = config::load_run_config(opt.config_path);
  if (opt.seed) {
    rc.master_seed = *opt.seed;
    rc.pipeline.master_seed = *opt.seed;
  }
  return rc;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Renders rows as an aligned plain-text table.
std::string table(const std::vector<std::vector<std::string>> &rows) {
  std::vector<std::size_t> width;
  for (const auto &r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (const auto &r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      line += pad(r[c], width[c] + 2);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

int cmd_generate(const Options &opt) {
  const auto rc = load_config(opt);
  const auto cohort = synthdata::generate_cohort(rc.cohort, rc.master_seed, opt.jobs);
  const fs::path dir = fs::path(opt.out) / "cohort";
  if (fs::exists(dir)) {
    fs::remove_all(dir);
  }
  const std::string hash = io::write_cohort(dir, cohort);
  Json manifest;
  manifest["command"] = "generate";
  manifest["version"] = kVersion;
  manifest["modules"] = module_versions();
  manifest["master_seed"] = rc.master_seed;
  manifest["cohort_config_hash"] = hex64(fnv1a(config::cohort_to_json(rc.cohort).dump()));
  manifest["cohort_hash"] = hash;
  manifest["n_subjects"] = cohort.subjects.size();
  io::write_text(fs::path(opt.out) / "generate_manifest.json", manifest.dump(2) + "\n");
  std::cout << "generated " << cohort.subjects.size() << " subjects in " << dir.string()
            << " (cohort " << hash << ")\n";
  return 0;
}

int cmd_run(const Options &opt) {
  const auto rc = load_config(opt);
  std::vector<config::PipelineConfig> pipelines{rc.pipeline};
  if (!opt.grid_path.empty()) {
    pipelines = config::expand_grid(rc.pipeline, config::load_json(opt.grid_path));
  }
  for (const auto &p : pipelines) {
    if (p.atlas_method == parcellation::AtlasMethod::ica ||
        p.atlas_method == parcellation::AtlasMethod::msdl) {
      throw ConfigError("atlas method '" + parcellation::to_string(p.atlas_method) +
                        "' is not implemented");
    }
  }
  const fs::path out(opt.out);
  const auto cohort = io::read_cohort(out / "cohort");
  const std::string cohort_hash = io::cohort_hash(out / "cohort");
  // Fold plans are checked up front so a grid fails before any compute.
  for (const auto &p : pipelines) {
    evaluate::make_folds(pipeline::subsample_records(cohort, p), p.scheme, p.master_seed,
                         p.n_folds, p.test_fraction);
  }

  pipeline::Workspace ws(cohort);
  std::vector<pipeline::ScoreRecord> records;
  std::string curve_rows = "config_hash,fraction,fold,n_train,accuracy\n";
  bool any_curve = false;
  Json manifest_pipelines = Json::array();
  Json timings = Json::array();
  int failures = 0;

  for (const auto &p : pipelines) {
    const std::string hash = p.hash();
    const fs::path run_dir = out / "runs" / hash;
    Json entry;
    entry["config_hash"] = hash;
    entry["config"] = p.to_json();
    io::write_text(run_dir / "config.json", p.to_json().dump(2) + "\n");
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto cv = pipeline::cross_validate(ws, p, opt.jobs);
      Json atlas_meta = Json::array();
      Json folds = Json::array();
      for (const auto &f : cv.folds) {
        const std::string fs_ = std::to_string(f.fold);
        const std::string atlas_file = "atlas_fold" + fs_ + ".csv";
        const std::string features_file = "features_fold" + fs_ + ".csv";
        const std::string model_file = "model_fold" + fs_ + ".json";
        io::write_text(run_dir / atlas_file, io::atlas_csv(f.atlas));
        std::vector<int> ids(f.train_ids);
        ids.insert(ids.end(), f.test_ids.begin(), f.test_ids.end());
        io::write_text(run_dir / features_file,
                       io::features_csv(ids, connectivity::to_string(p.matrix_kind), f.features));
        io::write_text(run_dir / model_file,
                       io::model_json(f.selection.model, hash).dump(2) + "\n");
        Json meta;
        meta["fold"] = f.fold;
        meta["method"] = parcellation::to_string(p.atlas_method);
        meta["n_regions"] = f.atlas.n_regions;
        meta["region_sizes"] = f.atlas.region_sizes();
        meta["selected_regions"] = f.rois.region_ids;
        meta["smoothing_fwhm_mm"] = p.smoothing_fwhm_mm;
        meta["fit_subjects"] = f.atlas.fit_subjects;
        atlas_meta.push_back(meta);
        Json audit;
        for (const auto &a : f.audit) audit[a.artifact] = a.passed;
        folds.push_back({{"fold", f.fold},
                         {"atlas", "runs/" + hash + "/" + atlas_file},
                         {"features", "runs/" + hash + "/" + features_file},
                         {"model", "runs/" + hash + "/" + model_file},
                         {"leakage_audit", audit},
                         {"warnings", f.warnings}});
        Json t = f.stage_seconds;
        timings.push_back({{"config_hash", hash}, {"fold", f.fold}, {"stage_seconds", t}});
      }
      io::write_text(run_dir / "atlas_meta.json", atlas_meta.dump(2) + "\n");
      entry["folds"] = folds;
      entry["mean_accuracy"] = cv.mean_accuracy;
      records.insert(records.end(), cv.records.begin(), cv.records.end());
      std::cout << hash << "  " << parcellation::to_string(p.atlas_method) << " "
                << connectivity::to_string(p.matrix_kind) << " "
                << classify::to_string(p.classifier) << "  mean accuracy "
                << fixed(cv.mean_accuracy) << "\n";

      if (!p.learning_curve_fractions.empty()) {
        const auto curve = pipeline::learning_curve(ws, p, p.learning_curve_fractions, opt.jobs);
        for (const auto &pt : curve.points) {
          curve_rows += hash + "," + io::format_double(pt.fraction) + "," +
                        std::to_string(pt.fold) + "," + std::to_string(pt.n_train) + "," +
                        io::format_double(pt.accuracy) + "\n";
        }
        any_curve = true;
      }
    } catch (const ConfigError &) {
      throw;
    } catch (const std::exception &e) {
      ++failures;
      entry["error"] = e.what();
      std::cerr << "pipeline " << hash << " failed: " << e.what() << "\n";
    }
    timings.push_back(
        {{"config_hash", hash},
         {"total_seconds",
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
    manifest_pipelines.push_back(entry);
  }

  io::write_text(out / "scores.csv", io::scores_csv(records));
  if (any_curve) {
    io::write_text(out / "learning_curve.csv", curve_rows);
  }
  std::vector<std::string> hashes;
  for (const auto &p : pipelines) hashes.push_back(p.hash());
  Json manifest;
  manifest["command"] = "run";
  manifest["version"] = kVersion;
  manifest["modules"] = module_versions();
  manifest["config_hashes"] = hashes;
  manifest["cohort_hash"] = cohort_hash;
  manifest["pipelines"] = manifest_pipelines;
  manifest["timings"] = "timings.json";
  manifest["failures"] = failures;
  io::write_text(out / "manifest.json", manifest.dump(2) + "\n");
  io::write_text(out / "timings.json", timings.dump(2) + "\n");
  std::cout << "wrote " << records.size() << " score rows to " << (out / "scores.csv").string()
            << "\n";
  return failures == 0 ? 0 : 3;
}

int cmd_report(const Options &opt) {
  const fs::path out(opt.out);
  const fs::path scores_path = opt.scores_path.empty() ? out / "scores.csv" : fs::path(opt.scores_path);
  const auto records = io::read_scores_csv(scores_path);
  std::vector<std::string> warnings;

  auto level_of = [](const pipeline::ScoreRecord &r, const std::string &factor) {
    if (factor == "scheme") return r.scheme;
    if (factor == "subsample") return r.subsample;
    return r.options.at(factor);
  };
  std::vector<std::string> candidates = config::option_factor_names();
  candidates.push_back("scheme");
  candidates.push_back("subsample");
  std::vector<std::string> factors;
  for (const auto &f : candidates) {
    std::set<std::string> levels;
    for (const auto &r : records) levels.insert(level_of(r, f));
    if (levels.size() >= 2) {
      factors.push_back(f);
    } else {
      warnings.push_back("factor '" + f + "' has a single level and is skipped");
    }
  }

  // Main-effects ANOVA on fold-level accuracy in percentage points.
  Json effects = Json::array();
  std::vector<std::vector<std::string>> effect_rows{{"factor", "level", "effect", "ci_low", "ci_high"}};
  if (!factors.empty()) {
    stats::FactorTable t;
    t.factor_names = factors;
    for (const auto &r : records) {
      std::vector<std::string> row;
      for (const auto &f : factors) row.push_back(level_of(r, f));
      t.levels.push_back(row);
      t.response.push_back(100.0 * r.scores.accuracy);
    }
    try {
      const auto a = stats::anova_effects(t);
      for (const auto &e : a.effects) {
        effects.push_back({{"factor", e.factor},
                           {"level", e.level},
                           {"coefficient", e.coefficient},
                           {"ci_low", e.ci_low},
                           {"ci_high", e.ci_high}});
        effect_rows.push_back(
            {e.factor, e.level, fixed(e.coefficient, 2), fixed(e.ci_low, 2), fixed(e.ci_high, 2)});
      }
    } catch (const Error &e) {
      warnings.push_back(std::string("anova skipped: ") + e.what());
    }
  } else {
    warnings.push_back("no factor varies; no effects estimated");
  }

  // Pairwise level comparisons, paired on every other option and the fold.
  struct Comparison {
    std::string factor, a, b;
    int n_pairs;
    double mean_diff;
    stats::WilcoxonResult w;
  };
  std::vector<Comparison> comparisons;
  for (const auto &f : factors) {
    std::map<std::string, std::map<std::string, double>> by_level;
    for (const auto &r : records) {
      std::string key;
      for (const auto &g : candidates) {
        if (g != f) key += level_of(r, g) + "|";
      }
      key += std::to_string(r.fold);
      by_level[level_of(r, f)][key] = r.scores.accuracy;
    }
    for (auto ia = by_level.begin(); ia != by_level.end(); ++ia) {
      for (auto ib = std::next(ia); ib != by_level.end(); ++ib) {
        std::vector<double> xa, xb;
        for (const auto &[key, acc] : ia->second) {
          const auto it = ib->second.find(key);
          if (it != ib->second.end()) {
            xa.push_back(acc);
            xb.push_back(it->second);
          }
        }
        if (xa.size() < 6) {
          warnings.push_back("comparison " + f + ": " + ia->first + " vs " + ib->first +
                             " has fewer than 6 pairs and is skipped");
          continue;
        }
        Comparison c{f, ia->first, ib->first, static_cast<int>(xa.size()), 0.0, {}};
        c.w = stats::wilcoxon_signed_rank(xa, xb);
        for (std::size_t i = 0; i < xa.size(); ++i) c.mean_diff += xb[i] - xa[i];
        c.mean_diff /= static_cast<double>(xa.size());
        comparisons.push_back(c);
      }
    }
  }
  std::vector<double> raw;
  for (const auto &c : comparisons) raw.push_back(c.w.p_value);
  const auto holm = stats::holm_correct(raw);
  std::string comp_csv = "factor,level_a,level_b,n_pairs,mean_diff,statistic,p_value,p_holm,exact,all_zero\n";
  std::vector<std::vector<std::string>> comp_rows{
      {"factor", "level_a", "level_b", "pairs", "mean(b-a)", "p", "p_holm"}};
  Json comp_json = Json::array();
  for (std::size_t i = 0; i < comparisons.size(); ++i) {
    const auto &c = comparisons[i];
    comp_csv += c.factor + "," + c.a + "," + c.b + "," + std::to_string(c.n_pairs) + "," +
                io::format_double(c.mean_diff) + "," + io::format_double(c.w.statistic) + "," +
                io::format_double(c.w.p_value) + "," + io::format_double(holm[i]) + "," +
                (c.w.exact ? "1" : "0") + "," + (c.w.all_zero ? "1" : "0") + "\n";
    comp_rows.push_back({c.factor, c.a, c.b, std::to_string(c.n_pairs), fixed(c.mean_diff),
                         fixed(c.w.p_value), fixed(holm[i])});
    comp_json.push_back({{"factor", c.factor},
                         {"level_a", c.a},
                         {"level_b", c.b},
                         {"n_pairs", c.n_pairs},
                         {"mean_diff", c.mean_diff},
                         {"p_value", c.w.p_value},
                         {"p_holm", holm[i]},
                         {"all_zero", c.w.all_zero}});
  }

  // Top decile of pipelines per option level.
  std::map<std::string, std::pair<std::map<std::string, std::string>, std::vector<double>>> by_hash;
  for (const auto &r : records) {
    auto &slot = by_hash[r.config_hash + "|" + r.scheme + "|" + r.subsample];
    slot.first = r.options;
    slot.first["scheme"] = r.scheme;
    slot.first["subsample"] = r.subsample;
    slot.second.push_back(r.scores.accuracy);
  }
  std::vector<evaluate::PipelineScore> pipes;
  for (const auto &[key, v] : by_hash) {
    pipes.push_back({v.first, stats::mean(v.second)});
  }
  const auto decile = evaluate::top_decile(pipes, factors);
  std::string decile_csv = "factor,level,n_pipelines,n_kept,mean,sd,fallback\n";
  std::vector<std::vector<std::string>> decile_rows{
      {"factor", "level", "pipelines", "kept", "mean", "sd"}};
  for (const auto &d : decile) {
    decile_csv += d.factor + "," + d.level + "," + std::to_string(d.n_pipelines) + "," +
                  std::to_string(d.n_kept) + "," + io::format_double(d.mean) + "," +
                  io::format_double(d.sd) + "," + (d.fallback ? "1" : "0") + "\n";
    decile_rows.push_back({d.factor, d.level, std::to_string(d.n_pipelines),
                           std::to_string(d.n_kept), fixed(d.mean), fixed(d.sd)});
    if (d.fallback) {
      warnings.push_back("top decile for " + d.factor + "=" + d.level +
                         " uses the single best pipeline (fewer than 10 pipelines)");
    }
  }

  // Learning curves, when the run produced them.
  const fs::path curve_file = scores_path.parent_path() / "learning_curve.csv";
  std::string curves = "config_hash,fraction,mean_accuracy,standard_error,n_folds\n";
  std::vector<std::vector<std::string>> curve_rows{{"config_hash", "fraction", "mean", "se"}};
  if (fs::exists(curve_file)) {
    std::map<std::string, std::vector<pipeline::CurvePoint>> by_config;
    const auto rows = io::read_csv(curve_file);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      pipeline::CurvePoint p;
      p.fraction = std::stod(rows[i].at(1));
      p.fold = std::stoi(rows[i].at(2));
      p.n_train = std::stoi(rows[i].at(3));
      p.accuracy = std::stod(rows[i].at(4));
      by_config[rows[i].at(0)].push_back(p);
    }
    for (const auto &[hash, pts] : by_config) {
      for (const auto &s : pipeline::summarize_curve(pts)) {
        curves += hash + "," + io::format_double(s.fraction) + "," + io::format_double(s.mean) +
                  "," + io::format_double(s.standard_error) + "," + std::to_string(s.n_folds) +
                  "\n";
        curve_rows.push_back({hash, fixed(s.fraction, 2), fixed(s.mean), fixed(s.standard_error)});
      }
    }
  }

  Json effects_doc;
  effects_doc["effects"] = effects;
  effects_doc["comparisons"] = comp_json;
  effects_doc["warnings"] = warnings;
  io::write_text(out / "effects.json", effects_doc.dump(2) + "\n");
  io::write_text(out / "comparisons.csv", comp_csv);
  io::write_text(out / "top_decile.csv", decile_csv);
  io::write_text(out / "curves.csv", curves);

  std::string text = "Effects on accuracy (points relative to the mean)\n" + table(effect_rows) +
                     "\nPairwise comparisons (Wilcoxon signed-rank, Holm corrected)\n" +
                     table(comp_rows) + "\nTop-decile pipelines per option level\n" +
                     table(decile_rows);
  if (curve_rows.size() > 1) {
    text += "\nLearning curves\n" + table(curve_rows);
  }
  if (!warnings.empty()) {
    text += "\nWarnings\n";
    for (const auto &w : warnings) text += "  " + w + "\n";
  }
  io::write_text(out / "report.txt", text);
  std::cout << text;
  return 0;
}

int cmd_biomarkers(const Options &opt) {
  const auto rc = load_config(opt);
  const fs::path out(opt.out);
  const auto cohort = io::read_cohort(out / "cohort");
  const auto &p = rc.pipeline;
  const fs::path run_dir = out / "runs" / p.hash();
  std::vector<Parcellation> atlases;
  for (int f = 0;; ++f) {
    const fs::path file = run_dir / ("atlas_fold" + std::to_string(f) + ".csv");
    if (!fs::exists(file)) break;
    atlases.push_back(io::read_atlas_csv(file, cohort.lattice_dims));
  }
  if (atlases.size() < 2) {
    throw Error("biomarkers need the fold atlases of pipeline " + p.hash() + " in " +
                run_dir.string() + " (run 'run' with the same config first)");
  }
  const int n_perm = opt.n_permutations.value_or(p.n_permutations);
  pipeline::Workspace ws(cohort);
  const auto report = pipeline::compute_biomarkers(ws, p, atlases, n_perm, opt.jobs);

  Json doc;
  doc["config_hash"] = p.hash();
  doc["n_permutations"] = n_perm;
  doc["consensus_empty"] = report.consensus.empty;
  if (report.consensus.empty) {
    io::write_text(out / "biomarkers.json", doc.dump(2) + "\n");
    std::cerr << "consensus atlas is empty: no region reaches DICE 0.9 across folds\n";
    return 0;
  }
  io::write_text(out / "consensus_atlas.csv", io::atlas_csv(report.consensus.atlas));
  doc["n_consensus_regions"] = report.consensus.atlas.n_regions;
  doc["hyperparameter"] = report.hyperparameter;
  doc["n_subjects"] = report.n_subjects;
  doc["min_attainable_p"] = 1.0 / (n_perm + 1.0);
  std::string csv = "rank,feature,region_a,region_b,weight,p_value,direction\n";
  Json edges = Json::array();
  for (std::size_t i = 0; i < report.edges.size(); ++i) {
    const auto &e = report.edges[i];
    csv += std::to_string(i + 1) + "," + std::to_string(e.feature) + "," +
           std::to_string(e.region_a) + "," + std::to_string(e.region_b) + "," +
           io::format_double(e.weight) + "," + io::format_double(e.p_value) + "," + e.direction +
           "\n";
    if (e.region_a != e.region_b && e.p_value < 0.05) {
      edges.push_back({{"region_a", e.region_a},
                       {"region_b", e.region_b},
                       {"weight", e.weight},
                       {"p_value", e.p_value},
                       {"direction", e.direction}});
    }
  }
  doc["significant_edges"] = edges;
  io::write_text(out / "biomarkers.csv", csv);
  io::write_text(out / "biomarkers.json", doc.dump(2) + "\n");
  std::cout << "consensus regions: " << report.consensus.atlas.n_regions
            << ", connections with p < 0.05: " << edges.size() << "\n";
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Connectome-based diagnosis prediction toolkit"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", opt.config_path, "JSON configuration file");
    sub->add_option("--seed", opt.seed, "Master seed (overrides the config)");
    sub->add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Output directory");
  };
  auto *gen = app.add_subcommand("generate", "Generate a synthetic cohort");
  add_common(gen);
  auto *run = app.add_subcommand("run", "Cross-validate a pipeline grid");
  add_common(run);
  run->add_option("--grid", opt.grid_path, "JSON grid of pipeline options");
  auto *rep = app.add_subcommand("report", "ANOVA effects, comparisons and curves");
  add_common(rep);
  rep->add_option("--scores", opt.scores_path, "Score table (default <out>/scores.csv)");
  auto *bio = app.add_subcommand("biomarkers", "Consensus atlas and weight significance");
  add_common(bio);
  bio->add_option("--n-permutations", opt.n_permutations, "Label permutations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(opt);
    if (run->parsed()) return cmd_run(opt);
    if (rep->parsed()) return cmd_report(opt);
    if (bio->parsed()) return cmd_biomarkers(opt);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
