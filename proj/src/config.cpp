#include "connectome/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

namespace connectome::config {

namespace {

std::string type_name(const Json &j) { return j.type_name(); }

/// Walks one JSON object, remembering which keys were read so leftovers
/// can be reported as unknown.
class ObjectReader {
public:
  ObjectReader(const Json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError(path_ + ": expected object, got " + type_name(j_));
    }
  }

  const Json *find(const std::string &key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string at(const std::string &key) const { return path_ + "." + key; }

  void read(const std::string &key, int &out) {
    if (const Json *v = find(key)) {
      if (!v->is_number_integer()) {
        throw ConfigError(at(key) + ": expected integer, got " + type_name(*v));
      }
      out = v->get<int>();
    }
  }

  void read(const std::string &key, std::uint64_t &out) {
    if (const Json *v = find(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                       v->get<std::int64_t>() < 0)) {
        throw ConfigError(at(key) + ": expected non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string &key, double &out) {
    if (const Json *v = find(key)) {
      if (!v->is_number()) {
        throw ConfigError(at(key) + ": expected number, got " + type_name(*v));
      }
      out = v->get<double>();
    }
  }

  void read(const std::string &key, bool &out) {
    if (const Json *v = find(key)) {
      if (!v->is_boolean()) {
        throw ConfigError(at(key) + ": expected boolean, got " + type_name(*v));
      }
      out = v->get<bool>();
    }
  }

  void read(const std::string &key, std::vector<double> &out) {
    if (const Json *v = find(key)) {
      if (!v->is_array()) {
        throw ConfigError(at(key) + ": expected array, got " + type_name(*v));
      }
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) {
          throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected number");
        }
        out.push_back((*v)[i].get<double>());
      }
    }
  }

  void read(const std::string &key, std::vector<int> &out) {
    if (const Json *v = find(key)) {
      if (!v->is_array()) {
        throw ConfigError(at(key) + ": expected array, got " + type_name(*v));
      }
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number_integer()) {
          throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected integer");
        }
        out.push_back((*v)[i].get<int>());
      }
    }
  }

  void read(const std::string &key, synthdata::Range &out) {
    if (const Json *v = find(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        throw ConfigError(at(key) + ": expected [lo, hi]");
      }
      out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
  }

  template <typename Enum, typename Parse>
  void read_enum(const std::string &key, Enum &out, Parse parse) {
    if (const Json *v = find(key)) {
      if (!v->is_string()) {
        throw ConfigError(at(key) + ": expected string, got " + type_name(*v));
      }
      try {
        out = parse(v->get<std::string>());
      } catch (const ConfigError &e) {
        throw ConfigError(at(key) + ": " + e.what());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.count(it.key()) == 0) {
        throw ConfigError(at(it.key()) + ": unknown key");
      }
    }
  }

private:
  const Json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_pipeline(PipelineConfig &c, const Json &j, const std::string &path) {
  ObjectReader r(j, path);
  r.read_enum("atlas_method", c.atlas_method, parcellation::parse_atlas_method);
  r.read("smoothing_fwhm_mm", c.smoothing_fwhm_mm);
  r.read("voxel_size_mm", c.voxel_size_mm);
  r.read("n_regions", c.n_regions);
  r.read("n_rois", c.n_rois);
  r.read_enum("matrix_kind", c.matrix_kind, connectivity::parse_matrix_kind);
  r.read_enum("classifier", c.classifier, classify::parse_classifier);
  r.read_enum("scheme", c.scheme, evaluate::parse_scheme);
  r.read_enum("subsample", c.subsample, evaluate::parse_subsample);
  r.read("master_seed", c.master_seed);
  r.read("grid", c.grid);
  r.read("inner_folds", c.inner_folds);
  r.read("n_folds", c.n_folds);
  r.read("test_fraction", c.test_fraction);
  r.read("regress_motion", c.regress_motion);
  r.read("group_confounds", c.group_confounds);
  r.read("kmeans_n_init", c.kmeans_n_init);
  r.read("learning_curve_fractions", c.learning_curve_fractions);
  r.read("n_permutations", c.n_permutations);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError &e) {
    throw ConfigError(path + ": " + e.what());
  }
}

} // namespace

void PipelineConfig::validate() const {
  if (n_regions < 2) throw ConfigError("n_regions must be >= 2");
  if (n_rois < 2) throw ConfigError("n_rois must be >= 2");
  if (smoothing_fwhm_mm < 0.0) throw ConfigError("smoothing_fwhm_mm must be >= 0");
  if (voxel_size_mm <= 0.0) throw ConfigError("voxel_size_mm must be > 0");
  if (grid.empty()) throw ConfigError("grid must not be empty");
  for (double g : grid) {
    if (!(g > 0.0)) throw ConfigError("grid values must be > 0");
  }
  if (inner_folds < 2) throw ConfigError("inner_folds must be >= 2");
  if (n_folds < 1) throw ConfigError("n_folds must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (kmeans_n_init < 1) throw ConfigError("kmeans_n_init must be >= 1");
  for (double f : learning_curve_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("learning_curve_fractions must lie in (0, 1]");
  }
  if (n_permutations < 1) throw ConfigError("n_permutations must be >= 1");
}

Json PipelineConfig::to_json() const {
  Json j;
  j["atlas_method"] = parcellation::to_string(atlas_method);
  j["smoothing_fwhm_mm"] = smoothing_fwhm_mm;
  j["voxel_size_mm"] = voxel_size_mm;
  j["n_regions"] = n_regions;
  j["n_rois"] = n_rois;
  j["matrix_kind"] = connectivity::to_string(matrix_kind);
  j["classifier"] = classify::to_string(classifier);
  j["scheme"] = evaluate::to_string(scheme);
  j["subsample"] = evaluate::to_string(subsample);
  j["master_seed"] = master_seed;
  j["grid"] = grid;
  j["inner_folds"] = inner_folds;
  j["n_folds"] = n_folds;
  j["test_fraction"] = test_fraction;
  j["regress_motion"] = regress_motion;
  j["group_confounds"] = group_confounds;
  j["kmeans_n_init"] = kmeans_n_init;
  j["learning_curve_fractions"] = learning_curve_fractions;
  j["n_permutations"] = n_permutations;
  return j;
}

std::string PipelineConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

std::map<std::string, std::string> PipelineConfig::option_levels() const {
  return {{"atlas_method", parcellation::to_string(atlas_method)},
          {"smoothing_fwhm_mm", format_number(smoothing_fwhm_mm)},
          {"n_regions", std::to_string(n_regions)},
          {"matrix_kind", connectivity::to_string(matrix_kind)},
          {"classifier", classify::to_string(classifier)}};
}

const std::vector<std::string> &option_factor_names() {
  static const std::vector<std::string> names{"atlas_method", "smoothing_fwhm_mm", "n_regions",
                                              "matrix_kind", "classifier"};
  return names;
}

synthdata::CohortConfig parse_cohort(const Json &j, const std::string &path) {
  synthdata::CohortConfig c;
  ObjectReader r(j, path);
  r.read("n_sites", c.n_sites);
  r.read("site_sizes", c.site_sizes);
  r.read("subjects_per_site", c.subjects_per_site);
  r.read("case_fraction", c.case_fraction);
  r.read("n_timepoints", c.n_timepoints);
  r.read("k_regions", c.k_regions);
  if (const Json *v = r.find("lattice")) {
    if (!v->is_array() || v->size() != 3 || !(*v)[0].is_number_integer() ||
        !(*v)[1].is_number_integer() || !(*v)[2].is_number_integer()) {
      throw ConfigError(r.at("lattice") + ": expected [nx, ny, nz] integers");
    }
    c.lattice = {(*v)[0].get<int>(), (*v)[1].get<int>(), (*v)[2].get<int>()};
  }
  r.read("effect_size", c.effect_size);
  r.read("n_discriminative_edges", c.n_discriminative_edges);
  r.read("covariance_rank", c.covariance_rank);
  r.read("covariance_loading_sd", c.covariance_loading_sd);
  r.read("site_gain", c.site_gain);
  r.read("site_offset", c.site_offset);
  r.read("site_noise_sd", c.site_noise_sd);
  r.read("drift", c.drift);
  r.read("drift_sd", c.drift_sd);
  r.read("motion_nuisance", c.motion_nuisance);
  r.read("motion_nuisance_scale", c.motion_nuisance_scale);
  r.read("translation_step_sd", c.translation_step_sd);
  r.read("rotation_step_sd", c.rotation_step_sd);
  r.read("motion_diagnosis_coupling", c.motion_diagnosis_coupling);
  r.read("n_physio_sources", c.n_physio_sources);
  r.read("physio_noise_scale", c.physio_noise_scale);
  r.read("physio_voxel_fraction", c.physio_voxel_fraction);
  r.read("age", c.age);
  r.read("male_fraction", c.male_fraction);
  r.read("right_handed_fraction", c.right_handed_fraction);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError &e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

Json cohort_to_json(const synthdata::CohortConfig &c) {
  Json j;
  j["n_sites"] = c.n_sites;
  j["site_sizes"] = c.site_sizes;
  j["subjects_per_site"] = c.subjects_per_site;
  j["case_fraction"] = c.case_fraction;
  j["n_timepoints"] = c.n_timepoints;
  j["k_regions"] = c.k_regions;
  j["lattice"] = {c.lattice.nx, c.lattice.ny, c.lattice.nz};
  j["effect_size"] = c.effect_size;
  j["n_discriminative_edges"] = c.n_discriminative_edges;
  j["covariance_rank"] = c.covariance_rank;
  j["covariance_loading_sd"] = c.covariance_loading_sd;
  j["site_gain"] = {c.site_gain.lo, c.site_gain.hi};
  j["site_offset"] = {c.site_offset.lo, c.site_offset.hi};
  j["site_noise_sd"] = {c.site_noise_sd.lo, c.site_noise_sd.hi};
  j["drift"] = c.drift;
  j["drift_sd"] = c.drift_sd;
  j["motion_nuisance"] = c.motion_nuisance;
  j["motion_nuisance_scale"] = c.motion_nuisance_scale;
  j["translation_step_sd"] = c.translation_step_sd;
  j["rotation_step_sd"] = c.rotation_step_sd;
  j["motion_diagnosis_coupling"] = c.motion_diagnosis_coupling;
  j["n_physio_sources"] = c.n_physio_sources;
  j["physio_noise_scale"] = c.physio_noise_scale;
  j["physio_voxel_fraction"] = c.physio_voxel_fraction;
  j["age"] = {c.age.lo, c.age.hi};
  j["male_fraction"] = c.male_fraction;
  j["right_handed_fraction"] = c.right_handed_fraction;
  return j;
}

PipelineConfig parse_pipeline(const Json &j, const std::string &path) {
  PipelineConfig c;
  apply_pipeline(c, j, path);
  return c;
}

RunConfig parse_run_config(const Json &j) {
  RunConfig rc;
  ObjectReader r(j, "$");
  r.read("master_seed", rc.master_seed);
  if (const Json *c = r.find("cohort")) {
    rc.cohort = parse_cohort(*c, "$.cohort");
  }
  if (const Json *p = r.find("pipeline")) {
    rc.pipeline = parse_pipeline(*p, "$.pipeline");
  }
  r.finish();
  rc.pipeline.master_seed = rc.master_seed;
  return rc;
}

Json load_json(const std::string &file) {
  std::ifstream in(file);
  if (!in) {
    throw ConfigError("cannot open " + file);
  }
  try {
    return Json::parse(in);
  } catch (const Json::parse_error &e) {
    throw ConfigError(file + ": invalid JSON: " + e.what());
  }
}

RunConfig load_run_config(const std::string &file) { return parse_run_config(load_json(file)); }

std::vector<PipelineConfig> expand_grid(const PipelineConfig &base, const Json &grid) {
  if (!grid.is_object()) {
    throw ConfigError("$: grid must be an object of arrays");
  }
  std::vector<std::pair<std::string, Json>> axes;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (!it.value().is_array() || it.value().empty()) {
      throw ConfigError("$." + it.key() + ": expected nonempty array of levels");
    }
    axes.emplace_back(it.key(), it.value());
  }
  std::sort(axes.begin(), axes.end(),
            [](const auto &a, const auto &b) { return a.first < b.first; });
  std::vector<PipelineConfig> out{base};
  for (const auto &[key, values] : axes) {
    std::vector<PipelineConfig> next;
    for (const auto &cfg : out) {
      for (std::size_t v = 0; v < values.size(); ++v) {
        PipelineConfig c = cfg;
        Json patch;
        patch[key] = values[v];
        apply_pipeline(c, patch, "$");
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  if (std::strtod(buf, nullptr) != v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
  }
  return buf;
}

} // namespace connectome::config
