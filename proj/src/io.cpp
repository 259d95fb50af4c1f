#include "connectome/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace connectome::io {

namespace {

std::string subject_file(int id, const char *what) {
  return "sub-" + std::to_string(id) + "_" + what + ".csv";
}

double to_double(const std::string &s, const fs::path &file) {
  char *end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) {
    throw Error(file.string() + ": not a number: '" + s + "'");
  }
  return v;
}

int to_int(const std::string &s, const fs::path &file) {
  try {
    return std::stoi(s);
  } catch (const std::exception &) {
    throw Error(file.string() + ": not an integer: '" + s + "'");
  }
}

config::Json matrix_json(const Matrix &m) {
  config::Json rows = config::Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row[static_cast<std::size_t>(j)] = m(i, j);
    }
    rows.push_back(row);
  }
  return rows;
}

Matrix json_matrix(const config::Json &rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n == 0 ? 0 : static_cast<Eigen::Index>(rows[0].size());
  Matrix out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
  }
  return out;
}

} // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path &file, const std::string &text) {
  if (file.has_parent_path()) {
    fs::create_directories(file.parent_path());
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw Error("cannot write " + file.string());
  }
  out << text;
}

std::string read_text(const fs::path &file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw Error("cannot read " + file.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path &file) {
  std::istringstream in(read_text(file));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      cells.push_back(cell);
    }
    if (line.back() == ',') {
      cells.emplace_back();
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string matrix_csv(const Matrix &m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

Matrix parse_matrix_csv(const fs::path &file) {
  const auto rows = read_csv(file);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = n == 0 ? 0 : static_cast<Eigen::Index>(rows[0].size());
  Matrix out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto &row = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != m) {
      throw Error(file.string() + ": ragged row " + std::to_string(i + 1));
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      out(i, j) = to_double(row[static_cast<std::size_t>(j)], file);
    }
  }
  return out;
}

std::string write_cohort(const fs::path &dir, const synthdata::Cohort &cohort) {
  fs::create_directories(dir);
  config::Json meta;
  meta["master_seed"] = cohort.master_seed;
  meta["config"] = config::cohort_to_json(cohort.config);
  meta["n_subjects"] = cohort.subjects.size();
  meta["lattice"] = {cohort.lattice_dims.nx, cohort.lattice_dims.ny, cohort.lattice_dims.nz};
  write_text(dir / "cohort.json", meta.dump(2) + "\n");

  std::string pheno = "subject_id,site_id,diagnosis,age,sex,handedness\n";
  for (const auto &r : cohort.subjects) {
    pheno += std::to_string(r.subject_id) + "," + std::to_string(r.site_id) + "," +
             std::to_string(r.diagnosis) + "," + format_double(r.age) + "," +
             std::to_string(r.sex) + "," + std::to_string(r.handedness) + "\n";
  }
  write_text(dir / "phenotype.csv", pheno);

  const auto &gt = cohort.ground_truth;
  config::Json truth;
  truth["atlas"] = gt.atlas.labels;
  truth["n_regions"] = gt.atlas.n_regions;
  truth["base_covariance"] = matrix_json(gt.base_covariance);
  config::Json edges = config::Json::array();
  for (const auto &e : gt.edges) {
    edges.push_back({{"i", e.i}, {"j", e.j}, {"delta", e.delta}});
  }
  truth["edges"] = edges;
  config::Json sites = config::Json::array();
  for (const auto &s : gt.sites) {
    sites.push_back({{"gain", s.gain}, {"offset", s.offset}, {"noise_sd", s.noise_sd}});
  }
  truth["sites"] = sites;
  truth["physio_voxels"] = gt.physio_voxels;
  write_text(dir / "ground_truth.json", truth.dump(2) + "\n");

  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const int id = cohort.subjects[i].subject_id;
    write_text(dir / subject_file(id, "voxels"), matrix_csv(cohort.voxel_data[i]));
    write_text(dir / subject_file(id, "motion"), matrix_csv(cohort.subjects[i].motion));
    if (i < cohort.noise_regressors.size()) {
      write_text(dir / subject_file(id, "noise"), matrix_csv(cohort.noise_regressors[i]));
    }
  }
  return cohort_hash(dir);
}

synthdata::Cohort read_cohort(const fs::path &dir) {
  if (!fs::exists(dir / "cohort.json")) {
    throw Error("no cohort at " + dir.string() + " (run 'generate' first)");
  }
  synthdata::Cohort cohort;
  const auto meta = config::Json::parse(read_text(dir / "cohort.json"));
  cohort.master_seed = meta.at("master_seed").get<std::uint64_t>();
  cohort.config = config::parse_cohort(meta.at("config"), "cohort.json:$.config");
  const auto &lat = meta.at("lattice");
  cohort.lattice_dims = {lat[0].get<int>(), lat[1].get<int>(), lat[2].get<int>()};

  const auto truth = config::Json::parse(read_text(dir / "ground_truth.json"));
  auto &gt = cohort.ground_truth;
  gt.atlas.labels = truth.at("atlas").get<std::vector<int>>();
  gt.atlas.n_regions = truth.at("n_regions").get<int>();
  gt.atlas.dims = cohort.lattice_dims;
  gt.base_covariance = json_matrix(truth.at("base_covariance"));
  for (const auto &e : truth.at("edges")) {
    gt.edges.push_back({e.at("i").get<int>(), e.at("j").get<int>(), e.at("delta").get<double>()});
  }
  for (const auto &s : truth.at("sites")) {
    gt.sites.push_back(
        {s.at("gain").get<double>(), s.at("offset").get<double>(), s.at("noise_sd").get<double>()});
  }
  gt.physio_voxels = truth.at("physio_voxels").get<std::vector<int>>();

  const auto pheno_file = dir / "phenotype.csv";
  const auto rows = read_csv(pheno_file);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto &row = rows[i];
    if (row.size() != 6) {
      throw Error(pheno_file.string() + ": expected 6 columns on line " + std::to_string(i + 1));
    }
    SubjectRecord r;
    r.subject_id = to_int(row[0], pheno_file);
    r.site_id = to_int(row[1], pheno_file);
    r.diagnosis = to_int(row[2], pheno_file);
    r.age = to_double(row[3], pheno_file);
    r.sex = to_int(row[4], pheno_file);
    r.handedness = to_int(row[5], pheno_file);
    r.motion = parse_matrix_csv(dir / subject_file(r.subject_id, "motion"));
    cohort.voxel_data.push_back(parse_matrix_csv(dir / subject_file(r.subject_id, "voxels")));
    const auto noise_file = dir / subject_file(r.subject_id, "noise");
    cohort.noise_regressors.push_back(fs::exists(noise_file)
                                          ? parse_matrix_csv(noise_file)
                                          : Matrix(cohort.voxel_data.back().rows(), 0));
    cohort.subjects.push_back(std::move(r));
  }
  return cohort;
}

std::string cohort_hash(const fs::path &dir) {
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto &f : files) {
    h = fnv1a(f.filename().string(), h);
    h = fnv1a(read_text(f), h);
  }
  return hex64(h);
}

std::string atlas_csv(const Parcellation &atlas) {
  std::string out = "voxel,label\n";
  for (std::size_t v = 0; v < atlas.labels.size(); ++v) {
    out += std::to_string(v) + "," + std::to_string(atlas.labels[v]) + "\n";
  }
  return out;
}

Parcellation read_atlas_csv(const fs::path &file, const LatticeDims &dims) {
  const auto rows = read_csv(file);
  Parcellation p;
  p.dims = dims;
  p.labels.assign(dims.voxel_count(), -1);
  int max_label = -1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2) {
      throw Error(file.string() + ": expected voxel,label on line " + std::to_string(i + 1));
    }
    const int v = to_int(rows[i][0], file);
    const int label = to_int(rows[i][1], file);
    if (v < 0 || static_cast<std::size_t>(v) >= p.labels.size()) {
      throw Error(file.string() + ": voxel index out of range");
    }
    p.labels[static_cast<std::size_t>(v)] = label;
    max_label = std::max(max_label, label);
  }
  p.n_regions = max_label + 1;
  return p;
}

std::string features_csv(std::span<const int> subject_ids, const std::string &kind,
                         const Matrix &features) {
  std::string out = "subject_id,kind";
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    out += ",f" + std::to_string(j);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out += std::to_string(subject_ids[static_cast<std::size_t>(i)]) + "," + kind;
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      out += "," + format_double(features(i, j));
    }
    out += '\n';
  }
  return out;
}

config::Json model_json(const classify::LinearModel &model, const std::string &config_hash) {
  auto vec = [](const Vector &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  config::Json j;
  j["config_hash"] = config_hash;
  j["penalty"] = model.penalty == classify::Penalty::l1 ? "l1" : "l2";
  j["loss"] = model.loss == classify::Loss::ridge ? "ridge" : "squared_hinge";
  j["hyperparameter"] = model.hyperparameter;
  j["intercept"] = model.intercept;
  j["weights"] = vec(model.weights);
  j["scaler"] = {{"mean", vec(model.scaler.mean)}, {"scale", vec(model.scaler.scale)}};
  j["fit_subjects"] = model.fit_subjects;
  return j;
}

std::string scores_csv(std::vector<pipeline::ScoreRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const auto &a, const auto &b) {
    if (a.config_hash != b.config_hash) return a.config_hash < b.config_hash;
    return a.fold < b.fold;
  });
  const auto &factors = config::option_factor_names();
  std::string out = "config_hash,scheme,subsample";
  for (const auto &f : factors) {
    out += "," + f;
  }
  out += ",fold,accuracy,specificity,sensitivity,n_cases,n_controls,n_train,n_test,"
         "hyperparameter\n";
  for (const auto &r : records) {
    out += r.config_hash + "," + r.scheme + "," + r.subsample;
    for (const auto &f : factors) {
      const auto it = r.options.find(f);
      out += "," + (it == r.options.end() ? std::string() : it->second);
    }
    out += "," + std::to_string(r.fold) + "," + format_double(r.scores.accuracy) + "," +
           format_double(r.scores.specificity) + "," + format_double(r.scores.sensitivity) + "," +
           std::to_string(r.scores.n_cases) + "," + std::to_string(r.scores.n_controls) + "," +
           std::to_string(r.n_train) + "," + std::to_string(r.n_test) + "," +
           format_double(r.hyperparameter) + "\n";
  }
  return out;
}

std::vector<pipeline::ScoreRecord> read_scores_csv(const fs::path &file) {
  const auto rows = read_csv(file);
  if (rows.empty()) {
    throw Error(file.string() + ": empty score table");
  }
  const auto &header = rows[0];
  auto col = [&](const std::string &name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(file.string() + ": missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_hash = col("config_hash");
  const std::size_t c_scheme = col("scheme");
  const std::size_t c_sub = col("subsample");
  const std::size_t c_fold = col("fold");
  const std::size_t c_acc = col("accuracy");
  const std::size_t c_spec = col("specificity");
  const std::size_t c_sens = col("sensitivity");
  const std::size_t c_cases = col("n_cases");
  const std::size_t c_controls = col("n_controls");
  const std::size_t c_train = col("n_train");
  const std::size_t c_test = col("n_test");
  const std::size_t c_hp = col("hyperparameter");
  std::vector<std::pair<std::string, std::size_t>> factor_cols;
  for (const auto &f : config::option_factor_names()) {
    factor_cols.emplace_back(f, col(f));
  }
  std::vector<pipeline::ScoreRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto &row = rows[i];
    if (row.size() != header.size()) {
      throw Error(file.string() + ": wrong column count on line " + std::to_string(i + 1));
    }
    pipeline::ScoreRecord r;
    r.config_hash = row[c_hash];
    r.scheme = row[c_scheme];
    r.subsample = row[c_sub];
    for (const auto &[name, c] : factor_cols) {
      r.options[name] = row[c];
    }
    r.fold = to_int(row[c_fold], file);
    r.scores.accuracy = to_double(row[c_acc], file);
    r.scores.specificity = to_double(row[c_spec], file);
    r.scores.sensitivity = to_double(row[c_sens], file);
    r.scores.n_cases = to_int(row[c_cases], file);
    r.scores.n_controls = to_int(row[c_controls], file);
    r.scores.specificity_defined = r.scores.n_controls > 0;
    r.scores.sensitivity_defined = r.scores.n_cases > 0;
    r.n_train = to_int(row[c_train], file);
    r.n_test = to_int(row[c_test], file);
    r.hyperparameter = to_double(row[c_hp], file);
    out.push_back(std::move(r));
  }
  if (out.empty()) {
    throw Error(file.string() + ": score table has no rows");
  }
  return out;
}

} // namespace connectome::io
