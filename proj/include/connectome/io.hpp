#pragma once

// On-disk formats: cohort directories, per-fold artifacts and score tables.
// Floats are written with 17 significant digits so files round-trip.

#include "connectome/config.hpp"
#include "connectome/pipeline.hpp"
#include "connectome/synthdata.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace connectome::io {

namespace fs = std::filesystem;

std::string format_double(double v);

void write_text(const fs::path &file, const std::string &text);
std::string read_text(const fs::path &file);

std::vector<std::vector<std::string>> read_csv(const fs::path &file);
std::string matrix_csv(const Matrix &m);
Matrix parse_matrix_csv(const fs::path &file);

/// phenotype.csv, ground_truth.json, cohort.json and per-subject
/// sub-<id>_{voxels,motion,noise}.csv. Returns the cohort hash.
std::string write_cohort(const fs::path &dir, const synthdata::Cohort &cohort);
synthdata::Cohort read_cohort(const fs::path &dir);
/// FNV-1a over the cohort files in a fixed order.
std::string cohort_hash(const fs::path &dir);

std::string atlas_csv(const Parcellation &atlas);
Parcellation read_atlas_csv(const fs::path &file, const LatticeDims &dims);

std::string features_csv(std::span<const int> subject_ids, const std::string &kind,
                         const Matrix &features);
config::Json model_json(const classify::LinearModel &model, const std::string &config_hash);

/// Long-form score table sorted by (config_hash, fold).
std::string scores_csv(std::vector<pipeline::ScoreRecord> records);
std::vector<pipeline::ScoreRecord> read_scores_csv(const fs::path &file);

} // namespace connectome::io
