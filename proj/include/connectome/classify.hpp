#pragma once

// Linear diagnosis models: ridge classifier and squared-hinge SVC with l1 or
// l2 penalty, nested hyperparameter selection and permutation p-values on
// classifier weights.

#include "connectome/core.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace connectome::classify {

enum class Penalty { l1, l2 };
enum class Loss { squared_hinge, ridge };
enum class ClassifierKind { svc_l1, svc_l2, ridge };

std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier(const std::string &name);

/// Column standardisation fitted on training data and stored on the model.
struct Scaler {
  Vector mean;
  Vector scale;

  static Scaler fit(const Matrix &x);
  static Scaler identity(Eigen::Index d);
  Matrix transform(const Matrix &x) const;
};

struct LinearModel {
  Vector weights; // in standardised feature space
  double intercept = 0.0;
  Penalty penalty = Penalty::l2;
  Loss loss = Loss::ridge;
  double hyperparameter = 1.0; // C for SVC, alpha for ridge
  Scaler scaler;
  std::vector<int> fit_subjects;

  Vector decision_function(const Matrix &x) const;
  /// +1 where the decision value is positive, -1 otherwise.
  std::vector<int> predict(const Matrix &x) const;
};

/// Solves (X^T X + alpha I) w = X^T y on centred data; the intercept is
/// unpenalised.
LinearModel fit_ridge_classifier(const Matrix &x, const Vector &y, double alpha,
                                 bool standardize = true);

struct SvcTrace {
  std::vector<double> objective; // after every outer iteration
  int sweeps = 0;
  bool converged = false;
};

/// 1/2 ||w||_p^p + C sum_i max(0, 1 - y_i (w^T x_i + b))^2.
double svc_objective(const Vector &w, double b, const Matrix &x, const Vector &y, Penalty penalty,
                     double c);

/// l2: generalised Newton iterations with conjugate-gradient steps.
/// l1: proximal Newton iterations whose quadratic subproblem is solved by
/// cyclic coordinate descent with soft thresholding. Both backtrack until an
/// Armijo condition holds and stop once the (minimum-norm sub)gradient falls
/// below 1e-6 of its starting value. `max_sweeps` caps the outer iterations;
/// the trace records the objective after each of them.
LinearModel fit_svc(const Matrix &x, const Vector &y, Penalty penalty, double c,
                    bool standardize = true, SvcTrace *trace = nullptr, int max_sweeps = 2000);

LinearModel fit_classifier(ClassifierKind kind, const Matrix &x, const Vector &y,
                           double hyperparameter, bool standardize = true);

/// 7 log-spaced points in [1e-3, 1e3].
std::vector<double> default_grid();

/// True when the grid value regularises more strongly than `other`
/// (smaller C for SVC, larger alpha for ridge).
bool stronger_regularization(ClassifierKind kind, double value, double other);

struct Selection {
  LinearModel model;
  double hyperparameter = 0.0;
  std::vector<double> grid;
  std::vector<double> inner_accuracy;
  int inner_folds_used = 0;
  std::vector<std::string> warnings;
};

/// Stratified inner folds over `strata` (e.g. site x diagnosis); every row
/// gets a fold in [0, n_folds).
std::vector<int> stratified_fold_ids(std::span<const int> strata, int n_folds, std::uint64_t seed);

/// Inner-CV mean accuracy for each grid value, refit of the winner on all
/// rows. Ties go to the strongest regularisation.
Selection nested_select(const Matrix &x, const Vector &y, std::span<const int> strata,
                        ClassifierKind kind, const std::vector<double> &grid, int inner_folds = 5,
                        std::uint64_t seed = 0, std::span<const int> subject_ids = {});

struct WeightSignificance {
  Vector p_values;
  Vector observed_weights;
  int n_permutations = 0;
};

using WeightFitter = std::function<Vector(const Matrix &, const Vector &)>;

/// Two-sided permutation p-values: (1 + #{|w_perm| >= |w_obs|}) / (n + 1).
/// Permutation i shuffles labels with a stream derived from (seed, i).
WeightSignificance permutation_weight_pvalues(const WeightFitter &fit, const Matrix &x,
                                              const Vector &y, int n_permutations,
                                              std::uint64_t seed, int jobs = 1);

} // namespace connectome::classify
