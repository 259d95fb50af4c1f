#include "connectome/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace connectome::classify {

namespace {

constexpr double kArmijo = 0.01;
constexpr int kMaxHalvings = 40;
constexpr double kCurvatureFloor = 1e-12;

void check_inputs(const Matrix &x, const Vector &y) {
  if (x.rows() != y.size()) {
    throw Error("feature rows and label count differ");
  }
  if (x.rows() == 0) {
    throw Error("no training samples");
  }
  if (!x.allFinite() || !y.allFinite()) {
    throw Error("non-finite training inputs");
  }
}

double penalty_value(const Vector &w, Penalty penalty) {
  return penalty == Penalty::l1 ? 0.5 * w.lpNorm<1>() : 0.5 * w.squaredNorm();
}

// l2-penalised squared hinge by generalised Newton steps on the active set
// (margins > 0), each solved inexactly with conjugate gradients, followed by
// an Armijo backtracking search. Converges in tens of iterations for any C,
// where coordinate descent needs thousands of sweeps once C is large.
void fit_l2_newton(const Matrix &x, const Vector &y, double c, Vector &w, double &b, SvcTrace &tr,
                   int max_iterations) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  auto objective_at = [&](const Vector &wv, double bv, Vector &margin) {
    margin = 1.0 - (y.array() * ((x * wv).array() + bv));
    return 0.5 * wv.squaredNorm() + c * margin.cwiseMax(0.0).squaredNorm();
  };
  Vector margin(n);
  double objective = objective_at(w, b, margin);
  tr.objective.push_back(objective);
  double first_grad = -1.0;

  for (int it = 0; it < max_iterations; ++it) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (margin(i) > 0.0) active.push_back(i);
    }
    Vector weighted = Vector::Zero(n); // y_i m_i on the active set
    for (Eigen::Index i : active) weighted(i) = y(i) * margin(i);
    Vector gw = w - 2.0 * c * (x.transpose() * weighted);
    double gb = -2.0 * c * weighted.sum();
    const double grad_inf = std::max(gw.cwiseAbs().maxCoeff(), std::abs(gb));
    if (first_grad < 0.0) first_grad = grad_inf;
    if (grad_inf < 1e-6 * std::max(1.0, first_grad)) {
      tr.converged = true;
      break;
    }

    Matrix xa(static_cast<Eigen::Index>(active.size()), d);
    for (std::size_t r = 0; r < active.size(); ++r) {
      xa.row(static_cast<Eigen::Index>(r)) = x.row(active[r]);
    }
    auto hessian_times = [&](const Vector &vw, double vb, Vector &hw, double &hb) {
      const Vector u = ((xa * vw).array() + vb).matrix();
      hw = vw + 2.0 * c * (xa.transpose() * u);
      hb = 2.0 * c * u.sum() + kCurvatureFloor * vb;
    };

    // Conjugate gradients on H s = -g with a relative forcing tolerance.
    Vector sw = Vector::Zero(d);
    double sb = 0.0;
    Vector rw = -gw;
    double rb = -gb;
    Vector pw = rw;
    double pb = rb;
    double rr = rw.squaredNorm() + rb * rb;
    const double gnorm = std::sqrt(rr);
    const double target = std::min(0.1, std::sqrt(gnorm)) * gnorm;
    for (Eigen::Index k = 0; k < d + 1 && std::sqrt(rr) > target; ++k) {
      Vector hw;
      double hb = 0.0;
      hessian_times(pw, pb, hw, hb);
      const double curv = pw.dot(hw) + pb * hb;
      if (!(curv > 0.0)) break;
      const double alpha = rr / curv;
      sw += alpha * pw;
      sb += alpha * pb;
      rw -= alpha * hw;
      rb -= alpha * hb;
      const double next_rr = rw.squaredNorm() + rb * rb;
      pw = rw + (next_rr / rr) * pw;
      pb = rb + (next_rr / rr) * pb;
      rr = next_rr;
    }
    const double slope = gw.dot(sw) + gb * sb;
    if (!(slope < 0.0)) {
      tr.converged = true;
      break;
    }

    double step = 1.0;
    bool moved = false;
    Vector trial_margin(n);
    for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
      const Vector wt = w + step * sw;
      const double bt = b + step * sb;
      const double value = objective_at(wt, bt, trial_margin);
      if (value <= objective + kArmijo * step * slope) {
        w = wt;
        b = bt;
        margin = trial_margin;
        const double decrease = objective - value;
        objective = value;
        moved = true;
        tr.objective.push_back(objective);
        tr.sweeps = it + 1;
        if (decrease < 1e-12 * std::abs(objective)) tr.converged = true;
        break;
      }
    }
    if (!moved || tr.converged) {
      tr.converged = true;
      break;
    }
  }
}

// Minimum-norm subgradient of g + (1/2)|w| at one coordinate.
double l1_violation(double g, double wj) {
  if (wj > 0.0) return std::abs(g + 0.5);
  if (wj < 0.0) return std::abs(g - 0.5);
  return std::max(0.0, std::abs(g) - 0.5);
}

// Minimiser over t of g t + h t^2 / 2 + (1/2)|z + t|.
double soft_step(double g, double h, double z) {
  if (g + 0.5 <= h * z) return -(g + 0.5) / h;
  if (g - 0.5 >= h * z) return -(g - 0.5) / h;
  return -z;
}

// l1-penalised squared hinge by proximal Newton steps: each outer iteration
// minimises the local quadratic model plus the l1 term by cyclic coordinate
// descent, then backtracks along the resulting direction.
void fit_l1_newton(const Matrix &x, const Vector &y, double c, Vector &w, double &b, SvcTrace &tr,
                   int max_iterations) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  auto objective_at = [&](const Vector &wv, const Vector &margin) {
    return 0.5 * wv.lpNorm<1>() + c * margin.cwiseMax(0.0).squaredNorm();
  };
  Vector margin = 1.0 - (y.array() * ((x * w).array() + b));
  double objective = objective_at(w, margin);
  tr.objective.push_back(objective);
  double first_violation = -1.0;
  double inner_tolerance = -1.0;

  for (int it = 0; it < max_iterations; ++it) {
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (margin(i) > 0.0) active.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(active.size());
    Matrix xa(m, d);
    Vector ya(m);
    Vector ma(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      xa.row(r) = x.row(active[static_cast<std::size_t>(r)]);
      ya(r) = y(active[static_cast<std::size_t>(r)]);
      ma(r) = margin(active[static_cast<std::size_t>(r)]);
    }
    const Vector weighted = ya.cwiseProduct(ma);
    const Vector gw = -2.0 * c * (xa.transpose() * weighted);
    const double gb = -2.0 * c * weighted.sum();
    double violation = std::abs(gb);
    for (Eigen::Index j = 0; j < d; ++j) violation = std::max(violation, l1_violation(gw(j), w(j)));
    if (first_violation < 0.0) {
      first_violation = violation;
      inner_tolerance = 0.1 * violation;
    }
    if (violation < 1e-6 * std::max(1.0, first_violation)) {
      tr.converged = true;
      break;
    }

    // Coordinate descent on the quadratic model in the step (dw, db).
    const Vector hw = (2.0 * c * xa.colwise().squaredNorm().transpose()).array() + kCurvatureFloor;
    const double hb = 2.0 * c * static_cast<double>(m) + kCurvatureFloor;
    Vector dw = Vector::Zero(d);
    double db = 0.0;
    Vector u = Vector::Zero(m); // xa dw + db
    int inner = 0;
    for (; inner < 100; ++inner) {
      double worst = 0.0;
      {
        const double g = gb + 2.0 * c * u.sum() + kCurvatureFloor * db;
        worst = std::abs(g);
        const double t = -g / hb;
        db += t;
        u.array() += t;
      }
      for (Eigen::Index j = 0; j < d; ++j) {
        const auto col = xa.col(j);
        const double g = gw(j) + 2.0 * c * col.dot(u) + kCurvatureFloor * dw(j);
        const double z = w(j) + dw(j);
        worst = std::max(worst, l1_violation(g, z));
        const double t = soft_step(g, hw(j), z);
        if (t != 0.0) {
          dw(j) += t;
          u.noalias() += t * col;
        }
      }
      if (worst < inner_tolerance) break;
    }
    if (inner == 0) inner_tolerance *= 0.25;

    const double slope = gw.dot(dw) + gb * db + 0.5 * ((w + dw).lpNorm<1>() - w.lpNorm<1>());
    if (!(slope < 0.0)) {
      tr.converged = true;
      break;
    }
    const Vector shift = y.cwiseProduct((x * dw).array().matrix() + Vector::Constant(n, db));
    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
      const Vector wt = w + step * dw;
      const Vector trial_margin = margin - step * shift;
      const double value = objective_at(wt, trial_margin);
      if (value <= objective + kArmijo * step * slope) {
        w = wt;
        b += step * db;
        margin = trial_margin;
        const double decrease = objective - value;
        objective = value;
        moved = true;
        tr.objective.push_back(objective);
        tr.sweeps = it + 1;
        if (decrease < 1e-12 * std::abs(objective)) tr.converged = true;
        break;
      }
    }
    if (!moved || tr.converged) {
      tr.converged = true;
      break;
    }
  }
}

} // namespace

std::string to_string(ClassifierKind kind) {
  switch (kind) {
  case ClassifierKind::svc_l1:
    return "svc_l1";
  case ClassifierKind::svc_l2:
    return "svc_l2";
  case ClassifierKind::ridge:
    return "ridge";
  }
  return "unknown";
}

ClassifierKind parse_classifier(const std::string &name) {
  if (name == "svc_l1") return ClassifierKind::svc_l1;
  if (name == "svc_l2") return ClassifierKind::svc_l2;
  if (name == "ridge") return ClassifierKind::ridge;
  throw ConfigError("unknown classifier '" + name + "' (expected svc_l1, svc_l2 or ridge)");
}

Scaler Scaler::fit(const Matrix &x) {
  Scaler s;
  s.mean = x.colwise().mean().transpose();
  const Matrix centred = x.rowwise() - s.mean.transpose();
  s.scale = (centred.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale(j) > 1e-12)) {
      s.scale(j) = 1.0;
    }
  }
  return s;
}

Scaler Scaler::identity(Eigen::Index d) {
  Scaler s;
  s.mean = Vector::Zero(d);
  s.scale = Vector::Ones(d);
  return s;
}

Matrix Scaler::transform(const Matrix &x) const {
  if (x.cols() != mean.size()) {
    throw Error("feature dimension does not match the fitted scaler");
  }
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Vector LinearModel::decision_function(const Matrix &x) const {
  return (scaler.transform(x) * weights).array() + intercept;
}

std::vector<int> LinearModel::predict(const Matrix &x) const {
  const Vector d = decision_function(x);
  std::vector<int> out(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    out[static_cast<std::size_t>(i)] = d(i) > 0.0 ? kCase : kControl;
  }
  return out;
}

LinearModel fit_ridge_classifier(const Matrix &x, const Vector &y, double alpha, bool standardize) {
  check_inputs(x, y);
  if (!(alpha > 0.0)) {
    throw Error("ridge alpha must be positive");
  }
  LinearModel model;
  model.penalty = Penalty::l2;
  model.loss = Loss::ridge;
  model.hyperparameter = alpha;
  model.scaler = standardize ? Scaler::fit(x) : Scaler::identity(x.cols());
  const Matrix xs = model.scaler.transform(x);
  const Vector x_mean = xs.colwise().mean().transpose();
  const Matrix xc = xs.rowwise() - x_mean.transpose();
  const double y_mean = y.mean();
  const Vector yc = y.array() - y_mean;
  const Eigen::Index n = xc.rows();
  const Eigen::Index d = xc.cols();
  if (d <= n) {
    Matrix gram = xc.transpose() * xc;
    gram.diagonal().array() += alpha;
    model.weights = gram.ldlt().solve(xc.transpose() * yc);
  } else {
    Matrix gram = xc * xc.transpose();
    gram.diagonal().array() += alpha;
    model.weights = xc.transpose() * gram.ldlt().solve(yc);
  }
  model.intercept = y_mean - x_mean.dot(model.weights);
  return model;
}

double svc_objective(const Vector &w, double b, const Matrix &x, const Vector &y, Penalty penalty,
                     double c) {
  const Vector margin = 1.0 - (y.array() * ((x * w).array() + b));
  return penalty_value(w, penalty) + c * margin.cwiseMax(0.0).squaredNorm();
}

LinearModel fit_svc(const Matrix &x, const Vector &y, Penalty penalty, double c, bool standardize,
                    SvcTrace *trace, int max_sweeps) {
  check_inputs(x, y);
  if (!(c > 0.0)) {
    throw Error("SVC C must be positive");
  }
  if ((y.array() > 0.0).all() || (y.array() < 0.0).all()) {
    throw Error("SVC needs both classes in the training labels");
  }
  LinearModel model;
  model.penalty = penalty;
  model.loss = Loss::squared_hinge;
  model.hyperparameter = c;
  model.scaler = standardize ? Scaler::fit(x) : Scaler::identity(x.cols());
  const Matrix xs = model.scaler.transform(x);

  Vector w = Vector::Zero(xs.cols());
  double b = 0.0;
  SvcTrace local;
  SvcTrace &tr = trace != nullptr ? *trace : local;
  tr = SvcTrace{};
  if (penalty == Penalty::l2) {
    fit_l2_newton(xs, y, c, w, b, tr, max_sweeps);
  } else {
    fit_l1_newton(xs, y, c, w, b, tr, max_sweeps);
  }
  model.weights = w;
  model.intercept = b;
  return model;
}

LinearModel fit_classifier(ClassifierKind kind, const Matrix &x, const Vector &y,
                           double hyperparameter, bool standardize) {
  switch (kind) {
  case ClassifierKind::ridge:
    return fit_ridge_classifier(x, y, hyperparameter, standardize);
  case ClassifierKind::svc_l1:
    return fit_svc(x, y, Penalty::l1, hyperparameter, standardize);
  case ClassifierKind::svc_l2:
    return fit_svc(x, y, Penalty::l2, hyperparameter, standardize);
  }
  throw Error("unknown classifier kind");
}

std::vector<double> default_grid() {
  std::vector<double> grid;
  for (int e = -3; e <= 3; ++e) {
    grid.push_back(std::pow(10.0, e));
  }
  return grid;
}

bool stronger_regularization(ClassifierKind kind, double value, double other) {
  return kind == ClassifierKind::ridge ? value > other : value < other;
}

std::vector<int> stratified_fold_ids(std::span<const int> strata, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) {
    throw Error("stratified folds need at least 2 splits");
  }
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    groups[strata[i]].push_back(static_cast<int>(i));
  }
  std::vector<int> fold(strata.size(), 0);
  Rng rng(seed);
  std::size_t offset = 0;
  for (auto &[stratum, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) {
      fold[static_cast<std::size_t>(members[i])] =
          static_cast<int>((offset + i) % static_cast<std::size_t>(n_folds));
    }
    offset += members.size();
  }
  return fold;
}

namespace {

bool folds_usable(const std::vector<int> &fold, const Vector &y, int n_folds) {
  for (int f = 0; f < n_folds; ++f) {
    bool test_any = false;
    bool train_pos = false;
    bool train_neg = false;
    for (std::size_t i = 0; i < fold.size(); ++i) {
      if (fold[i] == f) {
        test_any = true;
      } else if (y(static_cast<Eigen::Index>(i)) > 0) {
        train_pos = true;
      } else {
        train_neg = true;
      }
    }
    if (!test_any || !train_pos || !train_neg) {
      return false;
    }
  }
  return true;
}

Matrix take_rows(const Matrix &x, const std::vector<Eigen::Index> &rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  return out;
}

Vector take(const Vector &y, const std::vector<Eigen::Index> &rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = y(rows[i]);
  }
  return out;
}

} // namespace

Selection nested_select(const Matrix &x, const Vector &y, std::span<const int> strata,
                        ClassifierKind kind, const std::vector<double> &grid, int inner_folds,
                        std::uint64_t seed, std::span<const int> subject_ids) {
  check_inputs(x, y);
  if (grid.empty()) {
    throw Error("hyperparameter grid is empty");
  }
  if (static_cast<Eigen::Index>(strata.size()) != x.rows()) {
    throw Error("strata length does not match samples");
  }
  Selection sel;
  sel.grid = grid;

  if (grid.size() == 1) {
    sel.hyperparameter = grid.front();
    sel.inner_accuracy = {std::numeric_limits<double>::quiet_NaN()};
  } else {
    int folds = inner_folds;
    std::vector<int> fold_ids;
    for (; folds >= 2; --folds) {
      fold_ids = stratified_fold_ids(strata, folds, seed);
      if (folds_usable(fold_ids, y, folds)) {
        break;
      }
      sel.warnings.push_back("inner split with " + std::to_string(folds) +
                             " folds leaves a fold without a class; refolding");
    }
    if (folds < 2) {
      throw Error("nested selection: cannot build inner folds containing both classes");
    }
    sel.inner_folds_used = folds;
    sel.inner_accuracy.assign(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train;
      std::vector<Eigen::Index> test;
      for (std::size_t i = 0; i < fold_ids.size(); ++i) {
        (fold_ids[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
      }
      const Matrix xtr = take_rows(x, train);
      const Vector ytr = take(y, train);
      const Matrix xte = take_rows(x, test);
      const Vector yte = take(y, test);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const LinearModel m = fit_classifier(kind, xtr, ytr, grid[g]);
        const auto pred = m.predict(xte);
        int correct = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
          correct += (pred[i] == static_cast<int>(yte(static_cast<Eigen::Index>(i)))) ? 1 : 0;
        }
        sel.inner_accuracy[g] += static_cast<double>(correct) / static_cast<double>(pred.size());
      }
    }
    for (double &a : sel.inner_accuracy) {
      a /= static_cast<double>(folds);
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
      const double diff = sel.inner_accuracy[g] - sel.inner_accuracy[best];
      if (diff > 1e-12 ||
          (std::abs(diff) <= 1e-12 && stronger_regularization(kind, grid[g], grid[best]))) {
        best = g;
      }
    }
    sel.hyperparameter = grid[best];
  }
  sel.model = fit_classifier(kind, x, y, sel.hyperparameter);
  sel.model.fit_subjects.assign(subject_ids.begin(), subject_ids.end());
  return sel;
}

WeightSignificance permutation_weight_pvalues(const WeightFitter &fit, const Matrix &x,
                                              const Vector &y, int n_permutations,
                                              std::uint64_t seed, int jobs) {
  if (n_permutations < 1) {
    throw Error("need at least one permutation");
  }
  WeightSignificance out;
  out.n_permutations = n_permutations;
  out.observed_weights = fit(x, y);
  const Vector observed = out.observed_weights.cwiseAbs();
  std::vector<Vector> perm_weights(static_cast<std::size_t>(n_permutations));
  parallel_for(static_cast<std::size_t>(n_permutations), jobs, [&](std::size_t i) {
    std::vector<double> labels(y.data(), y.data() + y.size());
    Rng rng(derive_seed(seed, i));
    std::shuffle(labels.begin(), labels.end(), rng);
    const Vector shuffled = Eigen::Map<const Vector>(labels.data(), y.size());
    perm_weights[i] = fit(x, shuffled);
  });
  Vector exceed = Vector::Zero(observed.size());
  for (const auto &w : perm_weights) {
    exceed.array() += (w.cwiseAbs().array() >= observed.array()).cast<double>();
  }
  out.p_values = (exceed.array() + 1.0) / (n_permutations + 1.0);
  return out;
}

} // namespace connectome::classify
