#include "connectome/parcellation.hpp"

#include "connectome/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <tuple>

namespace connectome::parcellation {

void Adjacency::validate() const {
  const auto p = static_cast<int>(neighbors.size());
  for (int v = 0; v < p; ++v) {
    for (int u : neighbors[static_cast<std::size_t>(v)]) {
      if (u == v) {
        throw Error("adjacency has a self-edge at " + std::to_string(v));
      }
      if (u < 0 || u >= p) {
        throw Error("adjacency references out-of-range vertex " + std::to_string(u));
      }
      const auto &back = neighbors[static_cast<std::size_t>(u)];
      if (std::find(back.begin(), back.end(), v) == back.end()) {
        throw Error("adjacency is not symmetric between " + std::to_string(v) + " and " +
                    std::to_string(u));
      }
    }
  }
}

Adjacency lattice_adjacency(const LatticeDims &dims) {
  Adjacency adj;
  const auto p = static_cast<int>(dims.voxel_count());
  adj.neighbors.resize(static_cast<std::size_t>(p));
  for (int v = 0; v < p; ++v) {
    const auto c = dims.coords(v);
    auto &out = adj.neighbors[static_cast<std::size_t>(v)];
    if (c[2] > 0) out.push_back(dims.index(c[0], c[1], c[2] - 1));
    if (c[1] > 0) out.push_back(dims.index(c[0], c[1] - 1, c[2]));
    if (c[0] > 0) out.push_back(dims.index(c[0] - 1, c[1], c[2]));
    if (c[0] + 1 < dims.nx) out.push_back(dims.index(c[0] + 1, c[1], c[2]));
    if (c[1] + 1 < dims.ny) out.push_back(dims.index(c[0], c[1] + 1, c[2]));
    if (c[2] + 1 < dims.nz) out.push_back(dims.index(c[0], c[1], c[2] + 1));
  }
  return adj;
}

Adjacency complete_adjacency(int p) {
  Adjacency adj;
  adj.neighbors.resize(static_cast<std::size_t>(p));
  for (int v = 0; v < p; ++v) {
    for (int u = 0; u < p; ++u) {
      if (u != v) {
        adj.neighbors[static_cast<std::size_t>(v)].push_back(u);
      }
    }
  }
  return adj;
}

int connected_components(const Adjacency &adj, std::vector<int> *component) {
  std::vector<int> comp(adj.size(), -1);
  int count = 0;
  for (std::size_t start = 0; start < adj.size(); ++start) {
    if (comp[start] >= 0) {
      continue;
    }
    std::vector<int> stack{static_cast<int>(start)};
    comp[start] = count;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int u : adj.neighbors[static_cast<std::size_t>(v)]) {
        if (comp[static_cast<std::size_t>(u)] < 0) {
          comp[static_cast<std::size_t>(u)] = count;
          stack.push_back(u);
        }
      }
    }
    ++count;
  }
  if (component != nullptr) {
    *component = std::move(comp);
  }
  return count;
}

Vector gaussian_kernel_1d(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  Vector k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) {
    k(i + radius) = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  return k / k.sum();
}

Matrix gaussian_smooth(const Matrix &series, const LatticeDims &dims, double fwhm_mm,
                       double voxel_size_mm) {
  if (fwhm_mm < 0.0) {
    throw Error("smoothing FWHM must be non-negative");
  }
  if (voxel_size_mm <= 0.0) {
    throw Error("voxel size must be positive");
  }
  if (static_cast<std::size_t>(series.cols()) != dims.voxel_count()) {
    throw Error("series width does not match lattice voxel count");
  }
  if (fwhm_mm == 0.0) {
    return series;
  }
  const double sigma = fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0))) / voxel_size_mm;
  const Vector kernel = gaussian_kernel_1d(sigma);
  const auto radius = static_cast<int>((kernel.size() - 1) / 2);

  Matrix current = series;
  Matrix next(series.rows(), series.cols());
  for (int axis = 0; axis < 3; ++axis) {
    const int extent = axis == 0 ? dims.nx : (axis == 1 ? dims.ny : dims.nz);
    for (Eigen::Index v = 0; v < series.cols(); ++v) {
      auto c = dims.coords(static_cast<int>(v));
      next.col(v).setZero();
      const int centre = c[static_cast<std::size_t>(axis)];
      for (int o = -radius; o <= radius; ++o) {
        c[static_cast<std::size_t>(axis)] = std::clamp(centre + o, 0, extent - 1);
        next.col(v) += kernel(o + radius) * current.col(dims.index(c[0], c[1], c[2]));
      }
    }
    std::swap(current, next);
  }
  return current;
}

Matrix voxel_profiles_from_gram(const Matrix &gram, long total_timepoints, int max_components) {
  const Eigen::Index p = gram.rows();
  if (gram.cols() != p) {
    throw Error("voxel Gram matrix must be square");
  }
  // Centre voxels-as-samples: H G H with H = I - 11^T / p.
  const Vector row_mean = gram.rowwise().mean();
  const double grand = row_mean.mean();
  Matrix centred = gram;
  centred.colwise() -= row_mean;
  centred.rowwise() -= row_mean.transpose();
  centred.array() += grand;

  const auto m = static_cast<Eigen::Index>(
      std::min<long>({total_timepoints, static_cast<long>(max_components), static_cast<long>(p)}));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (centred + centred.transpose()));
  Matrix out(p, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::Index src = p - 1 - c; // eigenvalues ascend
    const double scale = std::sqrt(std::max(eig.eigenvalues()(src), 0.0));
    Vector col = eig.eigenvectors().col(src) * scale;
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) {
      col = -col;
    }
    out.col(c) = col;
  }
  return out;
}

namespace {

double squared_distance(const Matrix &points, Eigen::Index i, const Matrix &centroids,
                        Eigen::Index c) {
  return (points.row(i) - centroids.row(c)).squaredNorm();
}

KMeansResult lloyd(const Matrix &points, int k, Rng &rng, int max_iter) {
  const Eigen::Index n = points.rows();
  KMeansResult res;
  res.centroids.resize(k, points.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  res.centroids.row(0) = points.row(pick(rng));
  Vector closest(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    closest(i) = squared_distance(points, i, res.centroids, 0);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      double target = unit(rng) * total;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= closest(i);
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    res.centroids.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      closest(i) = std::min(closest(i), squared_distance(points, i, res.centroids, c));
    }
  }

  res.labels.assign(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = squared_distance(points, i, res.centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist(i) = best_d;
      if (res.labels[static_cast<std::size_t>(i)] != best) {
        res.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }

    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : res.labels) {
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        continue;
      }
      // Empty cluster: move it onto the point worst served by its centroid,
      // taken from a cluster that can spare it.
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(i)])] > 1 &&
            (far < 0 || dist(i) > dist(far))) {
          far = i;
        }
      }
      if (far < 0) {
        break;
      }
      --counts[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(far)])];
      res.labels[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      res.centroids.row(c) = points.row(far);
      dist(far) = 0.0;
      changed = true;
    }
    res.inertia_trace.push_back(dist.sum());

    if (!changed && iter > 0) {
      break;
    }
    Matrix sums = Matrix::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.labels[static_cast<std::size_t>(i)]) += points.row(i);
    }
    for (int c = 0; c < k; ++c) {
      res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    inertia += squared_distance(points, i, res.centroids, res.labels[static_cast<std::size_t>(i)]);
  }
  res.inertia = inertia;
  return res;
}

} // namespace

KMeansResult kmeans(const Matrix &points, int k, std::uint64_t seed, int n_init, int max_iter) {
  if (k < 1 || k > points.rows()) {
    throw Error("kmeans: k must lie in [1, number of points]");
  }
  if (n_init < 1) {
    throw Error("kmeans: n_init must be >= 1");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int init = 0; init < n_init; ++init) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(init)));
    KMeansResult run = lloyd(points, k, rng, max_iter);
    if (run.inertia < best.inertia) {
      best = std::move(run);
    }
  }
  return best;
}

std::vector<int> canonical_labels(std::span<const int> labels) {
  std::map<int, int> remap;
  std::vector<int> out(labels.size());
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0) {
      out[v] = -1;
      continue;
    }
    auto [it, inserted] = remap.try_emplace(labels[v], static_cast<int>(remap.size()));
    out[v] = it->second;
  }
  return out;
}

Parcellation kmeans_parcellate(const Matrix &profiles, const LatticeDims &dims, int k,
                               std::uint64_t seed, int n_init) {
  if (static_cast<std::size_t>(profiles.rows()) != dims.voxel_count()) {
    throw Error("profile rows must equal lattice voxel count");
  }
  const KMeansResult res = kmeans(profiles, k, seed, n_init);
  Parcellation out;
  out.dims = dims;
  out.n_regions = k;
  out.labels = canonical_labels(res.labels);
  return out;
}

WardResult ward_cluster(const Matrix &profiles, int k, const Adjacency &adjacency) {
  const auto p = static_cast<int>(profiles.rows());
  if (static_cast<int>(adjacency.size()) != p) {
    throw Error("adjacency size does not match number of profiles");
  }
  if (k < 1 || k > p) {
    throw Error("ward: k must lie in [1, number of voxels]");
  }
  const int components = connected_components(adjacency);
  if (k < components) {
    throw Error("ward: k = " + std::to_string(k) + " is below the number of connected components (" +
                std::to_string(components) + ")");
  }

  const int max_clusters = 2 * p;
  std::vector<int> size(static_cast<std::size_t>(max_clusters), 0);
  std::vector<Vector> sum(static_cast<std::size_t>(max_clusters));
  std::vector<std::set<int>> nbrs(static_cast<std::size_t>(max_clusters));
  std::vector<std::vector<int>> members(static_cast<std::size_t>(max_clusters));
  std::vector<char> active(static_cast<std::size_t>(max_clusters), 0);
  for (int v = 0; v < p; ++v) {
    const auto sv = static_cast<std::size_t>(v);
    size[sv] = 1;
    sum[sv] = profiles.row(v).transpose();
    nbrs[sv] = std::set<int>(adjacency.neighbors[sv].begin(), adjacency.neighbors[sv].end());
    members[sv] = {v};
    active[sv] = 1;
  }

  // Ward merge cost: n_a n_b / (n_a + n_b) * ||mean_a - mean_b||^2.
  auto cost = [&](int a, int b) {
    const auto sa = static_cast<std::size_t>(a);
    const auto sb = static_cast<std::size_t>(b);
    const double na = size[sa];
    const double nb = size[sb];
    return na * nb / (na + nb) * (sum[sa] / na - sum[sb] / nb).squaredNorm();
  };

  using Entry = std::tuple<double, int, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  for (int v = 0; v < p; ++v) {
    for (int u : nbrs[static_cast<std::size_t>(v)]) {
      if (v < u) {
        heap.emplace(cost(v, u), v, u);
      }
    }
  }

  WardResult out;
  int n_active = p;
  int next_id = p;
  while (n_active > k) {
    if (heap.empty()) {
      throw Error("ward: ran out of admissible merges");
    }
    const auto [c, a, b] = heap.top();
    heap.pop();
    const auto sa = static_cast<std::size_t>(a);
    const auto sb = static_cast<std::size_t>(b);
    if (!active[sa] || !active[sb]) {
      continue;
    }
    const int m = next_id++;
    const auto sm = static_cast<std::size_t>(m);
    size[sm] = size[sa] + size[sb];
    sum[sm] = sum[sa] + sum[sb];
    members[sm] = std::move(members[sa]);
    members[sm].insert(members[sm].end(), members[sb].begin(), members[sb].end());
    members[sb].clear();
    active[sa] = active[sb] = 0;
    active[sm] = 1;
    std::set<int> merged;
    for (int x : nbrs[sa]) merged.insert(x);
    for (int x : nbrs[sb]) merged.insert(x);
    merged.erase(a);
    merged.erase(b);
    for (int x : merged) {
      auto &nx = nbrs[static_cast<std::size_t>(x)];
      nx.erase(a);
      nx.erase(b);
      nx.insert(m);
      heap.emplace(cost(std::min(x, m), std::max(x, m)), std::min(x, m), std::max(x, m));
    }
    nbrs[sm] = std::move(merged);
    nbrs[sa].clear();
    nbrs[sb].clear();
    out.merges.push_back({a, b, c, size[sm]});
    --n_active;
  }

  std::vector<int> labels(static_cast<std::size_t>(p), -1);
  int region = 0;
  for (int id = 0; id < next_id; ++id) {
    if (!active[static_cast<std::size_t>(id)]) {
      continue;
    }
    for (int v : members[static_cast<std::size_t>(id)]) {
      labels[static_cast<std::size_t>(v)] = region;
    }
    ++region;
  }
  out.labels = canonical_labels(labels);
  return out;
}

Parcellation ward_parcellate(const Matrix &profiles, const LatticeDims &dims, int k,
                             const Adjacency &adjacency) {
  if (static_cast<std::size_t>(profiles.rows()) != dims.voxel_count()) {
    throw Error("profile rows must equal lattice voxel count");
  }
  Parcellation out;
  out.dims = dims;
  out.n_regions = k;
  out.labels = ward_cluster(profiles, k, adjacency).labels;
  return out;
}

AtlasMaps indicator_maps(const Parcellation &atlas) {
  AtlasMaps out;
  const auto sizes = atlas.region_sizes();
  for (int r = 0; r < atlas.n_regions; ++r) {
    if (sizes[static_cast<std::size_t>(r)] > 0) {
      out.region_ids.push_back(r);
    }
  }
  out.maps = Matrix::Zero(static_cast<Eigen::Index>(out.region_ids.size()),
                          static_cast<Eigen::Index>(atlas.labels.size()));
  std::vector<int> row_of(static_cast<std::size_t>(atlas.n_regions), -1);
  for (std::size_t i = 0; i < out.region_ids.size(); ++i) {
    row_of[static_cast<std::size_t>(out.region_ids[i])] = static_cast<int>(i);
  }
  for (std::size_t v = 0; v < atlas.labels.size(); ++v) {
    const int l = atlas.labels[v];
    if (l >= 0 && row_of[static_cast<std::size_t>(l)] >= 0) {
      out.maps(row_of[static_cast<std::size_t>(l)], static_cast<Eigen::Index>(v)) = 1.0;
    }
  }
  return out;
}

AtlasMaps select_largest_rois(const Parcellation &atlas, int m) {
  const auto sizes = atlas.region_sizes();
  std::vector<int> ids;
  for (int r = 0; r < atlas.n_regions; ++r) {
    if (sizes[static_cast<std::size_t>(r)] > 0) {
      ids.push_back(r);
    }
  }
  if (m < 1 || static_cast<int>(ids.size()) < m) {
    throw Error("atlas has " + std::to_string(ids.size()) + " nonempty regions, fewer than the " +
                std::to_string(m) + " requested");
  }
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return sizes[static_cast<std::size_t>(a)] > sizes[static_cast<std::size_t>(b)];
  });
  ids.resize(static_cast<std::size_t>(m));
  std::sort(ids.begin(), ids.end());

  AtlasMaps out;
  out.region_ids = ids;
  out.maps = Matrix::Zero(m, static_cast<Eigen::Index>(atlas.labels.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t v = 0; v < atlas.labels.size(); ++v) {
      if (atlas.labels[v] == ids[i]) {
        out.maps(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = 1.0;
      }
    }
  }
  return out;
}

double dice(std::span<const int> a, std::span<const int> b) {
  if (a.empty() || b.empty()) {
    throw Error("dice is undefined for empty voxel sets");
  }
  std::vector<int> sa(a.begin(), a.end());
  std::vector<int> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
  std::vector<int> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  return 2.0 * static_cast<double>(common.size()) / static_cast<double>(sa.size() + sb.size());
}

Consensus consensus_atlas(std::span<const Parcellation> atlases, double dice_threshold) {
  if (atlases.size() < 2) {
    throw Error("consensus needs at least two atlases");
  }
  const Parcellation &first = atlases[0];
  for (const auto &a : atlases) {
    if (a.dims != first.dims || a.labels.size() != first.labels.size()) {
      throw Error("consensus atlases must share one lattice");
    }
  }
  const std::size_t p = first.labels.size();
  const auto n_atlases = atlases.size();

  Consensus out;
  out.atlas.dims = first.dims;
  out.atlas.labels.assign(p, -1);
  std::set<int> subjects;
  for (const auto &a : atlases) {
    subjects.insert(a.fit_subjects.begin(), a.fit_subjects.end());
  }
  out.atlas.fit_subjects.assign(subjects.begin(), subjects.end());

  const auto first_sizes = first.region_sizes();
  int next_region = 0;
  for (int r = 0; r < first.n_regions; ++r) {
    if (first_sizes[static_cast<std::size_t>(r)] == 0) {
      continue;
    }
    const std::vector<int> region = first.region_voxels(r);
    std::vector<int> votes(p, 0);
    for (int v : region) {
      ++votes[static_cast<std::size_t>(v)];
    }
    double worst = 1.0;
    for (std::size_t t = 1; t < n_atlases; ++t) {
      const Parcellation &other = atlases[t];
      const auto sizes = other.region_sizes();
      std::map<int, int> overlap;
      for (int v : region) {
        const int l = other.labels[static_cast<std::size_t>(v)];
        if (l >= 0) {
          ++overlap[l];
        }
      }
      int best_label = -1;
      double best = 0.0;
      for (const auto &[l, count] : overlap) {
        const double d = 2.0 * count /
                         static_cast<double>(region.size() + static_cast<std::size_t>(sizes[static_cast<std::size_t>(l)]));
        if (d > best) {
          best = d;
          best_label = l;
        }
      }
      worst = std::min(worst, best);
      if (best_label >= 0) {
        for (std::size_t v = 0; v < p; ++v) {
          if (other.labels[v] == best_label) {
            ++votes[v];
          }
        }
      }
    }
    if (worst < dice_threshold) {
      continue;
    }
    bool any = false;
    for (std::size_t v = 0; v < p; ++v) {
      if (2 * static_cast<std::size_t>(votes[v]) > n_atlases && out.atlas.labels[v] < 0) {
        out.atlas.labels[v] = next_region;
        any = true;
      }
    }
    if (any) {
      out.source_regions.push_back(r);
      ++next_region;
    }
  }
  out.atlas.n_regions = next_region;
  out.empty = next_region == 0;
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw Error("adjusted_rand_index: label vectors differ in length");
  }
  const auto n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto comb2 = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0;
  for (const auto &[key, c] : table) {
    index += comb2(c);
  }
  double sum_rows = 0.0;
  double sum_cols = 0.0;
  for (const auto &[key, c] : rows) {
    sum_rows += comb2(c);
  }
  for (const auto &[key, c] : cols) {
    sum_cols += comb2(c);
  }
  const double expected = sum_rows * sum_cols / comb2(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) {
    return 1.0;
  }
  return (index - expected) / (max_index - expected);
}

std::string to_string(AtlasMethod method) {
  switch (method) {
  case AtlasMethod::kmeans:
    return "kmeans";
  case AtlasMethod::ward:
    return "ward";
  case AtlasMethod::ica:
    return "ica";
  case AtlasMethod::msdl:
    return "msdl";
  }
  return "unknown";
}

AtlasMethod parse_atlas_method(const std::string &name) {
  if (name == "kmeans") return AtlasMethod::kmeans;
  if (name == "ward") return AtlasMethod::ward;
  if (name == "ica") return AtlasMethod::ica;
  if (name == "msdl") return AtlasMethod::msdl;
  throw ConfigError("unknown atlas method '" + name + "' (expected kmeans, ward, ica or msdl)");
}

Matrix prepare_for_atlas(const Matrix &voxels, const LatticeDims &dims, const AtlasOptions &opts) {
  const Matrix smoothed = gaussian_smooth(voxels, dims, opts.fwhm_mm, opts.voxel_size_mm);
  return signal::detrend_standardize(smoothed).data;
}

Parcellation fit_atlas(std::span<const AtlasInput> inputs, const LatticeDims &dims,
                       const AtlasOptions &opts) {
  if (opts.method == AtlasMethod::ica || opts.method == AtlasMethod::msdl) {
    throw ConfigError("atlas method '" + to_string(opts.method) + "' is not implemented");
  }
  if (inputs.empty()) {
    throw Error("atlas estimation needs at least one training subject");
  }
  const auto p = static_cast<Eigen::Index>(dims.voxel_count());
  Matrix gram = Matrix::Zero(p, p);
  long total = 0;
  std::vector<int> used;
  for (const auto &in : inputs) {
    if (in.split == Split::test) {
      throw Error("atlas estimation refused test subject " + std::to_string(in.subject_id));
    }
    if (in.gram == nullptr || in.gram->rows() != p) {
      throw Error("missing or mis-sized voxel Gram for subject " + std::to_string(in.subject_id));
    }
    gram += *in.gram;
    total += in.n_timepoints;
    used.push_back(in.subject_id);
  }
  const Matrix profiles = voxel_profiles_from_gram(gram, total, opts.pca_components);
  Parcellation out = opts.method == AtlasMethod::kmeans
                         ? kmeans_parcellate(profiles, dims, opts.n_regions, opts.seed, opts.n_init)
                         : ward_parcellate(profiles, dims, opts.n_regions, lattice_adjacency(dims));
  std::sort(used.begin(), used.end());
  out.fit_subjects = std::move(used);
  return out;
}

} // namespace connectome::parcellation
