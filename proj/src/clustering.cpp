#include "curatornet/clustering.hpp"

#include "curatornet/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>
#include <sstream>

namespace curatornet {

namespace {

constexpr std::string_view kClusterMagic = "CNCLU1";

// Squared distances from every point to every centroid, nearest label first.
double assign(const MatrixD& points, const MatrixD& centroids, std::vector<int>& labels,
              std::vector<double>& dist2) {
  const Eigen::Index n = points.rows(), k = centroids.rows();
  labels.assign(static_cast<std::size_t>(n), 0);
  dist2.assign(static_cast<std::size_t>(n), 0.0);
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        best_c = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best_c;
    dist2[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

MatrixD seed_plus_plus(const MatrixD& points, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  MatrixD centroids(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t next = pick(rng);
  for (int c = 0; c < k; ++c) {
    chosen[next] = true;
    centroids.row(c) = points.row(static_cast<Eigen::Index>(next));
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).squaredNorm());
      if (!chosen[i]) total += d2[i];
    }
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      next = n;
      std::size_t last = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] <= 0.0) continue;
        last = i;
        acc += d2[i];
        if (acc > target) {
          next = i;
          break;
        }
      }
      if (next == n) next = last;
    } else {
      // Remaining points coincide with chosen centres; take any unchosen one.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      next = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
  }
  return centroids;
}

// Recomputes centroids as cluster means; returns true if an empty cluster had
// to be reseeded.
bool update_centroids(const MatrixD& points, std::vector<int>& labels, const std::vector<double>& dist2,
                      MatrixD& centroids) {
  const Eigen::Index k = centroids.rows();
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  centroids.setZero();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    centroids.row(labels[i]) += points.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  bool reseeded = false;
  std::vector<bool> taken(labels.size(), false);
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
      continue;
    }
    // Farthest point whose cluster can spare it.
    std::size_t far = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (taken[i] || counts[static_cast<std::size_t>(labels[i])] < 2) continue;
      if (far == labels.size() || dist2[i] > dist2[far]) far = i;
    }
    if (far == labels.size()) continue;
    taken[far] = true;
    --counts[static_cast<std::size_t>(labels[far])];
    labels[far] = static_cast<int>(c);
    counts[static_cast<std::size_t>(c)] = 1;
    centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
    reseeded = true;
  }
  if (reseeded) {
    // Means of clusters that donated a point changed.
    centroids.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      centroids.row(labels[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[static_cast<std::size_t>(labels[i])];
    }
    for (Eigen::Index c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  return reseeded;
}

}  // namespace

PcaResult pca_fit_transform(const Matrix& data, std::size_t d) {
  const auto n = static_cast<std::size_t>(data.rows());
  const auto dim = static_cast<std::size_t>(data.cols());
  if (d == 0) throw std::invalid_argument("pca: d must be positive");
  if (d > n) throw std::invalid_argument("pca: d=" + std::to_string(d) + " exceeds item count " + std::to_string(n));
  if (d > dim) throw std::invalid_argument("pca: d=" + std::to_string(d) + " exceeds input dimension " + std::to_string(dim));

  PcaResult out;
  const MatrixD x = data.cast<double>();
  out.mean = x.colwise().mean().transpose();
  const MatrixD centered = x.rowwise() - out.mean.transpose();
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  MatrixD axes(dim, d);
  out.explained_variance.resize(static_cast<Eigen::Index>(d));
  if (n < dim) {
    // Gram route: eigenvectors of X X^T map to principal axes via X^T u / sqrt(lambda).
    const MatrixD gram = centered * centered.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixD> solver(gram);
    for (std::size_t c = 0; c < d; ++c) {
      const Eigen::Index src = static_cast<Eigen::Index>(n - 1 - c);
      const double lambda = std::max(solver.eigenvalues()[src], 0.0);
      out.explained_variance[static_cast<Eigen::Index>(c)] = lambda / denom;
      VectorD axis = centered.transpose() * solver.eigenvectors().col(src);
      const double norm = axis.norm();
      if (norm > 1e-12 * std::max(1.0, std::sqrt(solver.eigenvalues().cwiseAbs().maxCoeff()))) {
        axis /= norm;
      } else {
        // Degenerate direction: complete the basis deterministically.
        axis.setZero();
        for (std::size_t e = 0; e < dim; ++e) {
          VectorD cand = VectorD::Unit(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(e));
          for (std::size_t p = 0; p < c; ++p) cand -= axes.col(static_cast<Eigen::Index>(p)).dot(cand) * axes.col(static_cast<Eigen::Index>(p));
          if (cand.norm() > 1e-6) {
            axis = cand.normalized();
            break;
          }
        }
      }
      axes.col(static_cast<Eigen::Index>(c)) = axis;
    }
  } else {
    const MatrixD cov = (centered.transpose() * centered) / denom;
    Eigen::SelfAdjointEigenSolver<MatrixD> solver(cov);
    for (std::size_t c = 0; c < d; ++c) {
      const Eigen::Index src = static_cast<Eigen::Index>(dim - 1 - c);
      out.explained_variance[static_cast<Eigen::Index>(c)] = std::max(solver.eigenvalues()[src], 0.0);
      axes.col(static_cast<Eigen::Index>(c)) = solver.eigenvectors().col(src);
    }
  }
  for (Eigen::Index c = 0; c < axes.cols(); ++c) {
    Eigen::Index arg = 0;
    axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (axes(arg, c) < 0) axes.col(c) *= -1.0;
  }
  out.projection = std::move(axes);
  out.reduced = centered * out.projection;
  return out;
}

MatrixD pca_project(const PcaResult& pca, const Matrix& data) {
  if (static_cast<Eigen::Index>(data.cols()) != pca.mean.size()) throw ShapeError("pca_project: dimension mismatch");
  return (data.cast<double>().rowwise() - pca.mean.transpose()) * pca.projection;
}

KMeansResult kmeans(const MatrixD& points, int k, int max_iters, Rng& rng) {
  if (k <= 0) throw std::invalid_argument("kmeans: k must be positive");
  if (static_cast<Eigen::Index>(k) > points.rows())
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds point count " + std::to_string(points.rows()));
  if (max_iters < 1) throw std::invalid_argument("kmeans: max_iters must be >= 1");

  KMeansResult out;
  out.centroids = seed_plus_plus(points, k, rng);
  std::vector<double> dist2;
  out.inertia = assign(points, out.centroids, out.labels, dist2);
  out.seed_inertia = out.inertia;
  out.inertia_history.push_back(out.inertia);
  std::vector<int> next_labels;
  for (int it = 1; it <= max_iters; ++it) {
    const bool reseeded = update_centroids(points, out.labels, dist2, out.centroids);
    out.inertia = assign(points, out.centroids, next_labels, dist2);
    out.inertia_history.push_back(out.inertia);
    out.iterations = it;
    const bool converged = !reseeded && next_labels == out.labels;
    out.labels.swap(next_labels);
    if (converged) break;
  }
  // Final centroids are the means of the final assignment.
  update_centroids(points, out.labels, dist2, out.centroids);
  out.inertia = 0.0;
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    out.inertia += (points.row(static_cast<Eigen::Index>(i)) - out.centroids.row(out.labels[i])).squaredNorm();
  return out;
}

std::vector<double> silhouette_many(const MatrixD& points, const std::vector<std::vector<int>>& labelings) {
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t runs = labelings.size();
  std::vector<int> cluster_count(runs, 0);
  std::vector<std::vector<std::size_t>> sizes(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    if (labelings[r].size() != n) throw ShapeError("silhouette: label count does not match point count");
    int k = 0;
    for (int l : labelings[r]) {
      if (l < 0) throw std::invalid_argument("silhouette: negative label");
      k = std::max(k, l + 1);
    }
    sizes[r].assign(static_cast<std::size_t>(k), 0);
    for (int l : labelings[r]) ++sizes[r][static_cast<std::size_t>(l)];
    for (std::size_t c : sizes[r]) cluster_count[r] += c > 0 ? 1 : 0;
    if (cluster_count[r] < 2) throw std::invalid_argument("silhouette: requires at least two non-empty clusters");
  }

  std::vector<double> per_point(n * runs, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const VectorD dist = (points.rowwise() - points.row(static_cast<Eigen::Index>(i))).rowwise().norm();
    std::vector<double> sums;
    for (std::size_t r = 0; r < runs; ++r) {
      const auto& labels = labelings[r];
      const auto own = static_cast<std::size_t>(labels[i]);
      if (sizes[r][own] <= 1) continue;  // singleton: contributes 0
      sums.assign(sizes[r].size(), 0.0);
      for (std::size_t j = 0; j < n; ++j) sums[static_cast<std::size_t>(labels[j])] += dist[static_cast<Eigen::Index>(j)];
      const double a = sums[own] / static_cast<double>(sizes[r][own] - 1);
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < sums.size(); ++c)
        if (c != own && sizes[r][c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[r][c]));
      const double m = std::max(a, b);
      per_point[r * n + i] = m > 0.0 ? (b - a) / m : 0.0;
    }
  });
  std::vector<double> out(runs, 0.0);
  for (std::size_t r = 0; r < runs; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += per_point[r * n + i];
    out[r] = s / static_cast<double>(n);
  }
  return out;
}

double silhouette(const MatrixD& points, std::span<const int> labels) {
  return silhouette_many(points, {std::vector<int>(labels.begin(), labels.end())}).front();
}

ClusterModel build_cluster_model(const Catalog& catalog, const ClusterConfig& config) {
  if (config.restarts < 1) throw std::invalid_argument("cluster: restarts must be >= 1");
  const PcaResult pca = pca_fit_transform(catalog.embeddings(), static_cast<std::size_t>(config.pca_dim));

  std::vector<KMeansResult> runs(static_cast<std::size_t>(config.restarts));
  parallel_for(runs.size(), [&](std::size_t r) {
    Rng rng(config.seed + r);
    runs[r] = kmeans(pca.reduced, config.k, config.max_iters, rng);
  });
  std::vector<std::vector<int>> labelings;
  for (const auto& run : runs) labelings.push_back(run.labels);
  const std::vector<double> scores = silhouette_many(pca.reduced, labelings);
  const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());

  ClusterModel model;
  model.mean = pca.mean.cast<float>();
  model.projection = pca.projection.cast<float>();
  model.centroids = runs[best].centroids.cast<float>();
  model.labels.assign(runs[best].labels.begin(), runs[best].labels.end());
  model.silhouette = scores[best];
  model.restart_silhouettes = scores;
  model.selected_restart = best;
  model.reduced = pca.reduced;
  return model;
}

void save_cluster_model(const ClusterModel& model, const Catalog& catalog, const std::filesystem::path& path) {
  if (model.labels.size() != catalog.size()) throw ShapeError("cluster model does not match catalog");
  BinaryWriter out;
  out.put_bytes(kClusterMagic);
  out.put(static_cast<std::uint32_t>(model.centroids.rows()));
  out.put(static_cast<std::uint32_t>(model.centroids.cols()));
  out.put(model.silhouette);
  out.put_array(std::span<const float>(model.centroids.data(), static_cast<std::size_t>(model.centroids.size())));
  out.put(static_cast<std::uint32_t>(catalog.size()));
  for (ItemIndex i = 0; i < catalog.size(); ++i) {
    out.put_short_string(catalog.id(i));
    out.put(static_cast<std::uint32_t>(model.labels[i]));
  }
  atomic_write_file(path, out.bytes());
}

ClusterModel load_cluster_model(const std::filesystem::path& path, const Catalog& catalog) {
  const std::string bytes = read_file(path);
  BinaryReader in(bytes, path.string());
  in.expect_magic(kClusterMagic);
  ClusterModel model;
  const auto k = in.get<std::uint32_t>();
  const auto d = in.get<std::uint32_t>();
  model.silhouette = in.get<double>();
  model.centroids.resize(k, d);
  in.get_array(std::span<float>(model.centroids.data(), static_cast<std::size_t>(k) * d));
  const auto count = in.get<std::uint32_t>();
  model.labels.assign(catalog.size(), -1);
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::string id = in.get_short_string();
    const auto label = in.get<std::uint32_t>();
    if (label >= k) throw FormatError(path.string() + ": label out of range for item " + id);
    if (auto idx = catalog.find(id)) model.labels[*idx] = static_cast<std::int32_t>(label);
  }
  if (in.remaining() != 0) throw FormatError(path.string() + ": trailing bytes");
  for (ItemIndex i = 0; i < catalog.size(); ++i)
    if (model.labels[i] < 0) throw FormatError(path.string() + ": no cluster label for catalog item " + catalog.id(i));
  return model;
}

std::string format_cluster_assignments(const ClusterModel& model, const Catalog& catalog) {
  std::string text = "item_id\tcluster\n";
  for (ItemIndex i = 0; i < catalog.size(); ++i) text += catalog.id(i) + "\t" + std::to_string(model.labels[i]) + "\n";
  return text;
}

std::string format_projection_2d(const ClusterModel& model, const Catalog& catalog) {
  std::ostringstream out;
  out.precision(9);
  out << "item_id\tx\ty\tcluster\n";
  for (ItemIndex i = 0; i < catalog.size(); ++i) {
    const double x = model.reduced.cols() > 0 ? model.reduced(i, 0) : 0.0;
    const double y = model.reduced.cols() > 1 ? model.reduced(i, 1) : 0.0;
    out << catalog.id(i) << '\t' << x << '\t' << y << '\t' << model.labels[i] << '\n';
  }
  return out.str();
}

}  // namespace curatornet
