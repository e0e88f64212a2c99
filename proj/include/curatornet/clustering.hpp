#pragma once

// Visual clusters: PCA, k-means++ / Lloyd, silhouette-based restart selection.

#include "curatornet/data.hpp"
#include "curatornet/numerics.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace curatornet {

struct PcaResult {
  VectorD mean;
  MatrixD projection;  // input_dim x d, orthonormal columns, descending variance
  VectorD explained_variance;
  MatrixD reduced;     // n x d
};

/// Mean-centres `data` (rows are points) and projects onto the top-d
/// principal axes. Each axis is sign-normalised so that its largest-magnitude
/// entry is positive.
PcaResult pca_fit_transform(const Matrix& data, std::size_t d);
MatrixD pca_project(const PcaResult& pca, const Matrix& data);

struct KMeansResult {
  MatrixD centroids;  // k x d
  std::vector<int> labels;
  double inertia = 0.0;
  double seed_inertia = 0.0;
  std::vector<double> inertia_history;  // after each assignment step
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or max_iters is reached. Empty clusters are reseeded with the
/// point farthest from its centroid.
KMeansResult kmeans(const MatrixD& points, int k, int max_iters, Rng& rng);

/// Mean silhouette coefficient with Euclidean distance. Points in singleton
/// clusters contribute 0.
double silhouette(const MatrixD& points, std::span<const int> labels);

/// Silhouettes for several labelings of the same points, sharing the O(n^2)
/// distance computation.
std::vector<double> silhouette_many(const MatrixD& points, const std::vector<std::vector<int>>& labelings);

struct ClusterConfig {
  int k = 100;
  int pca_dim = 200;
  int restarts = 20;
  int max_iters = 300;
  std::uint64_t seed = 0;
};

struct ClusterModel {
  Vector mean;
  Matrix projection;  // input_dim x d; empty when loaded from disk
  Matrix centroids;   // k x d
  std::vector<std::int32_t> labels;  // by catalog item index
  double silhouette = 0.0;
  std::vector<double> restart_silhouettes;
  std::size_t selected_restart = 0;
  MatrixD reduced;    // PCA coordinates of the catalog; empty when loaded

  int k() const { return static_cast<int>(centroids.rows()); }
  std::int32_t label(ItemIndex i) const { return labels.at(i); }
};

/// PCA once, `restarts` k-means runs seeded seed + r, keep the run with the
/// highest silhouette (first on ties).
ClusterModel build_cluster_model(const Catalog& catalog, const ClusterConfig& config);

void save_cluster_model(const ClusterModel& model, const Catalog& catalog, const std::filesystem::path& path);
ClusterModel load_cluster_model(const std::filesystem::path& path, const Catalog& catalog);
std::string format_cluster_assignments(const ClusterModel& model, const Catalog& catalog);
/// `item_id\tx\ty\tcluster` over the first two principal components.
std::string format_projection_2d(const ClusterModel& model, const Catalog& catalog);

}  // namespace curatornet
