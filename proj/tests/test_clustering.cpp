#include "curatornet/clustering.hpp"
#include "curatornet/synthetic.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace curatornet;

namespace {

// Labelings agree up to a renaming of the labels.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> fwd, back;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [f, fnew] = fwd.emplace(a[i], b[i]);
    auto [r, rnew] = back.emplace(b[i], a[i]);
    if (f->second != b[i] || r->second != a[i]) return false;
  }
  return true;
}

// Independent silhouette straight from the definition.
double silhouette_oracle(const MatrixD& x, const std::vector<int>& labels) {
  const auto n = static_cast<std::size_t>(x.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> by;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      auto& e = by[labels[j]];
      e.first += (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
      e.second++;
    }
    if (by.count(labels[i]) == 0) continue;
    const double a = by[labels[i]].first / by[labels[i]].second;
    double b = 1e300;
    for (auto& [l, e] : by)
      if (l != labels[i]) b = std::min(b, e.first / e.second);
    const double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("pca recovers an embedded low-dimensional subspace") {
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  // 3-d data rotated into 20 dims.
  MatrixD basis(3, 20);
  for (auto& v : basis.reshaped()) v = n(rng);
  Matrix data(50, 20);
  for (Eigen::Index r = 0; r < 50; ++r) {
    Eigen::RowVector3d c(n(rng), 2 * n(rng), 3 * n(rng));
    data.row(r) = (c * basis).cast<float>();
  }
  const PcaResult p = pca_fit_transform(data, 3);
  // Orthonormal columns.
  CHECK((p.projection.transpose() * p.projection - MatrixD::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-9);
  const MatrixD back = (p.reduced * p.projection.transpose()).rowwise() + p.mean.transpose();
  CHECK((back - data.cast<double>()).cwiseAbs().maxCoeff() < 1e-4);
  for (Eigen::Index c = 1; c < p.explained_variance.size(); ++c)
    CHECK(p.explained_variance[c - 1] >= p.explained_variance[c]);
}

TEST_CASE("pca two points, one component") {
  Matrix data(2, 3);
  data << 1, 2, 3, 4, 6, 3;
  const PcaResult p = pca_fit_transform(data, 1);
  const double half = (data.row(0) - data.row(1)).cast<double>().norm() / 2.0;
  CHECK(std::abs(p.reduced(0, 0)) == doctest::Approx(half));
  CHECK(p.reduced(0, 0) == doctest::Approx(-p.reduced(1, 0)));
}

TEST_CASE("pca projection is a contraction toward the mean") {
  const Catalog c = testing::random_catalog(40, 12, 5);
  const PcaResult p = pca_fit_transform(c.embeddings(), 4);
  const MatrixD centred = c.embeddings().cast<double>().rowwise() - p.mean.transpose();
  for (Eigen::Index r = 0; r < centred.rows(); ++r)
    CHECK(p.reduced.row(r).norm() <= centred.row(r).norm() + 1e-9);
  CHECK(pca_project(p, c.embeddings()).isApprox(p.reduced, 1e-9));
}

TEST_CASE("pca errors") {
  const Catalog c = testing::random_catalog(5, 8, 5);
  CHECK_THROWS(pca_fit_transform(c.embeddings(), 6));
  CHECK_THROWS(pca_fit_transform(c.embeddings(), 0));
  const Catalog wide = testing::random_catalog(20, 4, 5);
  CHECK_THROWS(pca_fit_transform(wide.embeddings(), 5));
}

TEST_CASE("kmeans: k = n gives zero inertia") {
  const Catalog c = testing::random_catalog(12, 3, 2);
  Rng rng(0);
  const auto r = kmeans(c.embeddings().cast<double>(), 12, 50, rng);
  CHECK(r.inertia == doctest::Approx(0.0));
  CHECK(std::set<int>(r.labels.begin(), r.labels.end()).size() == 12);
}

TEST_CASE("kmeans: k = 1 gives the mean") {
  const Catalog c = testing::random_catalog(30, 4, 3);
  Rng rng(0);
  const MatrixD x = c.embeddings().cast<double>();
  const auto r = kmeans(x, 1, 50, rng);
  CHECK((r.centroids.row(0) - x.colwise().mean()).norm() < 1e-12);
}

TEST_CASE("kmeans: two separated blobs are recovered and inertia never rises") {
  const Blobs b = make_blobs(2, 40, 6, 12.0, 4);
  Rng rng(4);
  const auto r = kmeans(b.points.cast<double>(), 2, 100, rng);
  CHECK(same_partition(r.labels, b.labels));
  for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
    CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
  CHECK(r.inertia <= r.seed_inertia + 1e-9);
}

TEST_CASE("kmeans: every cluster non-empty, errors on bad k") {
  const Catalog c = testing::random_catalog(25, 2, 8);
  Rng rng(1);
  const auto r = kmeans(c.embeddings().cast<double>(), 7, 100, rng);
  std::vector<int> counts(7, 0);
  for (int l : r.labels) counts[static_cast<std::size_t>(l)]++;
  for (int n : counts) CHECK(n > 0);
  CHECK_THROWS(kmeans(c.embeddings().cast<double>(), 0, 10, rng));
  CHECK_THROWS(kmeans(c.embeddings().cast<double>(), 26, 10, rng));
}

TEST_CASE("silhouette hand example: {0,1} vs {10,11}") {
  MatrixD x(4, 1);
  x << 0, 1, 10, 11;
  // a = 1 for every point; b = 10.5, 9.5, 9.5, 10.5
  const double expected = (2 * (1 - 1 / 10.5) + 2 * (1 - 1 / 9.5)) / 4;
  CHECK(silhouette(x, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(expected).epsilon(1e-12));
  // The spec's shorthand rounds both blobs to the outer value.
  CHECK(silhouette(x, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(1 - 1 / 10.5).epsilon(0.01));
}

TEST_CASE("silhouette limits and errors") {
  MatrixD same = MatrixD::Ones(4, 2);
  CHECK(silhouette(same, std::vector<int>{0, 0, 1, 1}) == 0.0);
  double prev = -1.0;
  for (double sep : {2.0, 10.0, 100.0, 1000.0}) {
    MatrixD x(4, 1);
    x << 0, 1, sep, sep + 1;
    const double s = silhouette(x, std::vector<int>{0, 0, 1, 1});
    CHECK(s > prev);
    prev = s;
  }
  CHECK(prev > 0.99);
  CHECK_THROWS(silhouette(same, std::vector<int>{0, 0, 0, 0}));
  // Singletons contribute zero.
  MatrixD y(3, 1);
  y << 0, 1, 50;
  CHECK(silhouette(y, std::vector<int>{0, 0, 1}) == doctest::Approx(((1 - 1 / 50.0) + (1 - 1 / 49.0)) / 3.0).epsilon(1e-12));
}

TEST_CASE("silhouette matches the brute-force definition") {
  const Catalog c = testing::random_catalog(30, 3, 12);
  const MatrixD x = c.embeddings().cast<double>();
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> labels(30);
    for (auto& l : labels) l = static_cast<int>(rng() % 4);
    labels[0] = 0;
    labels[1] = 1;
    CHECK(silhouette(x, labels) == doctest::Approx(silhouette_oracle(x, labels)).epsilon(1e-12));
  }
}

TEST_CASE("build_cluster_model: selection, determinism, restarts=1") {
  const Blobs b = make_blobs(4, 25, 10, 6.0, 7);
  std::vector<ItemRecord> recs;
  for (Eigen::Index r = 0; r < b.points.rows(); ++r) recs.push_back({"p" + std::to_string(r), b.points.row(r).transpose(), {}});
  const Catalog c(std::move(recs), 10);
  ClusterConfig cfg;
  cfg.k = 4;
  cfg.pca_dim = 6;
  cfg.restarts = 6;
  cfg.seed = 3;
  const ClusterModel m = build_cluster_model(c, cfg);
  CHECK(m.restart_silhouettes.size() == 6);
  CHECK(m.silhouette == *std::max_element(m.restart_silhouettes.begin(), m.restart_silhouettes.end()));
  CHECK(m.silhouette >= -1.0);
  CHECK(m.silhouette <= 1.0);
  CHECK(m.labels == build_cluster_model(c, cfg).labels);
  for (auto l : m.labels) CHECK((l >= 0 && l < 4));

  cfg.restarts = 1;
  const ClusterModel single = build_cluster_model(c, cfg);
  const PcaResult p = pca_fit_transform(c.embeddings(), 6);
  Rng rng(cfg.seed);
  const auto run = kmeans(p.reduced, 4, cfg.max_iters, rng);
  CHECK(std::vector<int>(single.labels.begin(), single.labels.end()) == run.labels);
}

TEST_CASE("cluster model persistence and dumps") {
  testing::TempDir dir;
  const Catalog c = testing::random_catalog(30, 5, 2);
  ClusterConfig cfg;
  cfg.k = 3;
  cfg.pca_dim = 4;
  cfg.restarts = 2;
  const ClusterModel m = build_cluster_model(c, cfg);
  save_cluster_model(m, c, dir / "c.bin");
  CHECK(read_file(dir / "c.bin").substr(0, 6) == "CNCLU1");
  const ClusterModel r = load_cluster_model(dir / "c.bin", c);
  CHECK(r.labels == m.labels);
  CHECK(r.silhouette == m.silhouette);
  CHECK(r.centroids == m.centroids);

  const std::string bytes = read_file(dir / "c.bin");
  atomic_write_file(dir / "bad.bin", "XXXXXX" + bytes.substr(6));
  CHECK_THROWS(load_cluster_model(dir / "bad.bin", c));
  atomic_write_file(dir / "cut.bin", bytes.substr(0, bytes.size() - 2));
  CHECK_THROWS(load_cluster_model(dir / "cut.bin", c));

  const std::string tsv = format_cluster_assignments(m, c);
  CHECK(tsv.rfind("item_id\tcluster\n", 0) == 0);
  const std::string proj = format_projection_2d(m, c);
  CHECK(std::count(proj.begin(), proj.end(), '\n') >= 30);
}

}  // TEST_SUITE
