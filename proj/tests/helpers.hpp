#pragma once

#include "curatornet/data.hpp"
#include "curatornet/numerics.hpp"
#include "curatornet/io.hpp"
#include "curatornet/sampling.hpp"

#include <filesystem>
#include <unistd.h>
#include <random>
#include <string>
#include <vector>

namespace testing {

using namespace curatornet;

/// Catalog from explicit rows; ids are the given strings.
inline Catalog small_catalog(const std::vector<std::string>& ids, const std::vector<std::vector<float>>& rows) {
  std::vector<ItemRecord> records;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Vector v(static_cast<Eigen::Index>(rows[i].size()));
    for (std::size_t c = 0; c < rows[i].size(); ++c) v[static_cast<Eigen::Index>(c)] = rows[i][c];
    records.push_back({ids[i], v, std::nullopt});
  }
  return Catalog(std::move(records), rows.empty() ? 0 : rows[0].size());
}

/// n items with random gaussian rows; ids "x00", "x01", ...
inline Catalog random_catalog(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<ItemRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    Vector v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = normal(rng);
    std::string id = std::to_string(i);
    if (id.size() < 2) id.insert(0, "0");
    records.push_back({"x" + id, v, std::nullopt});
  }
  return Catalog(std::move(records), dim);
}

/// Flattens any weight struct with for_each_tensor into one vector.
template <typename W>
std::vector<double> flat(const W& w) {
  std::vector<double> out;
  w.for_each_tensor([&](const std::string&, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) out.push_back(static_cast<double>(t.data()[i]));
  });
  return out;
}

template <typename W>
void unflat(std::span<const double> theta, W& w) {
  std::size_t k = 0;
  w.for_each_tensor([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<typename std::remove_reference_t<decltype(t)>::Scalar>(theta[k++]);
  });
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("curatornet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
