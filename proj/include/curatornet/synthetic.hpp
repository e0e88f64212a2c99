#pragma once

// Planted datasets for tests and desk-scale experiments.

#include "curatornet/data.hpp"

#include <filesystem>

namespace curatornet {

/// Items are grouped into visual styles; every artist works in one style and
/// each item is its artist's centre plus noise. Users prefer one or two
/// styles and a few artists inside them, and buy mostly from those. A share of
/// the items are one-of-a-kind: once sold they leave the inventory. Baskets
/// are generated in rounds across users so the inventory depletes over time.
struct SyntheticConfig {
  std::size_t users = 300;
  std::size_t items = 1000;
  std::size_t styles = 10;
  std::size_t artists = 100;
  std::size_t dim = 64;
  double style_scale = 1.0;
  double artist_scale = 0.375;
  double item_noise = 0.25;
  std::size_t min_baskets = 2;
  std::size_t max_baskets = 3;
  std::size_t max_basket_size = 3;
  double favorite_artist_share = 0.5;  // purchases from a favourite artist
  double favorite_style_share = 0.4;   // other items of a favourite style
  double unique_share = 0.8;           // items that can be sold only once
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  std::vector<ItemRecord> items;
  std::vector<std::size_t> item_style;
  std::vector<UserHistory> users;

  Catalog catalog() const { return Catalog(items, items.empty() ? 0 : static_cast<std::size_t>(items[0].embedding.size())); }
  InteractionLog log() const { return InteractionLog(users); }
};

SyntheticDataset make_synthetic(const SyntheticConfig& config);

/// Writes embeddings.tsv, artists.tsv and transactions.tsv into `dir`.
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir);

struct Blobs {
  Matrix points;
  std::vector<int> labels;
};

/// `k` isotropic Gaussian blobs of `per_blob` points in `dim` dimensions with
/// unit noise; centres are pairwise at least `separation` apart.
Blobs make_blobs(int k, std::size_t per_blob, std::size_t dim, double separation, std::uint64_t seed);

}  // namespace curatornet
