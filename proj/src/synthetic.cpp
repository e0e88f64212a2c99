#include "curatornet/synthetic.hpp"

#include "curatornet/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <unordered_set>

namespace curatornet {

namespace {

std::string padded(char prefix, std::size_t n, std::size_t width) {
  std::string digits = std::to_string(n);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

std::size_t width_for(std::size_t n) { return std::to_string(n > 0 ? n - 1 : 0).size(); }

VectorD gaussian(std::size_t dim, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  VectorD v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace

SyntheticDataset make_synthetic(const SyntheticConfig& c) {
  if (c.items == 0 || c.users == 0 || c.styles == 0 || c.artists < c.styles || c.dim == 0)
    throw std::invalid_argument("synthetic: need items, users, dim > 0 and at least one artist per style");
  if (c.min_baskets == 0 || c.min_baskets > c.max_baskets || c.max_basket_size == 0)
    throw std::invalid_argument("synthetic: invalid basket ranges");
  Rng rng(c.seed);
  SyntheticDataset out;

  std::vector<VectorD> style_centre;
  for (std::size_t s = 0; s < c.styles; ++s) style_centre.push_back(gaussian(c.dim, c.style_scale, rng));
  std::vector<std::size_t> artist_style(c.artists);
  std::vector<VectorD> artist_centre;
  for (std::size_t a = 0; a < c.artists; ++a) {
    artist_style[a] = a % c.styles;
    artist_centre.push_back(style_centre[artist_style[a]] + gaussian(c.dim, c.artist_scale, rng));
  }

  std::vector<std::vector<ItemIndex>> by_artist(c.artists), by_style(c.styles);
  std::uniform_int_distribution<std::size_t> any_artist(0, c.artists - 1);
  const auto iw = width_for(c.items);
  const auto aw = width_for(c.artists);
  for (std::size_t i = 0; i < c.items; ++i) {
    // The first pass gives every artist at least one item.
    const std::size_t a = i < c.artists ? i : any_artist(rng);
    const VectorD f = artist_centre[a] + gaussian(c.dim, c.item_noise, rng);
    out.items.push_back({padded('i', i, iw), f.cast<float>(), padded('a', a, aw)});
    out.item_style.push_back(artist_style[a]);
    by_artist[a].push_back(static_cast<ItemIndex>(i));
    by_style[artist_style[a]].push_back(static_cast<ItemIndex>(i));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<char> unique(c.items, 0), sold(c.items, 0);
  for (std::size_t i = 0; i < c.items; ++i) unique[i] = unit(rng) < c.unique_share ? 1 : 0;

  struct Taste {
    std::vector<ItemIndex> artist_items;
    std::vector<ItemIndex> style_items;
    std::size_t baskets = 0;
  };
  std::vector<Taste> tastes(c.users);
  std::vector<UserHistory> histories(c.users);
  const auto uw = width_for(c.users);
  for (std::size_t u = 0; u < c.users; ++u) {
    std::vector<std::size_t> styles = {std::uniform_int_distribution<std::size_t>(0, c.styles - 1)(rng)};
    if (c.styles > 1 && unit(rng) < 0.5) {
      std::size_t second;
      do second = std::uniform_int_distribution<std::size_t>(0, c.styles - 1)(rng);
      while (second == styles[0]);
      styles.push_back(second);
    }
    std::vector<std::size_t> style_artists;
    for (std::size_t a = 0; a < c.artists; ++a)
      if (std::find(styles.begin(), styles.end(), artist_style[a]) != styles.end()) style_artists.push_back(a);
    std::shuffle(style_artists.begin(), style_artists.end(), rng);
    style_artists.resize(std::min<std::size_t>(style_artists.size(), 2 + (unit(rng) < 0.5 ? 1 : 0)));
    for (std::size_t a : style_artists)
      tastes[u].artist_items.insert(tastes[u].artist_items.end(), by_artist[a].begin(), by_artist[a].end());
    for (std::size_t s : styles)
      tastes[u].style_items.insert(tastes[u].style_items.end(), by_style[s].begin(), by_style[s].end());
    tastes[u].baskets = std::uniform_int_distribution<std::size_t>(c.min_baskets, c.max_baskets)(rng);
    histories[u].user_id = padded('u', u, uw);
  }

  std::vector<std::unordered_set<ItemIndex>> owned(c.users);
  // Draws from `pool` among items still for sale and not yet owned by the user.
  auto draw_from = [&](const std::vector<ItemIndex>& pool, std::size_t u) -> std::optional<ItemIndex> {
    if (pool.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int attempt = 0; attempt < 32; ++attempt) {
      const ItemIndex i = pool[pick(rng)];
      if (!sold[i] && !owned[u].contains(i)) return i;
    }
    return std::nullopt;
  };
  std::vector<ItemIndex> everything(c.items);
  std::iota(everything.begin(), everything.end(), ItemIndex{0});

  std::vector<std::size_t> order(c.users);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t round = 0; round < c.max_baskets; ++round) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t u : order) {
      if (round >= tastes[u].baskets) continue;
      const double r = unit(rng);
      const std::size_t size = std::min<std::size_t>(c.max_basket_size, r < 0.6 ? 1 : (r < 0.85 ? 2 : 3));
      Basket basket{static_cast<std::int64_t>(round), {}};
      for (std::size_t k = 0; k < size; ++k) {
        const double p = unit(rng);
        std::optional<ItemIndex> item;
        if (p < c.favorite_artist_share) item = draw_from(tastes[u].artist_items, u);
        if (!item && p < c.favorite_artist_share + c.favorite_style_share) item = draw_from(tastes[u].style_items, u);
        if (!item) item = draw_from(everything, u);
        if (!item) continue;
        owned[u].insert(*item);
        if (unique[*item]) sold[*item] = 1;
        basket.items.push_back(*item);
      }
      if (basket.items.empty()) continue;
      std::sort(basket.items.begin(), basket.items.end());
      histories[u].baskets.push_back(std::move(basket));
    }
  }
  for (auto& h : histories)
    if (!h.baskets.empty()) out.users.push_back(std::move(h));
  return out;
}

void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir) {
  const Catalog catalog = data.catalog();
  std::filesystem::create_directories(dir);
  save_embeddings_tsv(catalog, dir / "embeddings.tsv");
  save_artists(catalog, dir / "artists.tsv");
  atomic_write_file(dir / "transactions.tsv", format_transactions(data.log(), catalog));
}

Blobs make_blobs(int k, std::size_t per_blob, std::size_t dim, double separation, std::uint64_t seed) {
  if (k <= 0 || static_cast<std::size_t>(k) > dim || per_blob == 0)
    throw std::invalid_argument("make_blobs: need 0 < k <= dim and per_blob > 0");
  // Centres on scaled coordinate axes are pairwise exactly `separation` apart.
  const double scale = separation / std::sqrt(2.0);
  Rng rng(seed);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  Blobs out;
  out.points.resize(static_cast<Eigen::Index>(per_blob * static_cast<std::size_t>(k)), static_cast<Eigen::Index>(dim));
  Eigen::Index row = 0;
  for (int b = 0; b < k; ++b) {
    for (std::size_t p = 0; p < per_blob; ++p, ++row) {
      for (Eigen::Index d = 0; d < out.points.cols(); ++d) out.points(row, d) = noise(rng);
      out.points(row, b) += static_cast<float>(scale);
      out.labels.push_back(b);
    }
  }
  return out;
}

}  // namespace curatornet
