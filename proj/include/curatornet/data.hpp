#pragma once

// Item catalog, purchase-basket logs and the leave-last-basket-out split.

#include "curatornet/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace curatornet {

using ItemIndex = std::uint32_t;
inline constexpr std::size_t kEmbeddingDim = 2048;
inline constexpr std::int32_t kNoArtist = -1;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ItemRecord {
  std::string item_id;
  Vector embedding;
  std::optional<std::string> artist_id;
};

/// Immutable set of items with their visual embeddings. Item indices follow
/// insertion order; artists are interned in lexicographic id order so that
/// comparing artist indices compares artist ids.
class Catalog {
 public:
  Catalog() = default;
  /// Validates uniqueness, dimension, finiteness and non-zero norm.
  Catalog(std::vector<ItemRecord> records, std::size_t expected_dim = kEmbeddingDim);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings_.cols()); }
  const std::string& id(ItemIndex i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::optional<ItemIndex> find(const std::string& item_id) const;
  ItemIndex index_of(const std::string& item_id) const;

  const Matrix& embeddings() const { return embeddings_; }
  auto embedding(ItemIndex i) const { return embeddings_.row(i); }

  bool has_artists() const { return !artist_names_.empty(); }
  std::int32_t artist(ItemIndex i) const { return artists_.empty() ? kNoArtist : artists_[i]; }
  const std::vector<std::string>& artist_names() const { return artist_names_; }
  std::size_t artist_count() const { return artist_names_.size(); }

  /// Attaches artist ids; items missing from the map keep kNoArtist.
  void set_artists(const std::unordered_map<std::string, std::string>& item_to_artist);

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, ItemIndex> index_;
  Matrix embeddings_;
  std::vector<std::int32_t> artists_;
  std::vector<std::string> artist_names_;
};

struct Basket {
  std::int64_t index = 0;
  std::vector<ItemIndex> items;  // sorted, unique, non-empty
};

struct UserHistory {
  std::string user_id;
  std::vector<Basket> baskets;    // strictly increasing basket index
  std::vector<ItemIndex> positives;  // I_u^+, sorted

  /// Union of baskets [0, k] (zero-based position).
  std::vector<ItemIndex> items_up_to(std::size_t k) const;
  bool owns(ItemIndex item) const;
};

/// Purchase baskets grouped by user, users ordered by id.
class InteractionLog {
 public:
  InteractionLog() = default;
  explicit InteractionLog(std::vector<UserHistory> users);

  std::size_t user_count() const { return users_.size(); }
  const UserHistory& user(std::size_t u) const { return users_.at(u); }
  const std::vector<UserHistory>& users() const { return users_; }
  std::optional<std::size_t> find_user(const std::string& user_id) const;
  std::size_t basket_count() const;
  std::size_t purchase_count() const;
  bool empty() const { return users_.empty(); }

 private:
  std::vector<UserHistory> users_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TestBasket {
  std::size_t train_user = 0;  // index into Split::train
  std::string user_id;
  std::int64_t basket_index = 0;
  std::vector<ItemIndex> items;
};

struct Split {
  InteractionLog train;
  std::vector<TestBasket> test;
};

// Ingestion. All errors are DataError with the offending line/row number.
// An expected_dim of 0 accepts whatever dimension the file carries.
Catalog load_embeddings(const std::filesystem::path& path, std::size_t expected_dim = kEmbeddingDim);
Catalog load_embeddings_tsv(const std::filesystem::path& path, std::size_t expected_dim = kEmbeddingDim);
Catalog load_embeddings_binary(const std::filesystem::path& path, std::size_t expected_dim = kEmbeddingDim);
void save_embeddings_binary(const Catalog& catalog, const std::filesystem::path& path);
void save_embeddings_tsv(const Catalog& catalog, const std::filesystem::path& path);

/// Reads `item_id\tartist_id` (with header) and attaches it to the catalog.
void load_artists(const std::filesystem::path& path, Catalog& catalog);
void save_artists(const Catalog& catalog, const std::filesystem::path& path);

struct TransactionOptions {
  /// Each row becomes its own basket, in file order per user.
  bool one_item_baskets = false;
};

InteractionLog load_transactions(const std::filesystem::path& path, const Catalog& catalog,
                                 const TransactionOptions& opts = {});
InteractionLog parse_transactions(const std::string& text, const Catalog& catalog,
                                  const TransactionOptions& opts = {}, const std::string& source = "<memory>");
std::string format_transactions(const InteractionLog& log, const Catalog& catalog);

/// Hides each user's final basket when the user has at least two baskets.
/// Items of the final basket the user already bought earlier are removed from
/// the test basket; if nothing remains, the basket stays in train.
Split split_train_test(const InteractionLog& log);

std::string format_test_baskets(const Split& split, const Catalog& catalog);
/// Sorted `user_id\titem_id` listing of the held-out pairs.
std::string format_split_manifest(const Split& split, const Catalog& catalog);

void save_split(const Split& split, const Catalog& catalog, const std::filesystem::path& dir);
Split load_split(const std::filesystem::path& dir, const Catalog& catalog);

}  // namespace curatornet
