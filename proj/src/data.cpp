#include "curatornet/data.hpp"

#include "curatornet/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace curatornet {

namespace {

constexpr std::string_view kEmbeddingMagic = "CNEMB1";

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return out;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    fn(strip_cr(text.substr(start, nl - start)), line_no);
    start = nl + 1;
  }
}

std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

}  // namespace

Catalog::Catalog(std::vector<ItemRecord> records, std::size_t expected_dim) {
  ids_.reserve(records.size());
  embeddings_.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(expected_dim));
  std::unordered_map<std::string, std::string> artists;
  for (std::size_t r = 0; r < records.size(); ++r) {
    auto& rec = records[r];
    const std::string row = "row " + std::to_string(r + 1) + " (" + rec.item_id + "): ";
    if (rec.item_id.empty()) throw DataError(row + "empty item id");
    if (static_cast<std::size_t>(rec.embedding.size()) != expected_dim)
      throw DataError(row + "dimension mismatch: expected " + std::to_string(expected_dim) + ", got " +
                      std::to_string(rec.embedding.size()));
    if (!rec.embedding.allFinite()) throw DataError(row + "non-finite embedding value");
    if (!(rec.embedding.cast<double>().norm() > 0.0)) throw DataError(row + "zero-norm embedding");
    if (!index_.emplace(rec.item_id, static_cast<ItemIndex>(r)).second)
      throw DataError(row + "duplicate item id");
    embeddings_.row(static_cast<Eigen::Index>(r)) = rec.embedding.transpose();
    if (rec.artist_id) artists.emplace(rec.item_id, *rec.artist_id);
    ids_.push_back(std::move(rec.item_id));
  }
  if (!artists.empty()) set_artists(artists);
}

std::optional<ItemIndex> Catalog::find(const std::string& item_id) const {
  auto it = index_.find(item_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ItemIndex Catalog::index_of(const std::string& item_id) const {
  auto found = find(item_id);
  if (!found) throw DataError("unknown item id: " + item_id);
  return *found;
}

void Catalog::set_artists(const std::unordered_map<std::string, std::string>& item_to_artist) {
  std::set<std::string> names;
  for (const auto& [item, artist] : item_to_artist) {
    if (!find(item)) throw DataError("artist entry for unknown item id: " + item);
    names.insert(artist);
  }
  artist_names_.assign(names.begin(), names.end());
  std::unordered_map<std::string, std::int32_t> artist_index;
  for (std::size_t a = 0; a < artist_names_.size(); ++a) artist_index[artist_names_[a]] = static_cast<std::int32_t>(a);
  artists_.assign(ids_.size(), kNoArtist);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    auto it = item_to_artist.find(ids_[i]);
    if (it != item_to_artist.end()) artists_[i] = artist_index.at(it->second);
  }
}

std::vector<ItemIndex> UserHistory::items_up_to(std::size_t k) const {
  std::vector<ItemIndex> out;
  for (std::size_t b = 0; b <= k && b < baskets.size(); ++b)
    out.insert(out.end(), baskets[b].items.begin(), baskets[b].items.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool UserHistory::owns(ItemIndex item) const {
  return std::binary_search(positives.begin(), positives.end(), item);
}

InteractionLog::InteractionLog(std::vector<UserHistory> users) : users_(std::move(users)) {
  std::sort(users_.begin(), users_.end(),
            [](const UserHistory& a, const UserHistory& b) { return a.user_id < b.user_id; });
  for (std::size_t u = 0; u < users_.size(); ++u) {
    auto& user = users_[u];
    if (!index_.emplace(user.user_id, u).second) throw DataError("duplicate user id: " + user.user_id);
    if (user.baskets.empty()) throw DataError("user without baskets: " + user.user_id);
    std::sort(user.baskets.begin(), user.baskets.end(),
              [](const Basket& a, const Basket& b) { return a.index < b.index; });
    for (std::size_t b = 0; b < user.baskets.size(); ++b) {
      auto& items = user.baskets[b].items;
      std::sort(items.begin(), items.end());
      items.erase(std::unique(items.begin(), items.end()), items.end());
      if (items.empty()) throw DataError("empty basket for user " + user.user_id);
      if (b > 0 && user.baskets[b].index <= user.baskets[b - 1].index)
        throw DataError("basket indices not strictly increasing for user " + user.user_id);
    }
    user.positives = user.items_up_to(user.baskets.size() - 1);
  }
}

std::optional<std::size_t> InteractionLog::find_user(const std::string& user_id) const {
  auto it = index_.find(user_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t InteractionLog::basket_count() const {
  std::size_t n = 0;
  for (const auto& u : users_) n += u.baskets.size();
  return n;
}

std::size_t InteractionLog::purchase_count() const {
  std::size_t n = 0;
  for (const auto& u : users_)
    for (const auto& b : u.baskets) n += b.items.size();
  return n;
}

Catalog load_embeddings(const std::filesystem::path& path, std::size_t expected_dim) {
  const std::string head = [&] {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embeddings file " + path.string());
    std::string buf(kEmbeddingMagic.size(), '\0');
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    buf.resize(static_cast<std::size_t>(in.gcount()));
    return buf;
  }();
  if (head == kEmbeddingMagic) return load_embeddings_binary(path, expected_dim);
  return load_embeddings_tsv(path, expected_dim);
}

Catalog load_embeddings_tsv(const std::filesystem::path& path, std::size_t expected_dim) {
  const std::string text = read_file(path);
  const std::string source = path.string();
  std::vector<ItemRecord> records;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    const auto fields = split_tabs(line);
    if (expected_dim == 0) expected_dim = fields.size() - 1;
    if (fields.size() - 1 != expected_dim)
      throw DataError(where(source, line_no) + "dimension mismatch: expected " + std::to_string(expected_dim) +
                      " values, got " + std::to_string(fields.size() - 1));
    ItemRecord rec;
    rec.item_id = std::string(fields[0]);
    rec.embedding.resize(static_cast<Eigen::Index>(expected_dim));
    for (std::size_t c = 1; c < fields.size(); ++c) {
      float v = 0.0f;
      const auto f = fields[c];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw DataError(where(source, line_no) + "bad number in column " + std::to_string(c + 1));
      if (!std::isfinite(v)) throw DataError(where(source, line_no) + "non-finite value");
      rec.embedding[static_cast<Eigen::Index>(c - 1)] = v;
    }
    if (!(rec.embedding.cast<double>().norm() > 0.0))
      throw DataError(where(source, line_no) + "zero-norm embedding");
    records.push_back(std::move(rec));
  });
  if (records.empty()) throw DataError(source + ": no embeddings");
  try {
    return Catalog(std::move(records), expected_dim);
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
}

Catalog load_embeddings_binary(const std::filesystem::path& path, std::size_t expected_dim) {
  const std::string bytes = read_file(path);
  BinaryReader in(bytes, path.string());
  try {
    in.expect_magic(kEmbeddingMagic);
    const auto count = in.get<std::uint32_t>();
    const auto dim = in.get<std::uint32_t>();
    if (expected_dim != 0 && dim != expected_dim)
      throw DataError(path.string() + ": dimension mismatch: expected " + std::to_string(expected_dim) + ", got " +
                      std::to_string(dim));
    std::vector<ItemRecord> records(count);
    for (auto& rec : records) {
      rec.item_id = in.get_short_string();
      rec.embedding.resize(dim);
      in.get_array(std::span<float>(rec.embedding.data(), dim));
    }
    return Catalog(std::move(records), dim);
  } catch (const FormatError& e) {
    throw DataError(e.what());
  }
}

void save_embeddings_binary(const Catalog& catalog, const std::filesystem::path& path) {
  BinaryWriter out;
  out.put_bytes(kEmbeddingMagic);
  out.put(static_cast<std::uint32_t>(catalog.size()));
  out.put(static_cast<std::uint32_t>(catalog.dim()));
  for (ItemIndex i = 0; i < catalog.size(); ++i) {
    out.put_short_string(catalog.id(i));
    const auto row = catalog.embedding(i);
    out.put_array(std::span<const float>(row.data(), catalog.dim()));
  }
  atomic_write_file(path, out.bytes());
}

void save_embeddings_tsv(const Catalog& catalog, const std::filesystem::path& path) {
  std::string text;
  char buf[32];
  for (ItemIndex i = 0; i < catalog.size(); ++i) {
    text += catalog.id(i);
    const auto row = catalog.embedding(i);
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), row[c]);
      text.push_back('\t');
      text.append(buf, ptr);
    }
    text.push_back('\n');
  }
  atomic_write_file(path, text);
}

void load_artists(const std::filesystem::path& path, Catalog& catalog) {
  const std::string text = read_file(path);
  const std::string source = path.string();
  std::unordered_map<std::string, std::string> map;
  bool header = true;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    const auto fields = split_tabs(line);
    if (header) {
      if (fields.size() < 2 || fields[0] != "item_id" || fields[1] != "artist_id")
        throw DataError(where(source, line_no) + "expected header item_id\\tartist_id");
      header = false;
      return;
    }
    if (fields.size() != 2) throw DataError(where(source, line_no) + "expected 2 columns");
    if (!catalog.find(std::string(fields[0])))
      throw DataError(where(source, line_no) + "unknown item id " + std::string(fields[0]));
    if (fields[1].empty()) return;
    if (!map.emplace(std::string(fields[0]), std::string(fields[1])).second)
      throw DataError(where(source, line_no) + "duplicate item id " + std::string(fields[0]));
  });
  if (header) throw DataError(source + ": empty file");
  catalog.set_artists(map);
}

void save_artists(const Catalog& catalog, const std::filesystem::path& path) {
  std::string text = "item_id\tartist_id\n";
  for (ItemIndex i = 0; i < catalog.size(); ++i) {
    if (catalog.artist(i) == kNoArtist) continue;
    text += catalog.id(i) + "\t" + catalog.artist_names()[static_cast<std::size_t>(catalog.artist(i))] + "\n";
  }
  atomic_write_file(path, text);
}

InteractionLog load_transactions(const std::filesystem::path& path, const Catalog& catalog,
                                 const TransactionOptions& opts) {
  return parse_transactions(read_file(path), catalog, opts, path.string());
}

InteractionLog parse_transactions(const std::string& text, const Catalog& catalog, const TransactionOptions& opts,
                                  const std::string& source) {
  int col_user = -1, col_item = -1, col_basket = -1;
  bool header = true;
  // user -> basket index -> items; std::map keeps basket order.
  std::map<std::string, std::map<std::int64_t, std::vector<ItemIndex>>> grouped;
  std::unordered_map<std::string, std::int64_t> row_counter;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    if (line.empty()) return;
    const auto fields = split_tabs(line);
    if (header) {
      for (std::size_t c = 0; c < fields.size(); ++c) {
        if (fields[c] == "user_id") col_user = static_cast<int>(c);
        else if (fields[c] == "item_id") col_item = static_cast<int>(c);
        else if (fields[c] == "basket_index") col_basket = static_cast<int>(c);
      }
      if (col_user < 0) throw DataError(where(source, line_no) + "missing column user_id");
      if (col_item < 0) throw DataError(where(source, line_no) + "missing column item_id");
      if (col_basket < 0 && !opts.one_item_baskets)
        throw DataError(where(source, line_no) + "missing column basket_index (use one-item baskets to derive it)");
      header = false;
      return;
    }
    const int needed = std::max({col_user, col_item, opts.one_item_baskets ? -1 : col_basket}) + 1;
    if (static_cast<int>(fields.size()) < needed)
      throw DataError(where(source, line_no) + "expected " + std::to_string(needed) + " columns");
    const std::string user(fields[static_cast<std::size_t>(col_user)]);
    const std::string item(fields[static_cast<std::size_t>(col_item)]);
    if (user.empty()) throw DataError(where(source, line_no) + "empty user id");
    const auto idx = catalog.find(item);
    if (!idx) throw DataError(where(source, line_no) + "unknown item id " + item);
    std::int64_t basket = 0;
    if (opts.one_item_baskets) {
      basket = row_counter[user]++;
    } else {
      const auto f = fields[static_cast<std::size_t>(col_basket)];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), basket);
      if (ec != std::errc() || ptr != f.data() + f.size() || basket < 0)
        throw DataError(where(source, line_no) + "bad basket_index");
    }
    grouped[user][basket].push_back(*idx);
  });
  if (header) throw DataError(source + ": empty file");
  if (grouped.empty()) throw DataError(source + ": no transactions");
  std::vector<UserHistory> users;
  users.reserve(grouped.size());
  for (auto& [user, baskets] : grouped) {
    UserHistory h;
    h.user_id = user;
    for (auto& [index, items] : baskets) h.baskets.push_back({index, std::move(items)});
    users.push_back(std::move(h));
  }
  return InteractionLog(std::move(users));
}

std::string format_transactions(const InteractionLog& log, const Catalog& catalog) {
  std::string text = "user_id\titem_id\tbasket_index\n";
  for (const auto& user : log.users())
    for (const auto& basket : user.baskets)
      for (ItemIndex item : basket.items)
        text += user.user_id + "\t" + catalog.id(item) + "\t" + std::to_string(basket.index) + "\n";
  return text;
}

Split split_train_test(const InteractionLog& log) {
  if (log.empty()) throw DataError("split_train_test: empty log");
  std::vector<UserHistory> train;
  std::vector<TestBasket> test;
  train.reserve(log.user_count());
  for (const auto& user : log.users()) {
    UserHistory h;
    h.user_id = user.user_id;
    h.baskets = user.baskets;
    if (user.baskets.size() >= 2) {
      const auto history = user.items_up_to(user.baskets.size() - 2);
      TestBasket t;
      t.user_id = user.user_id;
      t.basket_index = user.baskets.back().index;
      std::set_difference(user.baskets.back().items.begin(), user.baskets.back().items.end(), history.begin(),
                          history.end(), std::back_inserter(t.items));
      if (!t.items.empty()) {
        h.baskets.pop_back();
        test.push_back(std::move(t));
      }
    }
    train.push_back(std::move(h));
  }
  Split split{InteractionLog(std::move(train)), std::move(test)};
  for (auto& t : split.test) t.train_user = *split.train.find_user(t.user_id);
  return split;
}

std::string format_test_baskets(const Split& split, const Catalog& catalog) {
  std::string text = "user_id\titem_id\tbasket_index\n";
  for (const auto& t : split.test)
    for (ItemIndex item : t.items)
      text += t.user_id + "\t" + catalog.id(item) + "\t" + std::to_string(t.basket_index) + "\n";
  return text;
}

std::string format_split_manifest(const Split& split, const Catalog& catalog) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& t : split.test)
    for (ItemIndex item : t.items) pairs.emplace_back(t.user_id, catalog.id(item));
  std::sort(pairs.begin(), pairs.end());
  std::ostringstream out;
  out << "# held-out final baskets: " << split.test.size() << " users, " << pairs.size() << " pairs\n";
  out << "# train: " << split.train.user_count() << " users, " << split.train.basket_count() << " baskets\n";
  for (const auto& [u, i] : pairs) out << u << '\t' << i << '\n';
  return out.str();
}

void save_split(const Split& split, const Catalog& catalog, const std::filesystem::path& dir) {
  atomic_write_file(dir / "train.tsv", format_transactions(split.train, catalog));
  atomic_write_file(dir / "test.tsv", format_test_baskets(split, catalog));
  atomic_write_file(dir / "split_manifest.txt", format_split_manifest(split, catalog));
}

Split load_split(const std::filesystem::path& dir, const Catalog& catalog) {
  Split split;
  split.train = load_transactions(dir / "train.tsv", catalog);
  const auto test_path = dir / "test.tsv";
  const std::string text = read_file(test_path);
  // Test baskets reuse the transactions layout; a header-only file means no test users.
  std::size_t rows = 0;
  for_each_line(text, [&](std::string_view line, std::size_t) { rows += line.empty() ? 0 : 1; });
  const bool has_rows = rows > 1;
  if (!has_rows) return split;
  const InteractionLog test_log = parse_transactions(text, catalog, {}, test_path.string());
  for (const auto& user : test_log.users()) {
    if (user.baskets.size() != 1)
      throw DataError(test_path.string() + ": user " + user.user_id + " has more than one test basket");
    const auto train_user = split.train.find_user(user.user_id);
    if (!train_user) throw DataError(test_path.string() + ": test user " + user.user_id + " absent from train");
    split.test.push_back({*train_user, user.user_id, user.baskets[0].index, user.baskets[0].items});
  }
  return split;
}

}  // namespace curatornet
