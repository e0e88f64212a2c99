#include "curatornet/sampling.hpp"

#include "curatornet/io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <sstream>

namespace curatornet {

namespace {

constexpr std::string_view kTripleMagic = "CNTRP1";
constexpr int kNegativeTries = 64;

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return derive_seed(h ^ v, v); }

std::uint64_t artist_cluster_key(std::int32_t artist, std::int32_t cluster) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(artist)) << 32) | static_cast<std::uint32_t>(cluster);
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::vector<ItemIndex> without(const std::vector<ItemIndex>& items, ItemIndex drop) {
  std::vector<ItemIndex> out;
  out.reserve(items.size());
  for (ItemIndex i : items)
    if (i != drop) out.push_back(i);
  return out;
}

template <typename Pred>
std::optional<ItemIndex> draw_negative(const SamplingContext& ctx, const UserHistory& user, Rng& rng, Pred&& accept) {
  std::uniform_int_distribution<ItemIndex> any(0, static_cast<ItemIndex>(ctx.catalog().size() - 1));
  for (int t = 0; t < kNegativeTries; ++t) {
    const ItemIndex j = any(rng);
    if (!user.owns(j) && accept(j)) return j;
  }
  return std::nullopt;
}

using ExcludeList = std::vector<const std::unordered_set<std::uint64_t>*>;

bool excluded(const ExcludeList& excludes, std::uint64_t h) {
  for (const auto* set : excludes)
    if (set && set->contains(h)) return true;
  return false;
}

std::optional<TrainingTriple> draw_one(int strategy, const SamplingContext& ctx, Rng& rng);

TripleSet run_sampler(int strategy, std::size_t count, const SamplingContext& ctx, Rng& rng,
                      const ExcludeList& excludes, SampleReport* report) {
  TripleSet out;
  SampleReport rep;
  rep.requested = count;
  const auto& pool = ctx.pool(strategy);
  if ((strategy == 3 || strategy == 6) && !ctx.catalog().has_artists()) {
    rep.exhausted = count > 0;
    rep.warning = "strategy " + std::to_string(strategy) + " needs artist metadata; no triples emitted";
  } else if (pool.users.empty()) {
    rep.exhausted = count > 0;
    rep.warning = "strategy " + std::to_string(strategy) + " has no eligible users";
  } else {
    const std::size_t budget = ctx.options().budget_factor * count;
    while (out.size() < count && rep.attempts < budget) {
      ++rep.attempts;
      auto t = draw_one(strategy, ctx, rng);
      if (!t || excluded(excludes, triple_hash(*t))) continue;
      out.insert(std::move(*t));
    }
    if (out.size() < count) {
      rep.exhausted = true;
      rep.warning = "strategy " + std::to_string(strategy) + ": attempt budget exhausted after " +
                    std::to_string(out.size()) + " of " + std::to_string(count) + " triples";
    }
  }
  rep.accepted = out.size();
  if (!rep.warning.empty()) spdlog::warn("{}", rep.warning);
  if (report) *report = rep;
  return out;
}

}  // namespace

std::uint64_t triple_hash(const TrainingTriple& t) {
  std::vector<ItemIndex> profile = t.profile;
  if (!std::is_sorted(profile.begin(), profile.end())) std::sort(profile.begin(), profile.end());
  std::uint64_t h = 0xC0A7012E7ULL;
  h = mix(h, profile.size());
  for (ItemIndex i : profile) h = mix(h, i);
  h = mix(h, 0xFFFFFFFF00000000ULL | t.positive);
  h = mix(h, 0xFFFFFFFE00000000ULL | t.negative);
  return h;
}

bool TripleSet::insert(TrainingTriple t) {
  if (!hashes_.insert(triple_hash(t)).second) return false;
  ++counts_.at(t.strategy);
  triples_.push_back(std::move(t));
  return true;
}

SamplingContext::SamplingContext(const InteractionLog& train, const Catalog& catalog,
                                 std::vector<std::int32_t> cluster_labels, SamplerOptions options)
    : train_(&train), catalog_(&catalog), labels_(std::move(cluster_labels)), options_(options) {
  if (labels_.size() != catalog.size()) throw std::invalid_argument("sampling: cluster labels do not cover the catalog");
  if (train.empty()) throw std::invalid_argument("sampling: empty train log");
  std::int32_t k = 0;
  for (auto l : labels_) {
    if (l < 0) throw std::invalid_argument("sampling: negative cluster label");
    k = std::max(k, l + 1);
  }
  cluster_members_.resize(static_cast<std::size_t>(k));
  for (ItemIndex i = 0; i < catalog.size(); ++i) {
    cluster_members_[static_cast<std::size_t>(labels_[i])].push_back(i);
    if (catalog.artist(i) != kNoArtist) artist_cluster_[artist_cluster_key(catalog.artist(i), labels_[i])].push_back(i);
  }

  const std::size_t n_items = catalog.size();
  for (std::size_t u = 0; u < train.user_count(); ++u) {
    const auto& user = train.user(u);
    auto add = [&](int s, std::vector<std::uint32_t> choices) {
      if (choices.empty()) return;
      pools_[static_cast<std::size_t>(s)].users.push_back(u);
      pools_[static_cast<std::size_t>(s)].choices.push_back(std::move(choices));
    };
    std::vector<std::uint32_t> c1, c2, c3, c5, c6;
    for (std::size_t b = 0; b < user.baskets.size(); ++b) {
      if (user.baskets[b].items.size() >= 2 || b >= 1) c1.push_back(static_cast<std::uint32_t>(b));
      if (b >= 1) c2.push_back(static_cast<std::uint32_t>(b));
    }
    add(1, std::move(c1));
    add(2, std::move(c2));

    if (catalog.has_artists()) {
      std::vector<std::int32_t> user_clusters;
      for (ItemIndex i : user.positives) user_clusters.push_back(labels_[i]);
      std::sort(user_clusters.begin(), user_clusters.end());
      user_clusters.erase(std::unique(user_clusters.begin(), user_clusters.end()), user_clusters.end());
      for (std::int32_t a : favorite_artists(u))
        for (std::int32_t c : user_clusters) {
          auto it = artist_cluster_.find(artist_cluster_key(a, c));
          if (it == artist_cluster_.end()) continue;
          for (ItemIndex i : it->second)
            if (!user.owns(i)) c3.push_back(i);
        }
      std::sort(c3.begin(), c3.end());
      c3.erase(std::unique(c3.begin(), c3.end()), c3.end());
    }
    add(3, std::move(c3));

    if (user.positives.size() >= 2) add(4, {0});
    for (ItemIndex x : user.positives) {
      if (cluster_members_[static_cast<std::size_t>(labels_[x])].size() >= 2) c5.push_back(x);
      if (catalog.artist(x) != kNoArtist && artist_cluster_members(catalog.artist(x), labels_[x]).size() >= 2)
        c6.push_back(x);
    }
    add(5, std::move(c5));
    add(6, std::move(c6));

    const bool has_complement = user.positives.size() < n_items;
    if (has_complement && (!options_.skip_singletons || user.positives.size() >= 2)) add(0, {0});
  }
}

const std::vector<ItemIndex>& SamplingContext::artist_cluster_members(std::int32_t artist, std::int32_t cluster) const {
  static const std::vector<ItemIndex> kEmpty;
  auto it = artist_cluster_.find(artist_cluster_key(artist, cluster));
  return it == artist_cluster_.end() ? kEmpty : it->second;
}

std::vector<std::int32_t> SamplingContext::favorite_artists(std::size_t user) const {
  std::map<std::int32_t, std::size_t> counts;
  for (ItemIndex i : train_->user(user).positives)
    if (catalog_->artist(i) != kNoArtist) ++counts[catalog_->artist(i)];
  std::vector<std::pair<std::int32_t, std::size_t>> ranked(counts.begin(), counts.end());
  // Artist indices follow artist-id order, so the stable sort breaks ties by id.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::int32_t> out;
  for (std::size_t r = 0; r < ranked.size() && r < options_.favorite_artists; ++r) out.push_back(ranked[r].first);
  return out;
}

namespace {

std::optional<TrainingTriple> draw_one(int strategy, const SamplingContext& ctx, Rng& rng) {
  const auto& pool = ctx.pool(strategy);
  if (pool.users.empty()) return std::nullopt;
  const std::size_t slot = std::uniform_int_distribution<std::size_t>(0, pool.users.size() - 1)(rng);
  const std::size_t u = pool.users[slot];
  const auto& choices = pool.choices[slot];
  const UserHistory& user = ctx.train().user(u);

  TrainingTriple t;
  t.strategy = static_cast<std::uint8_t>(strategy);
  t.user = static_cast<std::uint32_t>(u);
  auto other_cluster = [&](ItemIndex anchor) {
    return [&ctx, c = ctx.cluster(anchor)](ItemIndex j) { return ctx.cluster(j) != c; };
  };
  std::optional<ItemIndex> neg;

  switch (strategy) {
    case 1: {  // basket leave-one-out
      const std::size_t k = pick(choices, rng);
      t.positive = pick(user.baskets[k].items, rng);
      t.profile = without(user.items_up_to(k), t.positive);
      neg = draw_negative(ctx, user, rng, other_cluster(t.positive));
      break;
    }
    case 2: {  // next basket from the preceding history
      const std::size_t k = pick(choices, rng);
      t.positive = pick(user.baskets[k].items, rng);
      t.profile = without(user.items_up_to(k - 1), t.positive);
      neg = draw_negative(ctx, user, rng, other_cluster(t.positive));
      break;
    }
    case 3: {  // unpurchased work by a favorite artist, visually close to the history
      t.positive = pick(choices, rng);
      t.profile = user.positives;
      const std::int32_t artist = ctx.artist(t.positive);
      const std::int32_t cluster = ctx.cluster(t.positive);
      neg = draw_negative(ctx, user, rng,
                          [&](ItemIndex j) { return ctx.artist(j) != artist && ctx.cluster(j) != cluster; });
      break;
    }
    case 4: {  // whole-profile leave-one-out
      t.positive = pick(user.positives, rng);
      t.profile = without(user.positives, t.positive);
      neg = draw_negative(ctx, user, rng, other_cluster(t.positive));
      break;
    }
    case 5: {  // single-item profile, same-cluster positive
      const ItemIndex x = pick(choices, rng);
      const auto& members = ctx.cluster_members(ctx.cluster(x));
      std::size_t r = std::uniform_int_distribution<std::size_t>(0, members.size() - 2)(rng);
      const auto self = static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), x) - members.begin());
      if (r >= self) ++r;
      t.profile = {x};
      t.positive = members[r];
      neg = draw_negative(ctx, user, rng, other_cluster(x));
      break;
    }
    case 6: {  // single-item profile, same artist and cluster positive
      const ItemIndex x = pick(choices, rng);
      const std::int32_t artist = ctx.artist(x);
      const std::int32_t cluster = ctx.cluster(x);
      const auto& members = ctx.artist_cluster_members(artist, cluster);
      std::size_t r = std::uniform_int_distribution<std::size_t>(0, members.size() - 2)(rng);
      const auto self = static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), x) - members.begin());
      if (r >= self) ++r;
      t.profile = {x};
      t.positive = members[r];
      neg = draw_negative(ctx, user, rng,
                          [&](ItemIndex j) { return ctx.artist(j) != artist && ctx.cluster(j) != cluster; });
      break;
    }
    case kRandomStrategy: {
      t.positive = pick(user.positives, rng);
      t.profile = without(user.positives, t.positive);
      if (t.profile.empty()) t.profile = {t.positive};
      neg = draw_negative(ctx, user, rng, [](ItemIndex) { return true; });
      break;
    }
    default:
      throw std::invalid_argument("unknown sampling strategy " + std::to_string(strategy));
  }
  if (!neg || t.profile.empty()) return std::nullopt;
  t.negative = *neg;
  return t;
}

}  // namespace

std::optional<TrainingTriple> draw_triple(int strategy, const SamplingContext& ctx, Rng& rng) {
  if (strategy < 0 || strategy > kStrategyCount) throw std::invalid_argument("unknown sampling strategy " + std::to_string(strategy));
  return draw_one(strategy, ctx, rng);
}

TripleSet sample_triples(int strategy, std::size_t count, const SamplingContext& ctx, Rng& rng,
                         const std::unordered_set<std::uint64_t>* exclude, SampleReport* report) {
  if (strategy < 1 || strategy > kStrategyCount)
    throw std::invalid_argument("sample_triples: strategy must be in [1, 6], got " + std::to_string(strategy));
  return run_sampler(strategy, count, ctx, rng, {exclude}, report);
}

TripleSet sample_random_triples(std::size_t count, const SamplingContext& ctx, Rng& rng,
                                const std::unordered_set<std::uint64_t>* exclude, SampleReport* report) {
  return run_sampler(kRandomStrategy, count, ctx, rng, {exclude}, report);
}

std::optional<std::string> validate_triple(const TrainingTriple& t, const SamplingContext& ctx) {
  const auto& catalog = ctx.catalog();
  const auto& train = ctx.train();
  if (t.strategy > kStrategyCount) return "strategy tag out of range";
  if (t.user >= train.user_count()) return "user index out of range";
  if (t.profile.empty()) return "empty profile";
  if (!std::is_sorted(t.profile.begin(), t.profile.end()) ||
      std::adjacent_find(t.profile.begin(), t.profile.end()) != t.profile.end())
    return "profile not sorted/unique";
  for (ItemIndex i : t.profile)
    if (i >= catalog.size()) return "profile item out of range";
  if (t.positive >= catalog.size() || t.negative >= catalog.size()) return "item out of range";
  const auto& user = train.user(t.user);
  const bool pos_in_profile = std::binary_search(t.profile.begin(), t.profile.end(), t.positive);
  if (t.negative == t.positive) return "negative equals positive";
  if (std::binary_search(t.profile.begin(), t.profile.end(), t.negative)) return "negative in profile";
  if (user.owns(t.negative)) return "negative observed by user";

  if (t.strategy == kRandomStrategy) {
    if (pos_in_profile && t.profile.size() != 1) return "positive in profile";
    if (!user.owns(t.positive)) return "positive not observed by user";
    return std::nullopt;
  }
  if (pos_in_profile) return "positive in profile";
  if (ctx.cluster(t.positive) == ctx.cluster(t.negative)) return "positive and negative share a visual cluster";
  auto subset_of_history = [&] {
    return std::all_of(t.profile.begin(), t.profile.end(), [&](ItemIndex i) { return user.owns(i); });
  };
  switch (t.strategy) {
    case 1:
    case 2:
    case 4:
      if (!user.owns(t.positive)) return "positive not observed by user";
      if (!subset_of_history()) return "profile outside user history";
      break;
    case 3:
      if (user.owns(t.positive)) return "favorite-artist positive already purchased";
      if (t.profile != user.positives) return "profile is not the full history";
      if (ctx.artist(t.positive) == kNoArtist || ctx.artist(t.negative) == ctx.artist(t.positive))
        return "negative shares the positive's artist";
      break;
    case 5:
      if (t.profile.size() != 1 || !user.owns(t.profile[0])) return "profile is not a single purchased item";
      if (ctx.cluster(t.profile[0]) != ctx.cluster(t.positive)) return "positive outside the anchor's cluster";
      break;
    case 6:
      if (t.profile.size() != 1 || !user.owns(t.profile[0])) return "profile is not a single purchased item";
      if (ctx.cluster(t.profile[0]) != ctx.cluster(t.positive)) return "positive outside the anchor's cluster";
      if (ctx.artist(t.profile[0]) == kNoArtist || ctx.artist(t.profile[0]) != ctx.artist(t.positive))
        return "positive not by the anchor's artist";
      if (ctx.artist(t.negative) == ctx.artist(t.positive)) return "negative shares the positive's artist";
      break;
    default:
      break;
  }
  return std::nullopt;
}

namespace {

std::vector<StrategyTally> sample_phase(const SamplingContext& ctx, const std::vector<int>& strategies,
                                        std::size_t total, std::uint64_t seed, int max_rounds,
                                        const std::unordered_set<std::uint64_t>* base_exclude, TripleSet& out,
                                        std::vector<std::string>& warnings) {
  std::vector<StrategyTally> tallies;
  std::vector<std::size_t> need(strategies.size(), 0);
  for (std::size_t s = 0; s < strategies.size(); ++s) {
    need[s] = total / strategies.size() + (s == 0 ? total % strategies.size() : 0);
    tallies.push_back({strategies[s], need[s], 0});
  }
  std::vector<bool> active(strategies.size(), true);
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<std::size_t> todo;
    for (std::size_t s = 0; s < strategies.size(); ++s)
      if (active[s] && need[s] > 0) todo.push_back(s);
    if (todo.empty()) break;

    std::vector<TripleSet> drawn(todo.size());
    std::vector<SampleReport> reports(todo.size());
    parallel_for(todo.size(), [&](std::size_t w) {
      const std::size_t s = todo[w];
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(strategies[s]) * 64 + static_cast<std::uint64_t>(round)));
      drawn[w] = run_sampler(strategies[s], need[s], ctx, rng, {base_exclude, &out.hashes()}, &reports[w]);
    });

    std::size_t shortfall = 0;
    for (std::size_t w = 0; w < todo.size(); ++w) {
      const std::size_t s = todo[w];
      std::size_t inserted = 0;
      for (const auto& t : drawn[w].triples()) inserted += out.insert(t) ? 1 : 0;
      tallies[s].realized += inserted;
      need[s] -= std::min(need[s], inserted);
      if (reports[w].exhausted) {
        if (!reports[w].warning.empty()) warnings.push_back(reports[w].warning);
        active[s] = false;
        shortfall += need[s];
        need[s] = 0;
      }
    }
    std::vector<std::size_t> receivers;
    for (std::size_t s = 0; s < strategies.size(); ++s)
      if (active[s]) receivers.push_back(s);
    if (shortfall > 0 && !receivers.empty()) {
      for (std::size_t r = 0; r < receivers.size(); ++r)
        need[receivers[r]] += shortfall / receivers.size() + (r == 0 ? shortfall % receivers.size() : 0);
    } else if (shortfall > 0) {
      warnings.push_back("no strategy can absorb a shortfall of " + std::to_string(shortfall) + " triples");
    }
  }
  return tallies;
}

}  // namespace

Corpus build_training_corpus(const SamplingContext& ctx, const CorpusConfig& config) {
  if (config.strategies.empty()) throw std::invalid_argument("corpus: no strategies selected");
  for (int s : config.strategies)
    if (s < 0 || s > kStrategyCount) throw std::invalid_argument("corpus: unknown strategy " + std::to_string(s));
  const bool random = std::find(config.strategies.begin(), config.strategies.end(), 0) != config.strategies.end();
  if (random && config.strategies.size() != 1)
    throw std::invalid_argument("corpus: the random-negative sampler cannot be mixed with guideline strategies");

  Corpus corpus;
  corpus.manifest.train = sample_phase(ctx, config.strategies, config.train_count, derive_seed(config.seed, 0x7A11),
                                       config.max_rounds, nullptr, corpus.train, corpus.manifest.warnings);
  corpus.manifest.valid = sample_phase(ctx, config.strategies, config.valid_count, derive_seed(config.seed, 0x7A12),
                                       config.max_rounds, &corpus.train.hashes(), corpus.valid, corpus.manifest.warnings);
  return corpus;
}

std::string format_corpus_manifest(const CorpusManifest& manifest) {
  std::ostringstream out;
  out << "split\tstrategy\tquota\trealized\n";
  for (const auto& t : manifest.train) out << "train\t" << t.strategy << '\t' << t.quota << '\t' << t.realized << '\n';
  for (const auto& t : manifest.valid) out << "valid\t" << t.strategy << '\t' << t.quota << '\t' << t.realized << '\n';
  for (const auto& w : manifest.warnings) out << "# warning: " << w << '\n';
  return out.str();
}

void save_triples(const std::vector<TrainingTriple>& triples, const Catalog& catalog, const InteractionLog& train,
                  const std::filesystem::path& path) {
  BinaryWriter out;
  out.put_bytes(kTripleMagic);
  out.put(static_cast<std::uint64_t>(triples.size()));
  for (const auto& t : triples) {
    out.put(static_cast<std::uint32_t>(t.profile.size()));
    out.put_array(std::span<const ItemIndex>(t.profile));
    out.put(static_cast<std::uint32_t>(t.positive));
    out.put(static_cast<std::uint32_t>(t.negative));
    out.put(t.strategy);
    out.put(t.user);
  }
  std::string ids = "# items " + std::to_string(catalog.size()) + "\n";
  for (const auto& id : catalog.ids()) ids += id + "\n";
  ids += "# users " + std::to_string(train.user_count()) + "\n";
  for (const auto& u : train.users()) ids += u.user_id + "\n";
  auto ids_path = path;
  ids_path += ".ids";
  atomic_write_file(ids_path, ids);
  atomic_write_file(path, out.bytes());
}

std::vector<TrainingTriple> load_triples(const std::filesystem::path& path, const Catalog& catalog,
                                         const InteractionLog& train) {
  auto ids_path = path;
  ids_path += ".ids";
  std::string expected = "# items " + std::to_string(catalog.size()) + "\n";
  for (const auto& id : catalog.ids()) expected += id + "\n";
  expected += "# users " + std::to_string(train.user_count()) + "\n";
  for (const auto& u : train.users()) expected += u.user_id + "\n";
  if (read_file(ids_path) != expected)
    throw FormatError(ids_path.string() + ": id table does not match the current catalog/train split");

  const std::string bytes = read_file(path);
  BinaryReader in(bytes, path.string());
  in.expect_magic(kTripleMagic);
  const auto count = in.get<std::uint64_t>();
  std::vector<TrainingTriple> triples;
  triples.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, in.remaining() / 17)));
  for (std::uint64_t n = 0; n < count; ++n) {
    TrainingTriple t;
    const auto len = in.get<std::uint32_t>();
    if (len == 0 || len > catalog.size()) throw FormatError(path.string() + ": bad profile length");
    t.profile.resize(len);
    in.get_array(std::span<ItemIndex>(t.profile));
    t.positive = in.get<std::uint32_t>();
    t.negative = in.get<std::uint32_t>();
    t.strategy = in.get<std::uint8_t>();
    t.user = in.get<std::uint32_t>();
    for (ItemIndex i : t.profile)
      if (i >= catalog.size()) throw FormatError(path.string() + ": item index out of range");
    if (t.positive >= catalog.size() || t.negative >= catalog.size() || t.user >= train.user_count() ||
        t.strategy > kStrategyCount)
      throw FormatError(path.string() + ": triple field out of range");
    triples.push_back(std::move(t));
  }
  if (in.remaining() != 0) throw FormatError(path.string() + ": trailing bytes");
  return triples;
}

}  // namespace curatornet
