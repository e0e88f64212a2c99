#pragma once

// BPR training-triple generation: six preference-aware strategies that never
// pair a positive with a negative from the same visual cluster, a uniform
// random-negative sampler for ablations, hash dedup and corpus files.

#include "curatornet/clustering.hpp"
#include "curatornet/data.hpp"

#include <array>
#include <optional>
#include <unordered_set>

namespace curatornet {

inline constexpr std::uint8_t kRandomStrategy = 0;
inline constexpr int kStrategyCount = 6;

struct TrainingTriple {
  std::vector<ItemIndex> profile;  // sorted, unique, non-empty
  ItemIndex positive = 0;
  ItemIndex negative = 0;
  std::uint8_t strategy = 0;  // 1..6, or 0 for random negatives
  std::uint32_t user = 0;     // originating user, index into the train log
};

/// Digest over (sorted profile, positive, negative). The strategy and user
/// are excluded so identical content from different sources collides.
std::uint64_t triple_hash(const TrainingTriple& t);

class TripleSet {
 public:
  /// Inserts unless a triple with the same hash is already present.
  bool insert(TrainingTriple t);
  bool contains(std::uint64_t hash) const { return hashes_.contains(hash); }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }
  const std::vector<TrainingTriple>& triples() const { return triples_; }
  const std::unordered_set<std::uint64_t>& hashes() const { return hashes_; }
  /// Realized count per strategy tag, index 0..6.
  const std::array<std::size_t, kStrategyCount + 1>& counts() const { return counts_; }

 private:
  std::vector<TrainingTriple> triples_;
  std::unordered_set<std::uint64_t> hashes_;
  std::array<std::size_t, kStrategyCount + 1> counts_{};
};

struct SamplerOptions {
  /// Number of top artists (by purchase count, ties by artist id) treated as
  /// a user's favorites.
  std::size_t favorite_artists = 3;
  /// Random-negative sampler: drop users whose history is a single item
  /// instead of reusing the positive as the profile.
  bool skip_singletons = false;
  /// Attempt budget multiplier: at most budget_factor * count draws.
  std::size_t budget_factor = 100;
};

/// Read-only indexes over the train log, catalog and cluster labels.
class SamplingContext {
 public:
  SamplingContext(const InteractionLog& train, const Catalog& catalog, std::vector<std::int32_t> cluster_labels,
                  SamplerOptions options = {});

  const InteractionLog& train() const { return *train_; }
  const Catalog& catalog() const { return *catalog_; }
  const SamplerOptions& options() const { return options_; }
  std::int32_t cluster(ItemIndex i) const { return labels_[i]; }
  std::int32_t artist(ItemIndex i) const { return catalog_->artist(i); }
  const std::vector<ItemIndex>& cluster_members(std::int32_t c) const { return cluster_members_.at(static_cast<std::size_t>(c)); }
  const std::vector<ItemIndex>& artist_cluster_members(std::int32_t artist, std::int32_t cluster) const;
  std::vector<std::int32_t> favorite_artists(std::size_t user) const;

  struct Pools {
    std::vector<std::size_t> users;
    std::vector<std::vector<std::uint32_t>> choices;  // per listed user: eligible basket positions or items
  };
  const Pools& pool(int strategy) const { return pools_.at(static_cast<std::size_t>(strategy)); }

 private:
  const InteractionLog* train_;
  const Catalog* catalog_;
  std::vector<std::int32_t> labels_;
  SamplerOptions options_;
  std::vector<std::vector<ItemIndex>> cluster_members_;
  std::unordered_map<std::uint64_t, std::vector<ItemIndex>> artist_cluster_;
  std::array<Pools, kStrategyCount + 1> pools_;
};

struct SampleReport {
  std::size_t requested = 0;
  std::size_t accepted = 0;
  std::size_t attempts = 0;
  bool exhausted = false;
  std::string warning;
};

/// One candidate triple for `strategy` (0..6) before dedup; nullopt when the
/// draw was rejected.
std::optional<TrainingTriple> draw_triple(int strategy, const SamplingContext& ctx, Rng& rng);

/// Draws up to `count` triples with one of the six strategies. `exclude`
/// holds hashes that must not be produced (e.g. the training corpus when
/// sampling validation triples).
TripleSet sample_triples(int strategy, std::size_t count, const SamplingContext& ctx, Rng& rng,
                         const std::unordered_set<std::uint64_t>* exclude = nullptr, SampleReport* report = nullptr);

/// Classic BPR sampling: uniform user, uniform positive from I_u^+, uniform
/// negative from I \ I_u^+, no cluster constraint.
TripleSet sample_random_triples(std::size_t count, const SamplingContext& ctx, Rng& rng,
                                const std::unordered_set<std::uint64_t>* exclude = nullptr,
                                SampleReport* report = nullptr);

/// Returns a description of the first violated invariant, if any.
std::optional<std::string> validate_triple(const TrainingTriple& t, const SamplingContext& ctx);

struct CorpusConfig {
  std::size_t train_count = 60'000;
  std::size_t valid_count = 3'000;
  std::vector<int> strategies = {1, 2, 3, 4, 5, 6};  // {0} selects the random-negative sampler
  std::uint64_t seed = 0;
  int max_rounds = 8;
};

struct StrategyTally {
  int strategy = 0;
  std::size_t quota = 0;
  std::size_t realized = 0;
};

struct CorpusManifest {
  std::vector<StrategyTally> train;
  std::vector<StrategyTally> valid;
  std::vector<std::string> warnings;
};

struct Corpus {
  TripleSet train;
  TripleSet valid;
  CorpusManifest manifest;
};

/// Per-strategy quota total/|strategies| (remainder to the first listed),
/// shortfalls of infeasible strategies redistributed over the others, union
/// deduplicated by hash; validation sampled afterwards, disjoint from train.
Corpus build_training_corpus(const SamplingContext& ctx, const CorpusConfig& config);

std::string format_corpus_manifest(const CorpusManifest& manifest);

/// "CNTRP1" corpus plus a sibling `.ids` table of item and user ids.
void save_triples(const std::vector<TrainingTriple>& triples, const Catalog& catalog, const InteractionLog& train,
                  const std::filesystem::path& path);
std::vector<TrainingTriple> load_triples(const std::filesystem::path& path, const Catalog& catalog,
                                         const InteractionLog& train);


}  // namespace curatornet
