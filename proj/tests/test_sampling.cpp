#include "curatornet/sampling.hpp"
#include "curatornet/synthetic.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace curatornet;

namespace {

const char* kHeader = "user_id\titem_id\tbasket_index\n";

// Eight items in four clusters of two; artists alternate A/B within clusters.
struct Fixture {
  Catalog catalog;
  InteractionLog log;
  std::vector<std::int32_t> labels = {0, 0, 1, 1, 2, 2, 3, 3};

  explicit Fixture(const std::string& rows, bool artists = true) {
    std::vector<std::vector<float>> emb;
    for (int i = 0; i < 8; ++i) emb.push_back({1.0f + static_cast<float>(i), static_cast<float>(i % 3)});
    catalog = testing::small_catalog({"a", "b", "c", "d", "e", "f", "g", "h"}, emb);
    if (artists)
      catalog.set_artists({{"a", "A"}, {"b", "A"}, {"c", "A"}, {"d", "B"}, {"e", "B"}, {"f", "B"}, {"g", "C"}, {"h", "C"}});
    log = parse_transactions(std::string(kHeader) + rows, catalog);
  }
  ItemIndex ix(const std::string& id) const { return catalog.index_of(id); }
};

std::vector<TrainingTriple> draw_many(int strategy, const SamplingContext& ctx, int n, std::uint64_t seed = 1) {
  Rng rng(seed);
  std::vector<TrainingTriple> out;
  for (int k = 0; k < n; ++k)
    if (auto t = draw_triple(strategy, ctx, rng)) out.push_back(*t);
  return out;
}

}  // namespace

TEST_SUITE("sampling") {

TEST_CASE("triple_hash: determinism, set semantics, sensitivity") {
  TrainingTriple a{{1, 2}, 3, 4, 1, 0};
  TrainingTriple b{{2, 1}, 3, 4, 5, 7};
  CHECK(triple_hash(a) == triple_hash(a));
  CHECK(triple_hash(a) == triple_hash(b));
  TrainingTriple c = a;
  c.negative = 5;
  CHECK(triple_hash(a) != triple_hash(c));
  TrainingTriple d = a;
  std::swap(d.positive, d.negative);
  CHECK(triple_hash(a) != triple_hash(d));
  TripleSet set;
  CHECK(set.insert(a));
  CHECK_FALSE(set.insert(b));
  CHECK(set.size() == 1);
  CHECK(set.counts()[1] == 1);
}

TEST_CASE("strategy 1: basket leave-one-out") {
  Fixture f("u\ta\t0\nu\tc\t0\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  const auto ts = draw_many(1, ctx, 200);
  REQUIRE(!ts.empty());
  for (const auto& t : ts) {
    const bool a_pos = t.positive == f.ix("a");
    CHECK(t.profile == std::vector<ItemIndex>{a_pos ? f.ix("c") : f.ix("a")});
    CHECK(f.labels[t.negative] != f.labels[t.positive]);
    CHECK_FALSE(validate_triple(t, ctx).has_value());
  }
}

TEST_CASE("strategy 2: next basket from the earlier history") {
  Fixture f("u\ta\t0\nu\tc\t1\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  const auto ts = draw_many(2, ctx, 100);
  REQUIRE(!ts.empty());
  for (const auto& t : ts) {
    CHECK(t.profile == std::vector<ItemIndex>{f.ix("a")});
    CHECK(t.positive == f.ix("c"));
    CHECK_FALSE(validate_triple(t, ctx).has_value());
  }
}

TEST_CASE("strategy 3: favorite-artist positive in a cluster the user touched") {
  // u bought a (artist A, cluster 0) twice over and d (B, cluster 1).
  Fixture f("u\ta\t0\nu\td\t1\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  const auto favs = ctx.favorite_artists(0);
  CHECK(favs.size() == 2);
  const auto ts = draw_many(3, ctx, 200);
  REQUIRE(!ts.empty());
  std::set<ItemIndex> positives;
  for (const auto& t : ts) {
    positives.insert(t.positive);
    CHECK(t.profile == f.log.user(0).positives);
    CHECK(f.catalog.artist(t.negative) != f.catalog.artist(t.positive));
    CHECK(f.labels[t.negative] != f.labels[t.positive]);
    CHECK_FALSE(validate_triple(t, ctx).has_value());
  }
  // b is A in cluster 0, c is A in cluster 1: both reachable. e/f are B in
  // clusters 2; only reachable if u touched cluster 2, which it did not.
  CHECK(positives == std::set<ItemIndex>{f.ix("b"), f.ix("c")});
}

TEST_CASE("favorite artists: top by count, ties by artist id, capped") {
  Fixture f("u\tg\t0\nu\th\t0\nu\td\t1\nu\ta\t2\n");
  SamplerOptions opts;
  opts.favorite_artists = 2;
  const SamplingContext ctx(f.log, f.catalog, f.labels, opts);
  // C twice; A and B once each, A wins the tie.
  const auto favs = ctx.favorite_artists(0);
  REQUIRE(favs.size() == 2);
  CHECK(f.catalog.artist_names()[static_cast<std::size_t>(favs[0])] == "C");
  CHECK(f.catalog.artist_names()[static_cast<std::size_t>(favs[1])] == "A");
}

TEST_CASE("strategy 4: whole-profile leave-one-out") {
  Fixture f("u\ta\t0\nu\tc\t1\nu\te\t2\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  for (const auto& t : draw_many(4, ctx, 100)) {
    CHECK(t.profile.size() == 2);
    CHECK(f.log.user(0).owns(t.positive));
    CHECK_FALSE(validate_triple(t, ctx).has_value());
  }
}

TEST_CASE("strategy 5: singleton profile, same-cluster positive") {
  Fixture f("u\ta\t0\nu\tc\t1\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  const auto ts = draw_many(5, ctx, 200);
  REQUIRE(!ts.empty());
  for (const auto& t : ts) {
    REQUIRE(t.profile.size() == 1);
    const ItemIndex x = t.profile[0];
    CHECK(f.log.user(0).owns(x));
    CHECK(t.positive != x);
    CHECK(f.labels[t.positive] == f.labels[x]);
    CHECK(f.labels[t.negative] != f.labels[x]);
    CHECK_FALSE(validate_triple(t, ctx).has_value());
  }
}

TEST_CASE("strategy 6: singleton profile, same artist and cluster") {
  // Clusters {a,b} share artist A; {g,h} share C; others mix artists.
  Fixture f("u\ta\t0\nu\tg\t1\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  const auto ts = draw_many(6, ctx, 200);
  REQUIRE(!ts.empty());
  for (const auto& t : ts) {
    const ItemIndex x = t.profile[0];
    CHECK(f.catalog.artist(t.positive) == f.catalog.artist(x));
    CHECK(f.labels[t.positive] == f.labels[x]);
    CHECK(f.catalog.artist(t.negative) != f.catalog.artist(x));
    CHECK(f.labels[t.negative] != f.labels[x]);
    CHECK_FALSE(validate_triple(t, ctx).has_value());
  }
}

TEST_CASE("strategies 3 and 6 without artists emit nothing and warn") {
  Fixture f("u\ta\t0\nu\tc\t1\n", false);
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  Rng rng(1);
  SampleReport rep;
  CHECK(sample_triples(3, 10, ctx, rng, nullptr, &rep).empty());
  CHECK(rep.exhausted);
  CHECK(rep.warning.find("artist") != std::string::npos);
  CHECK(sample_triples(6, 10, ctx, rng).empty());
  CHECK_THROWS(sample_triples(0, 10, ctx, rng));
  CHECK_THROWS(sample_triples(7, 10, ctx, rng));
}

TEST_CASE("random sampler: negatives are the complement") {
  const Catalog c = testing::small_catalog({"a", "b", "c"}, {{1, 0}, {0, 1}, {1, 1}});
  const auto log = parse_transactions(std::string(kHeader) + "u\ta\t0\nu\tb\t1\nall\ta\t0\nall\tb\t0\nall\tc\t0\n", c);
  const SamplingContext ctx(log, c, {0, 0, 0});
  Rng rng(2);
  const auto set = sample_random_triples(50, ctx, rng);
  for (const auto& t : set.triples()) {
    CHECK(log.user(t.user).user_id == "u");
    CHECK(t.negative == c.index_of("c"));
    CHECK_FALSE(validate_triple(t, ctx).has_value());
  }
}

TEST_CASE("random sampler: uniform over two eligible negatives") {
  const Catalog c = testing::small_catalog({"a", "b", "c", "d"}, {{1, 0}, {0, 1}, {1, 1}, {1, 2}});
  const auto log = parse_transactions(std::string(kHeader) + "u\ta\t0\nu\tb\t1\n", c);
  const SamplingContext ctx(log, c, {0, 0, 0, 0});
  Rng rng(3);
  std::size_t n_c = 0, total = 0;
  for (int k = 0; k < 100000; ++k) {
    const auto t = draw_triple(kRandomStrategy, ctx, rng);
    REQUIRE(t.has_value());
    n_c += t->negative == c.index_of("c") ? 1 : 0;
    ++total;
  }
  const double share = static_cast<double>(n_c) / static_cast<double>(total);
  CHECK(share > 0.48);
  CHECK(share < 0.52);
  // Chi-square with one degree of freedom, 99.9% critical value 10.83.
  const double e = total / 2.0;
  const double chi2 = std::pow(n_c - e, 2) / e + std::pow((total - n_c) - e, 2) / e;
  CHECK(chi2 < 10.83);
}

TEST_CASE("random sampler: singleton users anchor the profile unless skipped") {
  const Catalog c = testing::small_catalog({"a", "b", "c"}, {{1, 0}, {0, 1}, {1, 1}});
  const auto log = parse_transactions(std::string(kHeader) + "s\ta\t0\n", c);
  {
    const SamplingContext ctx(log, c, {0, 1, 2});
    Rng rng(1);
    const auto set = sample_random_triples(2, ctx, rng);
    REQUIRE(set.size() == 2);
    for (const auto& t : set.triples()) {
      CHECK(t.profile == std::vector<ItemIndex>{t.positive});
      CHECK_FALSE(validate_triple(t, ctx).has_value());
    }
  }
  SamplerOptions strict;
  strict.skip_singletons = true;
  const SamplingContext ctx(log, c, {0, 1, 2}, strict);
  Rng rng(1);
  CHECK(sample_random_triples(5, ctx, rng).empty());
}

TEST_CASE("validator catches broken triples") {
  Fixture f("u\ta\t0\nu\tc\t1\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  TrainingTriple good{{f.ix("a")}, f.ix("c"), f.ix("e"), 2, 0};
  CHECK_FALSE(validate_triple(good, ctx).has_value());
  auto bad = good;
  bad.negative = f.ix("a");
  CHECK(validate_triple(bad, ctx).has_value());
  bad = good;
  bad.negative = f.ix("d");  // same cluster as c
  CHECK(validate_triple(bad, ctx).has_value());
  bad = good;
  bad.profile = {f.ix("a"), f.ix("c")};
  CHECK(validate_triple(bad, ctx).has_value());
  bad = good;
  bad.profile = {};
  CHECK(validate_triple(bad, ctx).has_value());
}

TEST_CASE("attempt budget bounds rejection sampling") {
  // One user owns everything except items in the positive's cluster: no valid negative.
  const Catalog c = testing::small_catalog({"a", "b", "c"}, {{1, 0}, {0, 1}, {1, 1}});
  const auto log = parse_transactions(std::string(kHeader) + "u\ta\t0\nu\tb\t1\n", c);
  const SamplingContext ctx(log, c, {0, 0, 0});
  Rng rng(1);
  SampleReport rep;
  const auto set = sample_triples(4, 10, ctx, rng, nullptr, &rep);
  CHECK(set.empty());
  CHECK(rep.exhausted);
  CHECK(rep.attempts == 1000);
}

TEST_CASE("corpus: quotas, dedup, validation disjoint, determinism") {
  SyntheticConfig sc;
  sc.users = 80;
  sc.items = 200;
  sc.artists = 30;
  sc.styles = 5;
  sc.dim = 8;
  const auto data = make_synthetic(sc);
  const Catalog catalog = data.catalog();
  const Split split = split_train_test(data.log());
  std::vector<std::int32_t> labels;
  for (auto s : data.item_style) labels.push_back(static_cast<std::int32_t>(s));
  const SamplingContext ctx(split.train, catalog, labels);

  CorpusConfig cc;
  cc.train_count = 6;
  cc.valid_count = 0;
  const Corpus tiny = build_training_corpus(ctx, cc);
  CHECK(tiny.train.size() == 6);
  for (int s = 1; s <= 6; ++s) CHECK(tiny.train.counts()[static_cast<std::size_t>(s)] == 1);

  cc.train_count = 3000;
  cc.valid_count = 300;
  cc.seed = 4;
  const Corpus a = build_training_corpus(ctx, cc);
  CHECK(a.train.size() == 3000);
  CHECK(a.valid.size() == 300);
  for (std::uint64_t h : a.valid.hashes()) CHECK_FALSE(a.train.contains(h));
  std::size_t realized = 0;
  for (const auto& t : a.manifest.train) realized += t.realized;
  CHECK(realized == a.train.size());
  std::size_t bad = 0;
  for (const auto& t : a.train.triples()) bad += validate_triple(t, ctx).has_value() ? 1 : 0;
  for (const auto& t : a.valid.triples()) bad += validate_triple(t, ctx).has_value() ? 1 : 0;
  CHECK(bad == 0);

  const Corpus b = build_training_corpus(ctx, cc);
  REQUIRE(b.train.size() == a.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(triple_hash(a.train.triples()[i]) == triple_hash(b.train.triples()[i]));

  CHECK(format_corpus_manifest(a.manifest).rfind("split\tstrategy\tquota\trealized\n", 0) == 0);
}

TEST_CASE("corpus: infeasible strategies are redistributed") {
  Fixture f("u\ta\t0\nu\tc\t1\nv\te\t0\nv\tg\t1\nv\tb\t2\n", false);
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  CorpusConfig cc;
  cc.train_count = 12;
  cc.valid_count = 0;
  cc.strategies = {3, 4};
  const Corpus c = build_training_corpus(ctx, cc);
  CHECK(c.manifest.train[0].realized == 0);
  CHECK(c.manifest.train[1].realized == c.train.size());
  CHECK(c.train.size() > 6);
  CHECK_FALSE(c.manifest.warnings.empty());

  cc.strategies = {0, 1};
  CHECK_THROWS(build_training_corpus(ctx, cc));
  cc.strategies = {};
  CHECK_THROWS(build_training_corpus(ctx, cc));
}

TEST_CASE("triple files round trip and reject a different catalog") {
  testing::TempDir dir;
  Fixture f("u\ta\t0\nu\tc\t1\n");
  const SamplingContext ctx(f.log, f.catalog, f.labels);
  const auto ts = draw_many(1, ctx, 20);
  save_triples(ts, f.catalog, f.log, dir / "t.trp");
  CHECK(read_file(dir / "t.trp").substr(0, 6) == "CNTRP1");
  const auto back = load_triples(dir / "t.trp", f.catalog, f.log);
  REQUIRE(back.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(back[i].profile == ts[i].profile);
    CHECK(back[i].positive == ts[i].positive);
    CHECK(back[i].negative == ts[i].negative);
    CHECK(back[i].strategy == ts[i].strategy);
    CHECK(back[i].user == ts[i].user);
  }
  Fixture other("u\ta\t0\nw\tc\t1\n");
  CHECK_THROWS_AS(load_triples(dir / "t.trp", other.catalog, other.log), FormatError);
  const std::string bytes = read_file(dir / "t.trp");
  atomic_write_file(dir / "t.trp", bytes.substr(0, bytes.size() - 1));
  CHECK_THROWS(load_triples(dir / "t.trp", f.catalog, f.log));
}

}  // TEST_SUITE
