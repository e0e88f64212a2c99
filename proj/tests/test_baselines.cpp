#include "curatornet/baselines.hpp"
#include "curatornet/evaluation.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace curatornet;

namespace {

VbprConfig kd2() {
  VbprConfig c;
  c.latent_dim = 2;
  c.visual_dim = 2;
  return c;
}

std::vector<double> as_vector(const VectorD& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("vbpr: zero weights score zero, item bias alone is popularity") {
  auto w = vbpr_init(1, 3, 3, kd2(), 1);
  VectorD f(3);
  f << 0.3, -1.0, 2.0;
  w.gamma_user.setZero();
  w.theta_user.setZero();
  w.gamma_item.setZero();
  CHECK(vbpr_score(w, 0, 1, f) == 0.0);
  w.beta_item << 0.4, -0.2, 0.9;
  w.gamma_item.setRandom();
  w.projection.setRandom();
  CHECK(vbpr_score(w, 0, 2, f) == doctest::Approx(0.9));
  CHECK_THROWS(vbpr_score(w, 1, 0, f));
}

TEST_CASE("vbpr: toy K=D=2 sum of four terms") {
  auto w = vbpr_init(1, 2, 3, kd2(), 1);
  w.gamma_user.row(0) << 1.0, 2.0;
  w.theta_user.row(0) << 0.5, -1.0;
  w.gamma_item.row(1) << 3.0, -1.0;
  w.projection << 1, 0, 1, 0, 2, 0;
  w.beta_item << 0.0, 0.25;
  w.beta_vis << 0.1, 0.2, 0.3;
  VectorD f(3);
  f << 1.0, 2.0, 3.0;
  // beta_i = .25; gamma = 3 - 2 = 1; E f = (4, 4), theta . Ef = 2 - 4 = -2; beta_vis . f = 1.4
  CHECK(vbpr_score(w, 0, 1, f) == doctest::Approx(0.25 + 1.0 - 2.0 + 1.4).epsilon(1e-14));
  w.visual_bias = false;
  CHECK(vbpr_score(w, 0, 1, f) == doctest::Approx(0.25 + 1.0 - 2.0).epsilon(1e-14));
}

TEST_CASE("vbpr: visual terms scale linearly with the features") {
  auto w = vbpr_init(2, 4, 5, kd2(), 3);
  w.gamma_user.setZero();
  w.projection.setRandom();
  w.beta_vis.setRandom();
  const Catalog c = testing::random_catalog(4, 5, 2);
  const VectorD f = c.embeddings().row(1).cast<double>().transpose();
  const double base = vbpr_score(w, 1, 1, f);
  CHECK(vbpr_score(w, 1, 1, VectorD(2.5 * f)) == doctest::Approx(2.5 * base).epsilon(1e-12));
}

TEST_CASE("vbpr: analytic gradient matches finite differences") {
  const Catalog c = testing::random_catalog(6, 4, 7);
  for (bool vis : {true, false}) {
    VbprConfig cfg = kd2();
    cfg.visual_bias = vis;
    auto work = vbpr_init(3, 6, 4, cfg, 5);
    Rng rng(4);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto* m : {&work.projection}) for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n(rng);
    for (auto& b : work.beta_item) b = n(rng);
    for (auto& b : work.beta_vis) b = n(rng);
    const std::vector<TrainingTriple> batch = {{{0}, 1, 2, 3, 0}, {{1}, 4, 5, 4, 1}, {{2}, 0, 3, 0, 2}, {{2}, 5, 1, 0, 2}};
    const ObjectiveFn fn = [&](std::span<const double> t, std::span<double> g) {
      auto p = work;
      testing::unflat(t, p);
      if (g.empty()) return vbpr_loss(p, c.embeddings(), batch, 0.02).total;
      auto grad = work;
      grad.for_each_tensor([](const std::string&, auto& x) { x.setZero(); });
      const double loss = vbpr_loss(p, c.embeddings(), batch, 0.02, &grad).total;
      const auto gf = testing::flat(grad);
      std::copy(gf.begin(), gf.end(), g.begin());
      return loss;
    };
    const auto theta = testing::flat(work);
    const auto r = finite_diff_check(fn, theta, 1e-6);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("vbpr: training fits a separable log, is deterministic, lambda shrinks") {
  // Two user groups with disjoint tastes in two visual directions.
  Rng rng(3);
  std::normal_distribution<float> n(0.0f, 0.1f);
  std::vector<ItemRecord> recs;
  for (int i = 0; i < 20; ++i) {
    Vector v(4);
    for (auto& x : v) x = n(rng);
    v[i < 10 ? 0 : 1] += 1.0f;
    recs.push_back({"i" + std::to_string(100 + i), v, std::nullopt});
  }
  const Catalog c(std::move(recs), 4);
  std::string tx = "user_id\titem_id\tbasket_index\n";
  for (int u = 0; u < 10; ++u)
    for (int k = 0; k < 3; ++k) tx += "u" + std::to_string(u) + "\ti" + std::to_string(100 + (u % 2) * 10 + (u + k) % 10) + "\t" + std::to_string(k) + "\n";
  const InteractionLog log = parse_transactions(tx, c);
  std::vector<TrainingTriple> ts;
  for (std::uint32_t u = 0; u < log.user_count(); ++u) {
    const auto& h = log.user(u);
    const bool left = h.positives[0] < 10;
    for (ItemIndex pos : h.positives)
      for (ItemIndex neg = left ? 10 : 0; neg < (left ? 20u : 10u); ++neg) ts.push_back({{pos}, pos, neg, 0, u});
  }
  VbprConfig cfg = kd2();
  cfg.train.adam.lr = 0.05;
  cfg.train.batch_size = 16;
  cfg.train.max_epochs = 40;
  cfg.train.patience = 40;
  cfg.train.seed = 1;
  const auto r = vbpr_train(log, c.embeddings(), ts, ts, cfg);
  const VbprRecommender rec(r.model, c.embeddings());
  std::vector<double> aucs;
  for (std::uint32_t u = 0; u < log.user_count(); ++u) {
    const auto& h = log.user(u);
    const VectorD s = rec.score_all({u, h.user_id, h.positives, {}});
    std::vector<double> rel, non;
    for (ItemIndex i = 0; i < c.size(); ++i) (std::binary_search(h.positives.begin(), h.positives.end(), i) ? rel : non).push_back(s(i));
    // Train AUC against the other group's items only.
    const bool left = h.positives[0] < 10;
    std::vector<double> other;
    for (ItemIndex i = left ? 10 : 0; i < (left ? 20u : 10u); ++i) other.push_back(s(i));
    aucs.push_back(auc(rel, other));
  }
  double mean = 0.0;
  for (double a : aucs) mean += a / static_cast<double>(aucs.size());
  CHECK(mean >= 0.95);

  const auto again = vbpr_train(log, c.embeddings(), ts, ts, cfg);
  CHECK(encode_vbpr(r.model) == encode_vbpr(again.model));

  cfg.train.lambda = 10.0;
  const auto shrunk = vbpr_train(log, c.embeddings(), ts, ts, cfg);
  CHECK(shrunk.model.weights.squared_norm() < r.model.weights.squared_norm());

  CHECK(rec.can_score({0, "u3", {}, {}}));
  CHECK_FALSE(rec.can_score({0, "stranger", {}, {}}));
  CHECK_THROWS(rec.score_all({0, "stranger", {}, {}}));
}

TEST_CASE("vbpr checkpoint round trip") {
  testing::TempDir dir;
  VbprModel m;
  m.weights = vbpr_init(2, 3, 4, kd2(), 9).cast<float>();
  m.weights.projection.setRandom();
  m.user_ids = {"alice", "bob"};
  save_vbpr(m, dir / "v.ckpt");
  const std::string bytes = read_file(dir / "v.ckpt");
  CHECK(bytes.substr(0, 5) == "CNET1");
  CHECK(bytes.find("VBPR1") != std::string::npos);
  const VbprModel back = load_vbpr(dir / "v.ckpt");
  CHECK(back.user_ids == m.user_ids);
  CHECK(testing::flat(back.weights) == testing::flat(m.weights));
  CHECK(back.user_index("bob") == std::optional<std::size_t>(1));
  atomic_write_file(dir / "cut.ckpt", bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(load_vbpr(dir / "cut.ckpt"), FormatError);
  // A CuratorNet checkpoint is not a VBPR one and vice versa.
  Architecture arch;
  arch.input_dim = 4;
  arch.tower = {2};
  arch.head = {2};
  save_checkpoint(init_params(arch, 1), dir / "c.ckpt");
  CHECK_THROWS_AS(load_vbpr(dir / "c.ckpt"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "v.ckpt"), FormatError);
}

TEST_CASE("visrank examples") {
  MatrixD profile(2, 2);
  profile << 1, 0, 0, 1;
  VectorD cand(2);
  cand << 1, 1;
  CHECK(visrank_score(profile, cand / std::sqrt(2.0)) == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
  CHECK(visrank_score(profile, cand / std::sqrt(2.0)) == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(visrank_score(profile, VectorD(profile.row(1).transpose())) == doctest::Approx(1.0));
  MatrixD line(1, 3);
  line << 1, 0, 0;
  VectorD ortho(3);
  ortho << 0, 2, -1;
  CHECK(visrank_score(line, ortho) == 0.0);
  CHECK_THROWS(visrank_score(MatrixD(0, 2), cand));
}

TEST_CASE("visrank recommender is profile-order invariant") {
  const Catalog c = testing::random_catalog(15, 6, 4);
  const VisRankRecommender vr(c.embeddings());
  const std::vector<ItemIndex> h1 = {2, 7, 11};
  const std::vector<ItemIndex> h2 = {11, 2, 7};
  const VectorD a = vr.score_all({0, "u", h1, {}});
  CHECK(a == vr.score_all({0, "u", h2, {}}));
  CHECK(a(7) == doctest::Approx(1.0));
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    MatrixD prof(3, 6);
    for (int r = 0; r < 3; ++r) prof.row(r) = c.embeddings().row(h1[static_cast<std::size_t>(r)]).cast<double>();
    CHECK(a(i) == doctest::Approx(visrank_score(prof, c.embeddings().row(i).cast<double>().transpose())).epsilon(1e-10));
  }
  CHECK_FALSE(vr.can_score({0, "u", {}, {}}));
}

TEST_CASE("oracle and random ranks") {
  const Catalog c = testing::small_catalog({"d", "c", "b", "a"}, {{1, 0}, {0, 1}, {1, 1}, {2, 1}});
  const std::vector<ItemIndex> cand = {0, 1, 2, 3};
  const std::vector<ItemIndex> rel = {0, 2};
  const auto o = oracle_rank(cand, rel, c);
  REQUIRE(o.size() == 4);
  CHECK(c.id(o[0].item) == "b");
  CHECK(c.id(o[1].item) == "d");
  CHECK(c.id(o[2].item) == "a");
  CHECK(c.id(o[3].item) == "c");

  Rng rng(1);
  const auto r = random_rank(cand, rng);
  std::vector<ItemIndex> items;
  for (const auto& x : r) items.push_back(x.item);
  std::sort(items.begin(), items.end());
  CHECK(items == cand);
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i - 1].score > r[i].score);

  // Every item lands first about equally often.
  std::vector<int> first(4, 0);
  for (int k = 0; k < 8000; ++k) first[random_rank(cand, rng)[0].item]++;
  for (int f : first) CHECK(std::abs(f - 2000) < 200);

  const RandomRecommender rr(4, 3);
  CHECK(as_vector(rr.score_all({0, "u", {}, {}})) == as_vector(rr.score_all({0, "u", {}, {}})));
  CHECK(as_vector(rr.score_all({0, "u", {}, {}})) != as_vector(rr.score_all({0, "v", {}, {}})));
  const OracleRecommender orc(4);
  const VectorD s = orc.score_all({0, "u", {}, rel});
  CHECK(s(0) == 1.0);
  CHECK(s(1) == 0.0);
}

}  // TEST_SUITE
