#pragma once

// Recommenders compared against CuratorNet: VBPR, VisRank, Random, Oracle;
// plus the common interface the evaluator drives.

#include "curatornet/data.hpp"
#include "curatornet/model.hpp"
#include "curatornet/numerics.hpp"
#include "curatornet/sampling.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace curatornet {

/// What a recommender may look at when scoring one test user.
struct UserQuery {
  std::size_t train_user = 0;              // index into the train log
  std::string_view user_id;
  std::span<const ItemIndex> history;      // I_u^+ in train, sorted
  std::span<const ItemIndex> relevant;     // held-out items; only the Oracle reads this
};

class Recommender {
 public:
  virtual ~Recommender() = default;
  virtual std::string name() const = 0;
  virtual bool can_score(const UserQuery&) const { return true; }
  /// One score per catalog item; higher ranks first.
  virtual VectorD score_all(const UserQuery& query) const = 0;
};

// ---- VBPR -----------------------------------------------------------------

struct VbprConfig {
  std::size_t latent_dim = 200;   // K
  std::size_t visual_dim = 200;   // D
  bool visual_bias = true;        // include beta_vis . f_i
  TrainConfig train;
};

template <typename T>
struct VbprWeights {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  Mat gamma_user;   // users x K
  Mat theta_user;   // users x D
  Mat gamma_item;   // items x K
  Mat projection;   // D x input_dim (E)
  Vec beta_item;    // items
  Vec beta_vis;     // input_dim
  bool visual_bias = true;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("gamma_user", gamma_user);
    fn("theta_user", theta_user);
    fn("gamma_item", gamma_item);
    fn("projection", projection);
    fn("beta_item", beta_item);
    fn("beta_vis", beta_vis);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<VbprWeights*>(this)->for_each_tensor(
        [&](const std::string& name, const auto& tensor) { fn(name, tensor); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }
  double squared_norm() const {
    double s = 0.0;
    for_each_tensor([&](const std::string&, const auto& t) { s += t.template cast<double>().squaredNorm(); });
    return s;
  }
  template <typename U>
  VbprWeights<U> cast() const {
    VbprWeights<U> out;
    out.gamma_user = gamma_user.template cast<U>();
    out.theta_user = theta_user.template cast<U>();
    out.gamma_item = gamma_item.template cast<U>();
    out.projection = projection.template cast<U>();
    out.beta_item = beta_item.template cast<U>();
    out.beta_vis = beta_vis.template cast<U>();
    out.visual_bias = visual_bias;
    return out;
  }
};

struct VbprModel {
  VbprWeights<float> weights;
  std::vector<std::string> user_ids;  // row order of the user factors
  std::optional<std::size_t> user_index(std::string_view user_id) const;
};

/// Factors ~ N(0, 0.01^2); projection and biases zero.
VbprWeights<double> vbpr_init(std::size_t users, std::size_t items, std::size_t input_dim, const VbprConfig& config,
                              std::uint64_t seed);

/// beta_i + gamma_u . gamma_i + theta_u . (E f_i) + beta_vis . f_i
double vbpr_score(const VbprWeights<double>& w, std::size_t user, ItemIndex item, const VectorD& features);

/// Mean over the batch of -ln sigmoid(x_uij) plus lambda * ||Theta||^2. The
/// triple's `user` field selects the user factors; the profile is ignored.
LossBreakdown vbpr_loss(const VbprWeights<double>& w, const Matrix& features, std::span<const TrainingTriple> batch,
                        double lambda, VbprWeights<double>* grad = nullptr);

struct VbprTrainResult {
  VbprModel model;
  TrainHistory history;
};

/// Adam with the same batching, validation-accuracy model selection and
/// patience rule as CuratorNet.
VbprTrainResult vbpr_train(const InteractionLog& train_log, const Matrix& features,
                           std::span<const TrainingTriple> corpus, std::span<const TrainingTriple> valid,
                           const VbprConfig& config);

void save_vbpr(const VbprModel& model, const std::filesystem::path& path, const VbprConfig* config = nullptr,
               const TrainHistory* history = nullptr);
VbprModel load_vbpr(const std::filesystem::path& path);
std::string encode_vbpr(const VbprModel& model, const VbprConfig* config = nullptr, const TrainHistory* history = nullptr);
VbprModel decode_vbpr(std::string_view bytes, const std::string& source = "<memory>");

class VbprRecommender : public Recommender {
 public:
  VbprRecommender(VbprModel model, const Matrix& features);
  std::string name() const override { return "VBPR"; }
  bool can_score(const UserQuery& query) const override;
  VectorD score_all(const UserQuery& query) const override;

 private:
  VbprModel model_;
  MatrixD item_latent_;   // items x K
  MatrixD item_visual_;   // items x D, E f_i
  VectorD item_bias_;     // beta_i + beta_vis . f_i
};

// ---- VisRank ----------------------------------------------------------------

/// max over profile rows j of cosine(f_i, f_j).
double visrank_score(const MatrixD& profile_features, const VectorD& item_features);

class VisRankRecommender : public Recommender {
 public:
  explicit VisRankRecommender(const Matrix& features);
  std::string name() const override { return "VisRank"; }
  bool can_score(const UserQuery& query) const override { return !query.history.empty(); }
  VectorD score_all(const UserQuery& query) const override;

 private:
  MatrixD normalized_;
};

// ---- CuratorNet adapter -------------------------------------------------------

class CuratorNetRecommender : public Recommender {
 public:
  CuratorNetRecommender(const ModelParams& params, const Matrix& features) : scorer_(params, features) {}
  std::string name() const override { return "CuratorNet"; }
  bool can_score(const UserQuery& query) const override { return !query.history.empty(); }
  VectorD score_all(const UserQuery& query) const override;
  const CuratorNetScorer& scorer() const { return scorer_; }

 private:
  CuratorNetScorer scorer_;
};

// ---- Random and Oracle ------------------------------------------------------

/// Uniform shuffle of the candidates; scores decrease along the shuffled order.
std::vector<RankedItem> random_rank(std::span<const ItemIndex> candidates, Rng& rng);

/// Relevant candidates first, then the rest; item-id order within each group.
std::vector<RankedItem> oracle_rank(std::span<const ItemIndex> candidates, std::span<const ItemIndex> relevant,
                                    const Catalog& catalog);

class RandomRecommender : public Recommender {
 public:
  RandomRecommender(std::size_t items, std::uint64_t seed) : items_(items), seed_(seed) {}
  std::string name() const override { return "Random"; }
  /// i.i.d. uniform scores from a stream seeded by (seed, user id).
  VectorD score_all(const UserQuery& query) const override;

 private:
  std::size_t items_;
  std::uint64_t seed_;
};

class OracleRecommender : public Recommender {
 public:
  explicit OracleRecommender(std::size_t items) : items_(items) {}
  std::string name() const override { return "Oracle"; }
  VectorD score_all(const UserQuery& query) const override;

 private:
  std::size_t items_;
};

}  // namespace curatornet
