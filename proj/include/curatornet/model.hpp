#pragma once

// CuratorNet: a shared SELU tower embeds every image; a profile is pooled
// (mean and max) and passed through a SELU head; the preference score is the
// dot product of the profile and item embeddings.

#include "curatornet/data.hpp"
#include "curatornet/numerics.hpp"
#include "curatornet/sampling.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace curatornet {

struct Architecture {
  std::size_t input_dim = kEmbeddingDim;
  std::vector<std::size_t> tower = {200, 200};
  std::vector<std::size_t> head = {300, 200, 200};

  std::size_t embedding_dim() const { return tower.back(); }
  void validate() const;
  std::string describe() const;
  bool operator==(const Architecture&) const = default;
};

template <typename T>
struct DenseLayer {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> weight;  // out x in
  Eigen::Matrix<T, Eigen::Dynamic, 1> bias;
};

/// Every trainable tensor of the network. Nothing here is indexed by user:
/// any set of known items can be scored without further training.
template <typename T>
struct CuratorNetWeights {
  Architecture arch;
  std::vector<DenseLayer<T>> tower;
  std::vector<DenseLayer<T>> head;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (std::size_t l = 0; l < tower.size(); ++l) {
      fn("tower." + std::to_string(l) + ".weight", tower[l].weight);
      fn("tower." + std::to_string(l) + ".bias", tower[l].bias);
    }
    for (std::size_t l = 0; l < head.size(); ++l) {
      fn("head." + std::to_string(l) + ".weight", head[l].weight);
      fn("head." + std::to_string(l) + ".bias", head[l].bias);
    }
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<CuratorNetWeights*>(this)->for_each_tensor(
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
  CuratorNetWeights<U> cast() const {
    CuratorNetWeights<U> out;
    out.arch = arch;
    for (const auto& l : tower) out.tower.push_back({l.weight.template cast<U>(), l.bias.template cast<U>()});
    for (const auto& l : head) out.head.push_back({l.weight.template cast<U>(), l.bias.template cast<U>()});
    return out;
  }
};

using ModelParams = CuratorNetWeights<float>;
using ModelParamsD = CuratorNetWeights<double>;

ModelParams zero_params(const Architecture& arch);
/// Weights ~ N(0, 1/fan_in), biases zero.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

std::vector<double> flatten(const ModelParamsD& params);
void unflatten(std::span<const double> flat, ModelParamsD& params);

/// Tower output for one image embedding.
VectorD embed_item(const ModelParamsD& params, const VectorD& features);
/// Tower outputs for every row of `features`.
MatrixD embed_items(const ModelParamsD& params, const MatrixD& features);
/// Profile embedding from raw member features (rows). Members are pooled in
/// lexicographic order of their tower outputs, so any permutation of the
/// profile gives a bit-identical result.
VectorD embed_profile(const ModelParamsD& params, const MatrixD& profile_features);
/// Profile embedding from precomputed tower outputs of the members (rows),
/// pooled in row order.
VectorD embed_profile_from_tower(const ModelParamsD& params, const MatrixD& member_tower_outputs);
double score(const ModelParamsD& params, const MatrixD& profile_features, const VectorD& item_features);

struct LossBreakdown {
  double total = 0.0;
  double data = 0.0;        // mean of -ln sigmoid(x_uij)
  double regularizer = 0.0; // lambda * ||theta||^2
};

/// Sigmoid cross-entropy over a batch where every triple is labelled as well
/// ranked, plus L2 on all weights and biases. Fills `grad` (same shapes as
/// params) with the exact gradient when non-null.
LossBreakdown triple_loss(const ModelParamsD& params, const Matrix& features, std::span<const TrainingTriple> batch,
                          double lambda, ModelParamsD* grad = nullptr);

/// x_uij = score(profile, positive) - score(profile, negative) per triple.
std::vector<double> triple_margins(const ModelParamsD& params, const Matrix& features,
                                   std::span<const TrainingTriple> triples);

struct TrainConfig {
  AdamConfig adam;
  double lambda = 0.0;
  std::size_t batch_size = 128;
  int max_epochs = 20;
  int patience = 3;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_valid_accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, ModelParams last_good, TrainHistory history)
      : NumericError(what), last_good(std::move(last_good)), history(std::move(history)) {}
  ModelParams last_good;
  TrainHistory history;
};

/// Adam over shuffled mini-batches; after every epoch the validation triple
/// accuracy (share with x_uij > 0) selects the best parameters; stops after
/// `patience` epochs without improvement. Serial and deterministic per seed.
TrainResult train_curatornet(const Architecture& arch, const Matrix& features, std::span<const TrainingTriple> train,
                             std::span<const TrainingTriple> valid, const TrainConfig& config);

/// Precomputed item-tower outputs for a fixed parameter set.
class CuratorNetScorer {
 public:
  CuratorNetScorer(const ModelParams& params, const Matrix& features);

  const MatrixD& item_embeddings() const { return items_; }
  VectorD profile_embedding(std::span<const ItemIndex> profile) const;
  double score(const VectorD& profile_embedding, ItemIndex item) const { return items_.row(item).dot(profile_embedding); }
  const ModelParamsD& params() const { return params_; }

 private:
  ModelParamsD params_;
  MatrixD items_;
};

struct RankedItem {
  ItemIndex item = 0;
  double score = 0.0;
};

/// Scores every catalog item not in `exclude`, sorts by descending score with
/// ascending item id on ties, returns the first k.
std::vector<RankedItem> rank_catalog(const CuratorNetScorer& scorer, std::span<const ItemIndex> profile,
                                     const Catalog& catalog, std::span<const ItemIndex> exclude, std::size_t k);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path, const TrainConfig* config = nullptr,
                     const TrainHistory* history = nullptr);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const ModelParams& params, const TrainConfig* config = nullptr,
                              const TrainHistory* history = nullptr);
ModelParams decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

}  // namespace curatornet
