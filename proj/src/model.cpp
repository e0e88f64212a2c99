#include "curatornet/model.hpp"

#include "curatornet/io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace curatornet {

namespace {

constexpr std::string_view kCheckpointMagic = "CNET1";
constexpr std::size_t kChunkRows = 1024;

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  for (std::string tok; std::getline(in, tok, ',');) out.push_back(std::stoul(tok));
  return out;
}

template <typename T>
CuratorNetWeights<T> shaped(const Architecture& arch) {
  arch.validate();
  CuratorNetWeights<T> p;
  p.arch = arch;
  std::size_t in = arch.input_dim;
  for (std::size_t w : arch.tower) {
    p.tower.push_back({decltype(DenseLayer<T>::weight)::Zero(w, in), decltype(DenseLayer<T>::bias)::Zero(w)});
    in = w;
  }
  in = 2 * arch.embedding_dim();
  for (std::size_t w : arch.head) {
    p.head.push_back({decltype(DenseLayer<T>::weight)::Zero(w, in), decltype(DenseLayer<T>::bias)::Zero(w)});
    in = w;
  }
  return p;
}

MatrixD selu_of(const MatrixD& z) { return z.unaryExpr([](double v) { return selu(v); }); }

/// Runs `input` through a stack of SELU layers, keeping pre-activations and
/// activations (a[0] = input) for the backward pass.
void forward_layers(const std::vector<DenseLayer<double>>& layers, MatrixD input, std::vector<MatrixD>& z,
                    std::vector<MatrixD>& a) {
  z.clear();
  a.clear();
  a.push_back(std::move(input));
  for (const auto& layer : layers) {
    MatrixD pre = a.back() * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    a.push_back(selu_of(pre));
    z.push_back(std::move(pre));
  }
}

MatrixD forward_only(const std::vector<DenseLayer<double>>& layers, MatrixD x) {
  for (const auto& layer : layers) {
    MatrixD pre = x * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    x = selu_of(pre);
  }
  return x;
}

/// Accumulates parameter gradients into `grads` and returns dL/d(input).
MatrixD backward_layers(const std::vector<DenseLayer<double>>& layers, const std::vector<MatrixD>& z,
                        const std::vector<MatrixD>& a, MatrixD d_out, std::vector<DenseLayer<double>>& grads,
                        bool need_input_grad) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    MatrixD dz = d_out.cwiseProduct(z[l].unaryExpr([](double v) { return selu_grad(v); }));
    grads[l].weight.noalias() += dz.transpose() * a[l];
    grads[l].bias.noalias() += dz.colwise().sum().transpose();
    if (l > 0 || need_input_grad) d_out = dz * layers[l].weight;
  }
  return d_out;
}

/// Order of profile members for pooling: lexicographic on their tower
/// outputs, so the sum in the mean is independent of how the profile was
/// listed.
void canonical_order(const MatrixD& tower_out, std::vector<int>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [&](int x, int y) {
    const auto rx = tower_out.row(x);
    const auto ry = tower_out.row(y);
    return std::lexicographical_compare(rx.begin(), rx.end(), ry.begin(), ry.end());
  });
}

/// concat(mean, max) of the listed rows into `out` (length 2t). `argmax`
/// receives, per dimension, the first row attaining the maximum.
void pool_rows(const MatrixD& tower_out, const std::vector<int>& rows, double* out, int* argmax) {
  const auto t = tower_out.cols();
  for (Eigen::Index d = 0; d < t; ++d) {
    double sum = 0.0;
    double best = tower_out(rows[0], d);
    int best_row = rows[0];
    for (int r : rows) {
      const double v = tower_out(r, d);
      sum += v;
      if (v > best) {
        best = v;
        best_row = r;
      }
    }
    out[d] = sum / static_cast<double>(rows.size());
    out[t + d] = best;
    if (argmax) argmax[d] = best_row;
  }
}

void check_features(const Architecture& arch, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != arch.input_dim)
    throw ShapeError("feature dimension " + std::to_string(features.cols()) + " does not match model input " +
                     std::to_string(arch.input_dim));
}

MatrixD gather_rows(const Matrix& features, const std::vector<ItemIndex>& items) {
  MatrixD out(items.size(), features.cols());
  for (std::size_t r = 0; r < items.size(); ++r) out.row(r) = features.row(items[r]).cast<double>();
  return out;
}

struct BatchForward {
  std::vector<ItemIndex> unique;
  std::vector<std::vector<int>> members;  // per triple, rows into the tower output, canonical order
  std::vector<int> pos_row;
  std::vector<int> neg_row;
  std::vector<MatrixD> tz, ta;
  std::vector<MatrixD> hz, ha;
  std::vector<int> argmax;  // batch x t
  VectorD margins;
};

int row_of(const std::vector<ItemIndex>& unique, ItemIndex item) {
  return static_cast<int>(std::lower_bound(unique.begin(), unique.end(), item) - unique.begin());
}

BatchForward forward_batch(const ModelParamsD& params, const Matrix& features, std::span<const TrainingTriple> batch,
                           bool keep_caches) {
  check_features(params.arch, features);
  const auto n_items = static_cast<ItemIndex>(features.rows());
  BatchForward f;
  for (const auto& t : batch) {
    if (t.profile.empty()) throw ShapeError("triple with empty profile");
    for (ItemIndex i : t.profile) f.unique.push_back(i);
    f.unique.push_back(t.positive);
    f.unique.push_back(t.negative);
  }
  std::sort(f.unique.begin(), f.unique.end());
  f.unique.erase(std::unique(f.unique.begin(), f.unique.end()), f.unique.end());
  if (!f.unique.empty() && f.unique.back() >= n_items) throw ShapeError("triple references an item outside the catalog");

  MatrixD tower_out;
  if (keep_caches) {
    forward_layers(params.tower, gather_rows(features, f.unique), f.tz, f.ta);
    tower_out = f.ta.back();
  } else {
    tower_out = forward_only(params.tower, gather_rows(features, f.unique));
  }
  const auto t = tower_out.cols();

  const auto b = static_cast<Eigen::Index>(batch.size());
  MatrixD pooled(b, 2 * t);
  if (keep_caches) f.argmax.resize(static_cast<std::size_t>(b * t));
  f.members.resize(batch.size());
  f.pos_row.resize(batch.size());
  f.neg_row.resize(batch.size());
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto& tr = batch[static_cast<std::size_t>(k)];
    auto& rows = f.members[static_cast<std::size_t>(k)];
    for (ItemIndex i : tr.profile) rows.push_back(row_of(f.unique, i));
    canonical_order(tower_out, rows);
    pool_rows(tower_out, rows, pooled.row(k).data(), keep_caches ? f.argmax.data() + k * t : nullptr);
    f.pos_row[static_cast<std::size_t>(k)] = row_of(f.unique, tr.positive);
    f.neg_row[static_cast<std::size_t>(k)] = row_of(f.unique, tr.negative);
  }

  MatrixD profile;
  if (keep_caches) {
    forward_layers(params.head, std::move(pooled), f.hz, f.ha);
    profile = f.ha.back();
  } else {
    profile = forward_only(params.head, std::move(pooled));
  }
  f.margins.resize(b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const auto diff = tower_out.row(f.pos_row[static_cast<std::size_t>(k)]) -
                      tower_out.row(f.neg_row[static_cast<std::size_t>(k)]);
    f.margins(k) = profile.row(k).dot(diff);
  }
  if (!keep_caches) f.members.clear();
  return f;
}

template <typename T>
struct TensorView {
  T* data;
  std::size_t size;
};

template <typename W>
auto tensor_views(W& w) {
  using Scalar = std::remove_reference_t<decltype(*w.tower[0].weight.data())>;
  std::vector<TensorView<Scalar>> out;
  w.for_each_tensor([&](const std::string&, auto& t) { out.push_back({t.data(), static_cast<std::size_t>(t.size())}); });
  return out;
}

}  // namespace

void Architecture::validate() const {
  if (input_dim == 0) throw ShapeError("architecture: input dimension must be positive");
  if (tower.empty() || head.empty()) throw ShapeError("architecture: tower and head need at least one layer");
  for (std::size_t w : tower)
    if (w == 0) throw ShapeError("architecture: zero-width tower layer");
  for (std::size_t w : head)
    if (w == 0) throw ShapeError("architecture: zero-width head layer");
  if (head.back() != tower.back())
    throw ShapeError("architecture: head output must match item embedding width for the dot product");
}

std::string Architecture::describe() const {
  return "input=" + std::to_string(input_dim) + " tower=" + join_sizes(tower) + " head=" + join_sizes(head);
}

ModelParams zero_params(const Architecture& arch) { return shaped<float>(arch); }

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  ModelParams p = shaped<float>(arch);
  Rng rng(seed);
  for (auto& l : p.tower) init_lecun_normal(l.weight, rng);
  for (auto& l : p.head) init_lecun_normal(l.weight, rng);
  return p;
}

std::vector<double> flatten(const ModelParamsD& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  params.for_each_tensor([&](const std::string&, const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); });
  return out;
}

void unflatten(std::span<const double> flat, ModelParamsD& params) {
  if (flat.size() != params.parameter_count()) throw ShapeError("unflatten: size mismatch");
  std::size_t pos = 0;
  params.for_each_tensor([&](const std::string&, auto& t) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.data());
    pos += static_cast<std::size_t>(t.size());
  });
}

VectorD embed_item(const ModelParamsD& params, const VectorD& features) {
  if (static_cast<std::size_t>(features.size()) != params.arch.input_dim) throw ShapeError("embed_item: wrong input dimension");
  require_finite(features, "embed_item input");
  MatrixD x = features.transpose();
  VectorD out = forward_only(params.tower, std::move(x)).row(0).transpose();
  require_finite(out, "embed_item output");
  return out;
}

MatrixD embed_items(const ModelParamsD& params, const MatrixD& features) {
  if (static_cast<std::size_t>(features.cols()) != params.arch.input_dim) throw ShapeError("embed_items: wrong input dimension");
  MatrixD out = forward_only(params.tower, features);
  require_finite(out, "embed_items output");
  return out;
}

VectorD embed_profile_from_tower(const ModelParamsD& params, const MatrixD& member_tower_outputs) {
  if (member_tower_outputs.rows() == 0) throw ShapeError("embed_profile: empty profile");
  if (static_cast<std::size_t>(member_tower_outputs.cols()) != params.arch.embedding_dim())
    throw ShapeError("embed_profile: member embedding width mismatch");
  std::vector<int> rows(static_cast<std::size_t>(member_tower_outputs.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  MatrixD pooled(1, 2 * member_tower_outputs.cols());
  pool_rows(member_tower_outputs, rows, pooled.data(), nullptr);
  VectorD out = forward_only(params.head, std::move(pooled)).row(0).transpose();
  require_finite(out, "embed_profile output");
  return out;
}

VectorD embed_profile(const ModelParamsD& params, const MatrixD& profile_features) {
  if (profile_features.rows() == 0) throw ShapeError("embed_profile: empty profile");
  const MatrixD tower_out = embed_items(params, profile_features);
  std::vector<int> rows(static_cast<std::size_t>(tower_out.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  canonical_order(tower_out, rows);
  MatrixD ordered(tower_out.rows(), tower_out.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) ordered.row(static_cast<Eigen::Index>(r)) = tower_out.row(rows[r]);
  return embed_profile_from_tower(params, ordered);
}

double score(const ModelParamsD& params, const MatrixD& profile_features, const VectorD& item_features) {
  return embed_profile(params, profile_features).dot(embed_item(params, item_features));
}

LossBreakdown triple_loss(const ModelParamsD& params, const Matrix& features, std::span<const TrainingTriple> batch,
                          double lambda, ModelParamsD* grad) {
  if (batch.empty()) throw ShapeError("triple_loss: empty batch");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("triple_loss: lambda must be finite and >= 0");
  const bool want_grad = grad != nullptr;
  BatchForward f = forward_batch(params, features, batch, want_grad);
  const auto b = static_cast<double>(batch.size());

  LossBreakdown loss;
  for (Eigen::Index k = 0; k < f.margins.size(); ++k) loss.data += softplus(-f.margins(k));
  loss.data /= b;
  loss.regularizer = lambda * params.squared_norm();
  loss.total = loss.data + loss.regularizer;
  if (!std::isfinite(loss.total)) throw NumericError("triple_loss: non-finite loss");
  if (!want_grad) return loss;

  *grad = shaped<double>(params.arch);
  const MatrixD& tower_out = f.ta.back();
  const MatrixD& profile = f.ha.back();
  const auto t = tower_out.cols();

  // dL/dx_k = -sigmoid(-x_k) / B
  MatrixD d_profile(profile.rows(), t);
  MatrixD d_tower = MatrixD::Zero(tower_out.rows(), t);
  for (Eigen::Index k = 0; k < profile.rows(); ++k) {
    const double g = -sigmoid(-f.margins(k)) / b;
    const int pr = f.pos_row[static_cast<std::size_t>(k)];
    const int nr = f.neg_row[static_cast<std::size_t>(k)];
    d_profile.row(k) = g * (tower_out.row(pr) - tower_out.row(nr));
    d_tower.row(pr) += g * profile.row(k);
    d_tower.row(nr) -= g * profile.row(k);
  }

  const MatrixD d_pooled = backward_layers(params.head, f.hz, f.ha, std::move(d_profile), grad->head, true);
  for (Eigen::Index k = 0; k < d_pooled.rows(); ++k) {
    const auto& rows = f.members[static_cast<std::size_t>(k)];
    const double share = 1.0 / static_cast<double>(rows.size());
    for (int r : rows) d_tower.row(r) += share * d_pooled.row(k).head(t);
    const int* am = f.argmax.data() + k * t;
    for (Eigen::Index d = 0; d < t; ++d) d_tower(am[d], d) += d_pooled(k, t + d);
  }
  backward_layers(params.tower, f.tz, f.ta, std::move(d_tower), grad->tower, false);

  if (lambda > 0.0) {
    auto gv = tensor_views(*grad);
    auto pv = tensor_views(params);
    for (std::size_t i = 0; i < gv.size(); ++i)
      for (std::size_t j = 0; j < gv[i].size; ++j) gv[i].data[j] += 2.0 * lambda * pv[i].data[j];
  }
  return loss;
}

std::vector<double> triple_margins(const ModelParamsD& params, const Matrix& features,
                                   std::span<const TrainingTriple> triples) {
  std::vector<double> out;
  out.reserve(triples.size());
  for (std::size_t start = 0; start < triples.size(); start += kChunkRows) {
    const auto chunk = triples.subspan(start, std::min(kChunkRows, triples.size() - start));
    const BatchForward f = forward_batch(params, features, chunk, false);
    out.insert(out.end(), f.margins.data(), f.margins.data() + f.margins.size());
  }
  return out;
}

namespace {

struct ValidationStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

ValidationStats validate_on(const ModelParams& params, const Matrix& features, std::span<const TrainingTriple> triples) {
  const auto margins = triple_margins(params.cast<double>(), features, triples);
  ValidationStats s;
  std::size_t correct = 0;
  for (double x : margins) {
    s.loss += softplus(-x);
    if (x > 0.0) ++correct;
  }
  s.loss /= static_cast<double>(margins.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(margins.size());
  if (!std::isfinite(s.loss)) throw NumericError("validation loss is non-finite");
  return s;
}

}  // namespace

TrainResult train_curatornet(const Architecture& arch, const Matrix& features, std::span<const TrainingTriple> train,
                             std::span<const TrainingTriple> valid, const TrainConfig& config) {
  arch.validate();
  check_features(arch, features);
  config.adam.validate();
  if (train.empty()) throw std::invalid_argument("train: empty training corpus");
  if (config.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (config.max_epochs <= 0) throw std::invalid_argument("train: max_epochs must be positive");
  if (config.patience <= 0) throw std::invalid_argument("train: patience must be positive");
  if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda)) throw std::invalid_argument("train: lambda must be >= 0");
  // Without validation triples, model selection falls back to the training set.
  const auto selection = valid.empty() ? train : valid;

  ModelParams params = init_params(arch, derive_seed(config.seed, 1));
  Rng rng(derive_seed(config.seed, 2));
  auto views = tensor_views(params);
  std::vector<AdamState> adam;
  for (const auto& v : views) adam.push_back(AdamState::zeros(v.size));
  std::int64_t step = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingTriple> batch;
  batch.reserve(config.batch_size);

  TrainResult result{params, {}};
  bool have_best = false;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) batch.push_back(train[order[k]]);
      ModelParamsD grad;
      LossBreakdown loss;
      try {
        loss = triple_loss(params.cast<double>(), features, batch, config.lambda, &grad);
      } catch (const NumericError& e) {
        throw DivergenceError(std::string("training diverged in epoch ") + std::to_string(epoch) + ": " + e.what(),
                              have_best ? result.params : params, result.history);
      }
      loss_sum += loss.total * static_cast<double>(batch.size());
      ++step;
      auto gviews = tensor_views(grad);
      for (std::size_t i = 0; i < views.size(); ++i)
        adam_update(std::span<float>(views[i].data, views[i].size), std::span<const double>(gviews[i].data, gviews[i].size),
                    std::span<double>(adam[i].m), std::span<double>(adam[i].v), step, config.adam);
    }
    ValidationStats vs;
    try {
      vs = validate_on(params, features, selection);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string("training diverged in epoch ") + std::to_string(epoch) + ": " + e.what(),
                            have_best ? result.params : params, result.history);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()), vs.loss, vs.accuracy};
    result.history.epochs.push_back(rec);
    spdlog::info("epoch {} train_loss={:.6f} valid_loss={:.6f} valid_acc={:.4f}", epoch, rec.train_loss, rec.valid_loss,
                 rec.valid_accuracy);
    if (!have_best || vs.accuracy > result.history.best_valid_accuracy) {
      have_best = true;
      result.params = params;
      result.history.best_epoch = epoch;
      result.history.best_valid_accuracy = vs.accuracy;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

CuratorNetScorer::CuratorNetScorer(const ModelParams& params, const Matrix& features) : params_(params.cast<double>()) {
  check_features(params.arch, features);
  items_.resize(features.rows(), static_cast<Eigen::Index>(params.arch.embedding_dim()));
  const auto n = static_cast<std::size_t>(features.rows());
  for (std::size_t start = 0; start < n; start += kChunkRows) {
    const auto rows = static_cast<Eigen::Index>(std::min(kChunkRows, n - start));
    const MatrixD x = features.middleRows(static_cast<Eigen::Index>(start), rows).cast<double>();
    items_.middleRows(static_cast<Eigen::Index>(start), rows) = forward_only(params_.tower, x);
  }
  require_finite(items_, "item embeddings");
}

VectorD CuratorNetScorer::profile_embedding(std::span<const ItemIndex> profile) const {
  if (profile.empty()) throw ShapeError("profile_embedding: empty profile");
  std::vector<ItemIndex> items(profile.begin(), profile.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  if (items.back() >= static_cast<ItemIndex>(items_.rows())) throw ShapeError("profile item outside the catalog");
  std::vector<int> rows(items.begin(), items.end());
  canonical_order(items_, rows);
  MatrixD members(static_cast<Eigen::Index>(rows.size()), items_.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) members.row(static_cast<Eigen::Index>(r)) = items_.row(rows[r]);
  return embed_profile_from_tower(params_, members);
}

std::vector<RankedItem> rank_catalog(const CuratorNetScorer& scorer, std::span<const ItemIndex> profile,
                                     const Catalog& catalog, std::span<const ItemIndex> exclude, std::size_t k) {
  if (k == 0) throw std::invalid_argument("rank_catalog: k must be positive");
  if (static_cast<std::size_t>(scorer.item_embeddings().rows()) != catalog.size())
    throw ShapeError("rank_catalog: scorer was built for a different catalog");
  const VectorD p = scorer.profile_embedding(profile);
  const VectorD scores = scorer.item_embeddings() * p;
  std::vector<char> skip(catalog.size(), 0);
  for (ItemIndex i : exclude)
    if (i < skip.size()) skip[i] = 1;
  std::vector<RankedItem> ranked;
  for (ItemIndex i = 0; i < catalog.size(); ++i)
    if (!skip[i]) ranked.push_back({i, scores(i)});
  const auto better = [&](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return catalog.id(a.item) < catalog.id(b.item);
  };
  const std::size_t keep = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), better);
  ranked.resize(keep);
  return ranked;
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

std::string encode_checkpoint(const ModelParams& params, const TrainConfig* config, const TrainHistory* history) {
  TensorFile file;
  file.meta.push_back("kind curatornet");
  file.meta.push_back("arch " + params.arch.describe());
  if (config) {
    file.meta.push_back("config lr=" + fmt_double(config->adam.lr) + " beta1=" + fmt_double(config->adam.beta1) +
                        " beta2=" + fmt_double(config->adam.beta2) + " eps=" + fmt_double(config->adam.eps) +
                        " lambda=" + fmt_double(config->lambda) + " batch_size=" + std::to_string(config->batch_size) +
                        " max_epochs=" + std::to_string(config->max_epochs) +
                        " patience=" + std::to_string(config->patience) + " seed=" + std::to_string(config->seed));
  }
  if (history) {
    for (const auto& e : history->epochs)
      file.meta.push_back("history epoch=" + std::to_string(e.epoch) + " train_loss=" + fmt_double(e.train_loss) +
                          " valid_loss=" + fmt_double(e.valid_loss) + " valid_accuracy=" + fmt_double(e.valid_accuracy));
    file.meta.push_back("best_epoch " + std::to_string(history->best_epoch));
    file.meta.push_back("best_valid_accuracy " + fmt_double(history->best_valid_accuracy));
  }
  params.for_each_tensor([&](const std::string& name, const auto& t) {
    require_finite(t, "checkpoint tensor " + name);
    TensorBlob blob{name, static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols()), {}};
    blob.data.assign(t.data(), t.data() + t.size());
    file.tensors.push_back(std::move(blob));
  });
  return encode_tensor_file(kCheckpointMagic, file);
}

ModelParams decode_checkpoint(std::string_view bytes, const std::string& source) {
  const TensorFile file = decode_tensor_file(kCheckpointMagic, bytes, source);
  if (file.meta_value("kind") != "curatornet") throw FormatError(source + ": not a CuratorNet checkpoint");
  Architecture arch;
  {
    std::istringstream in(file.meta_value("arch"));
    std::string field;
    int seen = 0;
    while (in >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw FormatError(source + ": malformed arch line");
      const auto key = field.substr(0, eq);
      const auto value = field.substr(eq + 1);
      try {
        if (key == "input") arch.input_dim = std::stoul(value), ++seen;
        else if (key == "tower") arch.tower = parse_sizes(value), ++seen;
        else if (key == "head") arch.head = parse_sizes(value), ++seen;
      } catch (const std::exception&) {
        throw FormatError(source + ": malformed arch line");
      }
    }
    if (seen != 3) throw FormatError(source + ": missing architecture");
    try {
      arch.validate();
    } catch (const ShapeError& e) {
      throw FormatError(source + ": " + e.what());
    }
  }
  ModelParams params = shaped<float>(arch);
  std::size_t used = 0;
  params.for_each_tensor([&](const std::string& name, auto& t) {
    const TensorBlob& blob = file.tensor(name);
    if (blob.rows != static_cast<std::size_t>(t.rows()) || blob.cols != static_cast<std::size_t>(t.cols()))
      throw FormatError(source + ": tensor " + name + " has shape " + std::to_string(blob.rows) + "x" +
                        std::to_string(blob.cols) + ", expected " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
    std::copy(blob.data.begin(), blob.data.end(), t.data());
    require_finite(t, source + ": tensor " + name);
    ++used;
  });
  if (used != file.tensors.size()) throw FormatError(source + ": unexpected extra tensors");
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path, const TrainConfig* config,
                     const TrainHistory* history) {
  atomic_write_file(path, encode_checkpoint(params, config, history));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace curatornet
