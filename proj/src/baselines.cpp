#include "curatornet/baselines.hpp"

#include "curatornet/io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace curatornet {

namespace {

constexpr std::string_view kContainerMagic = "CNET1";
constexpr std::string_view kVbprKind = "VBPR1";

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fmt_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

VbprWeights<double> vbpr_zeros(std::size_t users, std::size_t items, std::size_t input_dim, std::size_t k,
                               std::size_t d, bool visual_bias) {
  using W = VbprWeights<double>;
  W w;
  w.gamma_user = W::Mat::Zero(static_cast<Eigen::Index>(users), static_cast<Eigen::Index>(k));
  w.theta_user = W::Mat::Zero(static_cast<Eigen::Index>(users), static_cast<Eigen::Index>(d));
  w.gamma_item = W::Mat::Zero(static_cast<Eigen::Index>(items), static_cast<Eigen::Index>(k));
  w.projection = W::Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(input_dim));
  w.beta_item = W::Vec::Zero(static_cast<Eigen::Index>(items));
  w.beta_vis = W::Vec::Zero(static_cast<Eigen::Index>(input_dim));
  w.visual_bias = visual_bias;
  return w;
}

template <typename W>
auto tensor_spans(W& w) {
  using Scalar = std::remove_reference_t<decltype(*w.beta_item.data())>;
  std::vector<std::span<Scalar>> out;
  w.for_each_tensor(
      [&](const std::string&, auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

double vbpr_margin(const VbprWeights<double>& w, std::size_t u, ItemIndex i, ItemIndex j, const VectorD& df,
                   VectorD* edf_out) {
  VectorD edf = w.projection * df;
  double x = w.beta_item(i) - w.beta_item(j);
  x += w.gamma_user.row(static_cast<Eigen::Index>(u)).dot(w.gamma_item.row(i) - w.gamma_item.row(j));
  x += w.theta_user.row(static_cast<Eigen::Index>(u)).dot(edf);
  if (w.visual_bias) x += w.beta_vis.dot(df);
  if (edf_out) *edf_out = std::move(edf);
  return x;
}

void check_vbpr_triple(const VbprWeights<double>& w, const TrainingTriple& t) {
  if (t.user >= static_cast<std::size_t>(w.gamma_user.rows())) throw ShapeError("VBPR triple references an unknown user");
  const auto items = static_cast<ItemIndex>(w.gamma_item.rows());
  if (t.positive >= items || t.negative >= items) throw ShapeError("VBPR triple references an item outside the catalog");
}

double vbpr_accuracy(const VbprWeights<double>& w, const Matrix& features, std::span<const TrainingTriple> triples,
                     double* mean_loss) {
  std::size_t correct = 0;
  double loss = 0.0;
  for (const auto& t : triples) {
    check_vbpr_triple(w, t);
    const VectorD df = (features.row(t.positive) - features.row(t.negative)).transpose().cast<double>();
    const double x = vbpr_margin(w, t.user, t.positive, t.negative, df, nullptr);
    loss += softplus(-x);
    if (x > 0.0) ++correct;
  }
  if (mean_loss) *mean_loss = loss / static_cast<double>(triples.size());
  if (!std::isfinite(loss)) throw NumericError("VBPR validation loss is non-finite");
  return static_cast<double>(correct) / static_cast<double>(triples.size());
}

}  // namespace

std::optional<std::size_t> VbprModel::user_index(std::string_view user_id) const {
  for (std::size_t u = 0; u < user_ids.size(); ++u)
    if (user_ids[u] == user_id) return u;
  return std::nullopt;
}

VbprWeights<double> vbpr_init(std::size_t users, std::size_t items, std::size_t input_dim, const VbprConfig& config,
                              std::uint64_t seed) {
  if (config.latent_dim == 0 || config.visual_dim == 0) throw ShapeError("VBPR: factor dimensions must be positive");
  auto w = vbpr_zeros(users, items, input_dim, config.latent_dim, config.visual_dim, config.visual_bias);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (auto* m : {&w.gamma_user, &w.theta_user, &w.gamma_item})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = normal(rng);
  return w;
}

double vbpr_score(const VbprWeights<double>& w, std::size_t user, ItemIndex item, const VectorD& features) {
  if (user >= static_cast<std::size_t>(w.gamma_user.rows())) throw std::out_of_range("VBPR: unknown user");
  if (item >= static_cast<std::size_t>(w.gamma_item.rows())) throw std::out_of_range("VBPR: unknown item");
  if (features.size() != w.projection.cols()) throw ShapeError("VBPR: feature dimension mismatch");
  const auto u = static_cast<Eigen::Index>(user);
  double s = w.beta_item(item) + w.gamma_user.row(u).dot(w.gamma_item.row(item));
  s += w.theta_user.row(u).dot(w.projection * features);
  if (w.visual_bias) s += w.beta_vis.dot(features);
  return s;
}

LossBreakdown vbpr_loss(const VbprWeights<double>& w, const Matrix& features, std::span<const TrainingTriple> batch,
                        double lambda, VbprWeights<double>* grad) {
  if (batch.empty()) throw ShapeError("vbpr_loss: empty batch");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("vbpr_loss: lambda must be finite and >= 0");
  if (features.cols() != w.projection.cols()) throw ShapeError("vbpr_loss: feature dimension mismatch");
  if (grad)
    *grad = vbpr_zeros(static_cast<std::size_t>(w.gamma_user.rows()), static_cast<std::size_t>(w.gamma_item.rows()),
                       static_cast<std::size_t>(w.projection.cols()), static_cast<std::size_t>(w.gamma_item.cols()),
                       static_cast<std::size_t>(w.projection.rows()), w.visual_bias);
  const double b = static_cast<double>(batch.size());
  LossBreakdown loss;
  for (const auto& t : batch) {
    check_vbpr_triple(w, t);
    const VectorD df = (features.row(t.positive) - features.row(t.negative)).transpose().cast<double>();
    VectorD edf;
    const double x = vbpr_margin(w, t.user, t.positive, t.negative, df, &edf);
    loss.data += softplus(-x);
    if (!grad) continue;
    const double g = -sigmoid(-x) / b;
    const auto u = static_cast<Eigen::Index>(t.user);
    const auto i = static_cast<Eigen::Index>(t.positive);
    const auto j = static_cast<Eigen::Index>(t.negative);
    grad->beta_item(i) += g;
    grad->beta_item(j) -= g;
    grad->gamma_user.row(u) += g * (w.gamma_item.row(i) - w.gamma_item.row(j));
    grad->gamma_item.row(i) += g * w.gamma_user.row(u);
    grad->gamma_item.row(j) -= g * w.gamma_user.row(u);
    grad->theta_user.row(u) += g * edf.transpose();
    grad->projection.noalias() += (g * w.theta_user.row(u).transpose()) * df.transpose();
    if (w.visual_bias) grad->beta_vis += g * df;
  }
  loss.data /= b;
  loss.regularizer = lambda * w.squared_norm();
  loss.total = loss.data + loss.regularizer;
  if (!std::isfinite(loss.total)) throw NumericError("vbpr_loss: non-finite loss");
  if (grad && lambda > 0.0) {
    auto gs = tensor_spans(*grad);
    auto ws = tensor_spans(w);
    for (std::size_t t = 0; t < gs.size(); ++t)
      for (std::size_t k = 0; k < gs[t].size(); ++k) gs[t][k] += 2.0 * lambda * ws[t][k];
  }
  return loss;
}

VbprTrainResult vbpr_train(const InteractionLog& train_log, const Matrix& features,
                           std::span<const TrainingTriple> corpus, std::span<const TrainingTriple> valid,
                           const VbprConfig& config) {
  const TrainConfig& tc = config.train;
  tc.adam.validate();
  if (corpus.empty()) throw std::invalid_argument("vbpr_train: empty training corpus");
  if (tc.batch_size == 0 || tc.max_epochs <= 0 || tc.patience <= 0)
    throw std::invalid_argument("vbpr_train: batch size, epochs and patience must be positive");
  if (!(tc.lambda >= 0.0) || !std::isfinite(tc.lambda)) throw std::invalid_argument("vbpr_train: lambda must be >= 0");
  const auto selection = valid.empty() ? corpus : valid;

  auto w = vbpr_init(train_log.user_count(), static_cast<std::size_t>(features.rows()),
                     static_cast<std::size_t>(features.cols()), config, derive_seed(tc.seed, 1));
  Rng rng(derive_seed(tc.seed, 2));
  auto spans = tensor_spans(w);
  std::vector<AdamState> adam;
  for (const auto& s : spans) adam.push_back(AdamState::zeros(s.size()));
  std::int64_t step = 0;

  VbprTrainResult result;
  for (const auto& u : train_log.users()) result.model.user_ids.push_back(u.user_id);
  result.model.weights = w.cast<float>();

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingTriple> batch;
  bool have_best = false;
  int since_best = 0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + tc.batch_size); ++k) batch.push_back(corpus[order[k]]);
      VbprWeights<double> grad;
      LossBreakdown loss;
      try {
        loss = vbpr_loss(w, features, batch, tc.lambda, &grad);
      } catch (const NumericError& e) {
        throw NumericError("VBPR training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      loss_sum += loss.total * static_cast<double>(batch.size());
      ++step;
      auto gs = tensor_spans(grad);
      for (std::size_t t = 0; t < spans.size(); ++t)
        adam_update(spans[t], std::span<const double>(gs[t]), std::span<double>(adam[t].m), std::span<double>(adam[t].v),
                    step, tc.adam);
    }
    // Selection uses the stored 32-bit values, the same numbers a checkpoint holds.
    const auto stored = w.cast<float>();
    double valid_loss = 0.0;
    const double acc = vbpr_accuracy(stored.cast<double>(), features, selection, &valid_loss);
    result.history.epochs.push_back({epoch, loss_sum / static_cast<double>(corpus.size()), valid_loss, acc});
    spdlog::info("vbpr epoch {} train_loss={:.6f} valid_loss={:.6f} valid_acc={:.4f}", epoch,
                 result.history.epochs.back().train_loss, valid_loss, acc);
    if (!have_best || acc > result.history.best_valid_accuracy) {
      have_best = true;
      result.model.weights = stored;
      result.history.best_epoch = epoch;
      result.history.best_valid_accuracy = acc;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      break;
    }
  }
  return result;
}

std::string encode_vbpr(const VbprModel& model, const VbprConfig* config, const TrainHistory* history) {
  TensorFile file;
  file.meta.push_back("kind " + std::string(kVbprKind));
  file.meta.push_back(std::string("visual_bias ") + (model.weights.visual_bias ? "1" : "0"));
  if (config) {
    const auto& tc = config->train;
    file.meta.push_back("config latent_dim=" + std::to_string(config->latent_dim) +
                        " visual_dim=" + std::to_string(config->visual_dim) + " lr=" + fmt_double(tc.adam.lr) +
                        " beta1=" + fmt_double(tc.adam.beta1) + " beta2=" + fmt_double(tc.adam.beta2) +
                        " eps=" + fmt_double(tc.adam.eps) + " lambda=" + fmt_double(tc.lambda) +
                        " batch_size=" + std::to_string(tc.batch_size) + " max_epochs=" + std::to_string(tc.max_epochs) +
                        " patience=" + std::to_string(tc.patience) + " seed=" + std::to_string(tc.seed));
  }
  if (history) {
    for (const auto& e : history->epochs)
      file.meta.push_back("history epoch=" + std::to_string(e.epoch) + " train_loss=" + fmt_double(e.train_loss) +
                          " valid_loss=" + fmt_double(e.valid_loss) + " valid_accuracy=" + fmt_double(e.valid_accuracy));
    file.meta.push_back("best_epoch " + std::to_string(history->best_epoch));
    file.meta.push_back("best_valid_accuracy " + fmt_double(history->best_valid_accuracy));
  }
  if (model.user_ids.size() != static_cast<std::size_t>(model.weights.gamma_user.rows()))
    throw FormatError("VBPR model: user id table does not match user factors");
  file.meta.push_back("users " + std::to_string(model.user_ids.size()));
  for (const auto& id : model.user_ids) {
    if (id.find('\n') != std::string::npos) throw FormatError("user id contains a newline");
    file.meta.push_back("user " + id);
  }
  model.weights.for_each_tensor([&](const std::string& name, const auto& t) {
    require_finite(t, "VBPR tensor " + name);
    TensorBlob blob{name, static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols()), {}};
    blob.data.assign(t.data(), t.data() + t.size());
    file.tensors.push_back(std::move(blob));
  });
  return encode_tensor_file(kContainerMagic, file);
}

VbprModel decode_vbpr(std::string_view bytes, const std::string& source) {
  const TensorFile file = decode_tensor_file(kContainerMagic, bytes, source);
  if (file.meta_value("kind") != kVbprKind) throw FormatError(source + ": not a VBPR checkpoint");
  VbprModel model;
  for (const auto& line : file.meta)
    if (line.starts_with("user ")) model.user_ids.push_back(line.substr(5));
  if (file.meta_value("users") != std::to_string(model.user_ids.size()))
    throw FormatError(source + ": user table does not match declared count");
  auto& w = model.weights;
  w.visual_bias = file.meta_value("visual_bias") != "0";
  std::size_t used = 0;
  w.for_each_tensor([&](const std::string& name, auto& t) {
    const TensorBlob& blob = file.tensor(name);
    using T = std::remove_cvref_t<decltype(t)>;
    if constexpr (T::ColsAtCompileTime == 1) {
      if (blob.cols != 1) throw FormatError(source + ": tensor " + name + " must be a column vector");
      t.resize(static_cast<Eigen::Index>(blob.rows));
    } else {
      t.resize(static_cast<Eigen::Index>(blob.rows), static_cast<Eigen::Index>(blob.cols));
    }
    std::copy(blob.data.begin(), blob.data.end(), t.data());
    require_finite(t, source + ": tensor " + name);
    ++used;
  });
  if (used != file.tensors.size()) throw FormatError(source + ": unexpected extra tensors");
  const auto users = w.gamma_user.rows();
  const auto items = w.gamma_item.rows();
  if (w.theta_user.rows() != users || static_cast<std::size_t>(users) != model.user_ids.size() ||
      w.beta_item.size() != items || w.projection.rows() != w.theta_user.cols() ||
      w.beta_vis.size() != w.projection.cols() || w.gamma_user.cols() != w.gamma_item.cols())
    throw FormatError(source + ": inconsistent VBPR tensor shapes");
  return model;
}

void save_vbpr(const VbprModel& model, const std::filesystem::path& path, const VbprConfig* config,
               const TrainHistory* history) {
  atomic_write_file(path, encode_vbpr(model, config, history));
}

VbprModel load_vbpr(const std::filesystem::path& path) { return decode_vbpr(read_file(path), path.string()); }

VbprRecommender::VbprRecommender(VbprModel model, const Matrix& features) : model_(std::move(model)) {
  const auto& w = model_.weights;
  if (features.rows() != w.gamma_item.rows() || features.cols() != w.projection.cols())
    throw ShapeError("VBPR model does not match the catalog");
  item_latent_ = w.gamma_item.cast<double>();
  const MatrixD e = w.projection.cast<double>();
  const VectorD beta_vis = w.beta_vis.cast<double>();
  item_visual_.resize(features.rows(), e.rows());
  item_bias_ = w.beta_item.cast<double>();
  constexpr Eigen::Index kChunk = 1024;
  for (Eigen::Index start = 0; start < features.rows(); start += kChunk) {
    const Eigen::Index rows = std::min(kChunk, features.rows() - start);
    const MatrixD f = features.middleRows(start, rows).cast<double>();
    item_visual_.middleRows(start, rows) = f * e.transpose();
    if (w.visual_bias) item_bias_.segment(start, rows) += f * beta_vis;
  }
}

bool VbprRecommender::can_score(const UserQuery& query) const {
  return model_.user_index(query.user_id).has_value();
}

VectorD VbprRecommender::score_all(const UserQuery& query) const {
  const auto u = model_.user_index(query.user_id);
  if (!u) throw std::out_of_range("VBPR: user " + std::string(query.user_id) + " was not seen in training");
  const auto row = static_cast<Eigen::Index>(*u);
  const VectorD gu = model_.weights.gamma_user.row(row).transpose().cast<double>();
  const VectorD tu = model_.weights.theta_user.row(row).transpose().cast<double>();
  return item_bias_ + item_latent_ * gu + item_visual_ * tu;
}

double visrank_score(const MatrixD& profile_features, const VectorD& item_features) {
  if (profile_features.rows() == 0) throw ShapeError("visrank_score: empty profile");
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < profile_features.rows(); ++r)
    best = std::max(best, cosine(VectorD(profile_features.row(r).transpose()), item_features));
  return best;
}

VisRankRecommender::VisRankRecommender(const Matrix& features) : normalized_(features.cast<double>()) {
  for (Eigen::Index r = 0; r < normalized_.rows(); ++r) {
    const double n = normalized_.row(r).norm();
    if (!(n > 0.0)) throw NumericError("VisRank: zero-norm embedding at row " + std::to_string(r));
    normalized_.row(r) /= n;
  }
}

VectorD VisRankRecommender::score_all(const UserQuery& query) const {
  if (query.history.empty()) throw ShapeError("VisRank: empty profile");
  MatrixD profile(static_cast<Eigen::Index>(query.history.size()), normalized_.cols());
  for (std::size_t k = 0; k < query.history.size(); ++k)
    profile.row(static_cast<Eigen::Index>(k)) = normalized_.row(query.history[k]);
  const MatrixD sims = normalized_ * profile.transpose();
  return sims.rowwise().maxCoeff();
}

VectorD CuratorNetRecommender::score_all(const UserQuery& query) const {
  const VectorD p = scorer_.profile_embedding(query.history);
  return scorer_.item_embeddings() * p;
}

std::vector<RankedItem> random_rank(std::span<const ItemIndex> candidates, Rng& rng) {
  std::vector<ItemIndex> order(candidates.begin(), candidates.end());
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<RankedItem> out;
  out.reserve(order.size());
  for (std::size_t p = 0; p < order.size(); ++p) out.push_back({order[p], static_cast<double>(order.size() - p)});
  return out;
}

std::vector<RankedItem> oracle_rank(std::span<const ItemIndex> candidates, std::span<const ItemIndex> relevant,
                                    const Catalog& catalog) {
  const std::unordered_set<ItemIndex> rel(relevant.begin(), relevant.end());
  std::vector<RankedItem> out;
  out.reserve(candidates.size());
  for (ItemIndex i : candidates) out.push_back({i, rel.contains(i) ? 1.0 : 0.0});
  std::sort(out.begin(), out.end(), [&](const RankedItem& a, const RankedItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return catalog.id(a.item) < catalog.id(b.item);
  });
  return out;
}

VectorD RandomRecommender::score_all(const UserQuery& query) const {
  Rng rng(derive_seed(seed_, fnv1a(query.user_id)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VectorD s(static_cast<Eigen::Index>(items_));
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = unit(rng);
  return s;
}

VectorD OracleRecommender::score_all(const UserQuery& query) const {
  VectorD s = VectorD::Zero(static_cast<Eigen::Index>(items_));
  for (ItemIndex i : query.relevant) s(i) = 1.0;
  return s;
}

}  // namespace curatornet
