#include "curatornet/numerics.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <thread>

namespace curatornet {

VectorD affine_forward(const MatrixD& weight, const VectorD& bias, const VectorD& x, bool activate) {
  if (weight.cols() != x.size() || weight.rows() != bias.size())
    throw ShapeError("affine_forward: shape mismatch");
  VectorD y = weight * x + bias;
  if (activate) selu_inplace(y);
  require_finite(y, "affine_forward");
  return y;
}

MatrixD affine_forward_batch(const MatrixD& weight, const VectorD& bias, const MatrixD& inputs,
                             bool activate) {
  if (weight.cols() != inputs.cols() || weight.rows() != bias.size())
    throw ShapeError("affine_forward_batch: shape mismatch");
  MatrixD y = inputs * weight.transpose();
  y.rowwise() += bias.transpose();
  if (activate) selu_inplace(y);
  return y;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) throw NumericError("cosine: zero-norm input");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const VectorD& a, const VectorD& b) {
  return cosine(std::span<const double>(a.data(), a.size()), std::span<const double>(b.data(), b.size()));
}

void init_lecun_normal(Matrix& weight, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(weight.cols())));
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = static_cast<float>(normal(rng));
}

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
}

std::pair<std::vector<double>, AdamState> adam_step(std::span<const double> param,
                                                    std::span<const double> grad,
                                                    const AdamState& state, const AdamConfig& cfg) {
  cfg.validate();
  if (state.m.size() != param.size() || state.v.size() != param.size() || grad.size() != param.size())
    throw ShapeError("adam_step: state shape does not match parameter");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  std::vector<double> out(param.begin(), param.end());
  AdamState next = state;
  next.t = state.t + 1;
  adam_update<double>(out, grad, next.m, next.v, next.t, cfg);
  return {std::move(out), std::move(next)};
}

GradCheckResult finite_diff_check(const ObjectiveFn& fn, std::span<const double> theta, double eps,
                                  std::size_t max_coords, std::uint64_t seed) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> analytic(point.size());
  fn(point, analytic);

  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  for (std::size_t idx : coords) {
    const double saved = point[idx];
    point[idx] = saved + eps;
    const double up = fn(point, {});
    point[idx] = saved - eps;
    const double down = fn(point, {});
    point[idx] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_check: non-finite loss at perturbed point");
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[idx] - numeric) / denom;
    if (result.checked == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = idx;
      result.analytic = analytic[idx];
      result.numeric = numeric;
    }
    ++result.checked;
  }
  return result;
}

unsigned worker_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CURATORNET_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(worker_threads(), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace curatornet
