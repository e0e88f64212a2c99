#pragma once

// Dense math shared by every learned model: SELU, affine layers, Adam,
// cosine similarity and a central-difference gradient checker.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace curatornet {

// Parameters and embeddings are stored in 32-bit; training math runs in 64-bit.
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<float, Eigen::Dynamic, 1>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorD = Eigen::Matrix<double, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace selu_constants {
inline constexpr double kLambda = 1.0507009873554804934193349852946;
inline constexpr double kAlpha = 1.6732632423543772848170429916717;
}  // namespace selu_constants

inline double selu(double x) {
  using namespace selu_constants;
  return x > 0.0 ? kLambda * x : kLambda * kAlpha * std::expm1(x);
}

/// Derivative of selu at x. Uses the left branch at exactly 0.
inline double selu_grad(double x) {
  using namespace selu_constants;
  return x > 0.0 ? kLambda : kLambda * kAlpha * std::exp(x);
}

template <typename Derived>
void selu_inplace(Eigen::MatrixBase<Derived>& m) {
  m = m.unaryExpr([](auto v) { return static_cast<typename Derived::Scalar>(selu(v)); });
}

/// Numerically stable ln(1 + e^x).
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError(what + ": non-finite value");
}

/// y = W x + b, optionally followed by elementwise selu.
VectorD affine_forward(const MatrixD& weight, const VectorD& bias, const VectorD& x, bool activate);

/// Row-batched variant: each row of `inputs` is one instance.
MatrixD affine_forward_batch(const MatrixD& weight, const VectorD& bias, const MatrixD& inputs,
                             bool activate);

double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const VectorD& a, const VectorD& b);

/// Zero-mean normal with standard deviation 1/sqrt(fan_in); fan_in = cols.
void init_lecun_normal(Matrix& weight, Rng& rng);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// First/second moment estimates for one parameter tensor plus the step count.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  static AdamState zeros(std::size_t size) { return {std::vector<double>(size), std::vector<double>(size), 0}; }
};

/// One Adam update in place. `t` is the step number after increment (>= 1).
template <typename T>
void adam_update(std::span<T> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::int64_t t, const AdamConfig& cfg) {
  if (param.size() != grad.size() || m.size() != param.size() || v.size() != param.size())
    throw ShapeError("adam_update: state shape does not match parameter");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

/// Pure Adam step over a flat parameter; returns the updated parameter and state.
std::pair<std::vector<double>, AdamState> adam_step(std::span<const double> param,
                                                    std::span<const double> grad,
                                                    const AdamState& state, const AdamConfig& cfg);

/// Objective evaluated at theta. When `grad` is non-empty it must be filled
/// with the analytic gradient.
using ObjectiveFn = std::function<double(std::span<const double> theta, std::span<double> grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the analytic gradient of `fn` at `theta` against central
/// differences. `max_coords` > 0 checks a seeded random subset.
GradCheckResult finite_diff_check(const ObjectiveFn& fn, std::span<const double> theta, double eps,
                                  std::size_t max_coords = 0, std::uint64_t seed = 0);

/// Independent RNG stream for a component: splitmix64 over (base, stream).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Number of worker threads, capped by the CURATORNET_THREADS environment variable.
unsigned worker_threads();

/// Runs body(i) for i in [0, n) on up to worker_threads() threads. Results must
/// be written to per-index slots so output does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace curatornet
