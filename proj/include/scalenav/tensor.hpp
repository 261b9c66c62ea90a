// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense float64 arrays.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record a backward closure; `backward()` on a scalar root
// walks the graph in reverse topological order and accumulates (sums)
// gradients into every node that requires them. Leaves that do not require
// gradients keep a zero gradient slot, which is how frozen parameters are
// expressed.

#ifndef SCALENAV_TENSOR_HPP_
#define SCALENAV_TENSOR_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scalenav/common.hpp"

namespace scalenav::tensor {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

class ShapeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<double> values();
  std::span<const double> values() const;
  /// Gradient slot; allocated (zeros) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  void zero_grad();

  /// Reverse pass from a single-element tensor (seed gradient 1).
  void backward() const;

  /// Same values, no graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);                     // [m,k] x [k,n]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias);  // x w + bias

// Elementwise; `b` may also be a suffix of `a`'s shape and is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

// Convolutions over [N, C, H, W].
// conv2d weight: [C_out, C_in, k, k]; output size floor((H + 2p - k)/s) + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// conv_transpose2d weight: [C_in, C_out, k, k];
// output size (H - 1)s - 2p + k + out_pad.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                        int pad, int out_pad_h, int out_pad_w);

// Shape manipulation
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_cols(const Tensor& x, int begin, int len);  // [m,n] -> [m,len]
Tensor concat_cols(const std::vector<Tensor>& parts);    // [m,n_i] -> [m, sum n_i]
Tensor concat_rows(const std::vector<Tensor>& parts);    // [m_i,...] -> [sum m_i,...]

// Reductions
Tensor reduce_sum(const Tensor& x);   // -> scalar
Tensor reduce_mean(const Tensor& x);  // -> scalar
Tensor sum_cols(const Tensor& x);     // [m,n] -> [m]

Tensor mse(const Tensor& a, const Tensor& b);

/// KL(N(mu, exp(log_var)) || N(0, I)), summed over latent dims, meaned over batch.
Tensor gaussian_kl(const Tensor& mu, const Tensor& log_var);

inline constexpr double kLogVarMin = -20.0;
inline constexpr double kLogVarMax = 5.0;

/// z = mu + exp(log_var/2) * eps with eps ~ N(0, I) from `rng`;
/// log_var is clamped to [kLogVarMin, kLogVarMax].
Tensor reparameterize(const Tensor& mu, const Tensor& log_var, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Parameters, checkpoints and optimizer.

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class ParamSet {
 public:
  Tensor& add(std::string name, Shape shape);
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  std::vector<NamedTensor>& entries() { return entries_; }
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;

  void set_requires_grad(bool on);
  void zero_grad();
  /// FNV-1a 64 over every value, in declaration order.
  std::uint64_t checksum() const;

  /// Writes `<prefix>.bin` (raw float64) and `<prefix>.manifest`.
  void save(const std::filesystem::path& prefix) const;
  /// Loads into already-declared tensors; names, shapes and checksums must match.
  void load(const std::filesystem::path& prefix);

 private:
  std::vector<NamedTensor> entries_;
};

std::uint64_t fnv1a64(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL);
bool checkpoint_exists(const std::filesystem::path& prefix);

/// Uniform(-bound, bound) fill.
void init_uniform(Tensor& t, double bound, std::mt19937_64& rng);

struct AdamConfig {
  double lr{3e-4};
  double beta1{0.9};
  double beta2{0.999};
  double epsilon{1e-8};
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step{0};
};

AdamState make_adam_state(const std::vector<Tensor>& params, AdamConfig config);

/// One bias-corrected Adam update of every tensor from its gradient slot.
void adam_step(std::vector<Tensor>& params, AdamState& state);

/// Scales gradients so their global L2 norm is at most max_norm; returns the norm before.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

// ---------------------------------------------------------------------------
// LSTM cell (gate order: input, forget, candidate, output).

struct LstmCellParams {
  Tensor w_x;   // [input, 4 hidden]
  Tensor w_h;   // [hidden, 4 hidden]
  Tensor bias;  // [4 hidden]
  int input{0};
  int hidden{0};
};

LstmCellParams declare_lstm(ParamSet& params, const std::string& prefix, int input, int hidden);

/// Returns (h, c) for batch-major x [B, input], h_prev/c_prev [B, hidden].
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmCellParams& p);

}  // namespace scalenav::tensor

#endif  // SCALENAV_TENSOR_HPP_
