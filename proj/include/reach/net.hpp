#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace reach {

/// Batches are column-major: one column per sample.
using Matrix = Eigen::MatrixXd;

enum class Activation : std::uint8_t { Identity = 0, Tanh = 1, Relu = 2 };

/// Dense feed-forward network over a single flat parameter vector laid out
/// layer by layer as [W (d_out x d_in, row-major), b (d_out)].
class Mlp {
 public:
  /// Post-activation outputs of every layer; acts[0] is the input batch.
  struct Cache {
    std::vector<Matrix> acts;
  };

  struct Gradients {
    std::vector<double> params;
    std::vector<double> input;
  };

  Mlp() = default;
  Mlp(std::vector<int> layer_dims, std::vector<Activation> activations);

  /// Hidden layers share one activation; the last layer gets `output`.
  static Mlp make(std::vector<int> layer_dims, Activation hidden, Activation output);

  /// Weights uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
  void init_glorot(std::mt19937_64& rng);

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return acts_.size(); }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<int>& layer_dims() const { return dims_; }
  const std::vector<Activation>& activations() const { return acts_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::vector<double> forward(std::span<const double> x) const;
  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& cache) const;

  /// Adds d(sum(upstream .* output))/d(params) into `grads` and returns the
  /// gradient with respect to the input batch. Parameters are not touched.
  Matrix backward(const Cache& cache, const Matrix& upstream, std::span<double> grads) const;

  /// Single-sample convenience: recomputes the forward pass.
  Gradients backward(std::span<const double> x, std::span<const double> upstream) const;

 private:
  Matrix run(const Matrix& x, Cache* cache) const;

  std::vector<int> dims_;
  std::vector<Activation> acts_;
  std::vector<std::size_t> offsets_;  // start of each layer's W block
  std::vector<double> params_;
};

/// Bias-corrected adaptive-moment optimizer state.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step_count = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

/// Throws TrainingError when a gradient is non-finite; params stay untouched then.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// target <- (1 - tau) * target + tau * online.
void soft_update(std::span<double> target, std::span<const double> online, double tau);

/// Rescales grads in place so their L2 norm is at most max_norm; returns the
/// norm before clipping.
double clip_grad_norm(std::span<double> grads, double max_norm);

/// Binary checkpoint, all fields little-endian:
///   char[4] "RBNN", u32 schema (1), u32 n_dims, u32 dims[n_dims],
///   u8 activation[n_dims - 1], u64 param_count, f64 params[param_count].
void save_checkpoint(std::ostream& out, const Mlp& net);
Mlp load_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Mlp& net);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace reach
