#include "reach/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "reach/errors.hpp"

namespace reach {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using Weights = Eigen::Map<RowMajor>;
using ConstBias = Eigen::Map<const Eigen::VectorXd>;
using Bias = Eigen::Map<Eigen::VectorXd>;

void activate(Matrix& z, Activation a) {
  switch (a) {
    case Activation::Identity:
      break;
    case Activation::Tanh:
      z = z.array().tanh();
      break;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      break;
  }
}

// Derivative expressed through the activation's output y.
void scale_by_derivative(Matrix& delta, const Matrix& y, Activation a) {
  switch (a) {
    case Activation::Identity:
      break;
    case Activation::Tanh:
      delta.array() *= 1.0 - y.array().square();
      break;
    case Activation::Relu:
      delta.array() *= (y.array() > 0.0).cast<double>();
      break;
  }
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>(u & 0xffu);
    u = static_cast<decltype(u)>(u >> 8);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) u = static_cast<decltype(u)>((u << 8) | bytes[i]);
  return static_cast<T>(u);
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_dims, std::vector<Activation> activations)
    : dims_(std::move(layer_dims)), acts_(std::move(activations)) {
  if (dims_.size() < 2) throw UsageError("Mlp needs at least an input and an output width");
  if (acts_.size() != dims_.size() - 1) throw UsageError("Mlp needs one activation per layer");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    if (dims_[l] <= 0 || dims_[l + 1] <= 0) throw UsageError("Mlp layer widths must be positive");
    offsets_.push_back(total);
    total += static_cast<std::size_t>(dims_[l]) * dims_[l + 1] + dims_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::make(std::vector<int> layer_dims, Activation hidden, Activation output) {
  std::vector<Activation> acts(layer_dims.size() - 1, hidden);
  acts.back() = output;
  return Mlp(std::move(layer_dims), std::move(acts));
}

void Mlp::init_glorot(std::mt19937_64& rng) {
  for (std::size_t l = 0; l < acts_.size(); ++l) {
    const int din = dims_[l];
    const int dout = dims_[l + 1];
    const double bound = std::sqrt(6.0 / (din + dout));
    std::uniform_real_distribution<double> u(-bound, bound);
    double* w = params_.data() + offsets_[l];
    for (int i = 0; i < din * dout; ++i) w[i] = u(rng);
    std::fill(w + din * dout, w + din * dout + dout, 0.0);
  }
}

Matrix Mlp::run(const Matrix& x, Cache* cache) const {
  if (x.rows() != input_dim()) {
    throw UsageError("Mlp::forward: expected input of width " + std::to_string(input_dim()) +
                     ", got " + std::to_string(x.rows()));
  }
  if (cache) {
    cache->acts.resize(acts_.size() + 1);
    cache->acts[0] = x;
  }
  Matrix h = x;
  for (std::size_t l = 0; l < acts_.size(); ++l) {
    const int din = dims_[l];
    const int dout = dims_[l + 1];
    const double* p = params_.data() + offsets_[l];
    ConstWeights w(p, dout, din);
    ConstBias b(p + static_cast<std::size_t>(din) * dout, dout);
    Matrix z = w * h;
    z.colwise() += b;
    activate(z, acts_[l]);
    h = std::move(z);
    if (cache) cache->acts[l + 1] = h;
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x) const { return run(x, nullptr); }

Matrix Mlp::forward(const Matrix& x, Cache& cache) const { return run(x, &cache); }

std::vector<double> Mlp::forward(std::span<const double> x) const {
  const Matrix out = run(Eigen::Map<const Matrix>(x.data(), static_cast<Eigen::Index>(x.size()), 1), nullptr);
  return {out.data(), out.data() + out.size()};
}

Matrix Mlp::backward(const Cache& cache, const Matrix& upstream, std::span<double> grads) const {
  if (grads.size() != params_.size()) throw UsageError("Mlp::backward: gradient buffer size mismatch");
  if (cache.acts.size() != acts_.size() + 1) throw UsageError("Mlp::backward: cache does not match network");
  const Matrix& out = cache.acts.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw UsageError("Mlp::backward: upstream shape mismatch");
  }
  Matrix delta = upstream;
  for (std::size_t l = acts_.size(); l-- > 0;) {
    const int din = dims_[l];
    const int dout = dims_[l + 1];
    scale_by_derivative(delta, cache.acts[l + 1], acts_[l]);
    const std::size_t off = offsets_[l];
    Weights gw(grads.data() + off, dout, din);
    Bias gb(grads.data() + off + static_cast<std::size_t>(din) * dout, dout);
    // Reduce into aligned temporaries: Eigen's fused kernels order the sums by
    // the destination's alignment.
    const Matrix dw = delta * cache.acts[l].transpose();
    const Eigen::VectorXd db = delta.rowwise().sum();
    gw += dw;
    gb += db;
    ConstWeights w(params_.data() + off, dout, din);
    Matrix next = w.transpose() * delta;
    delta = std::move(next);
  }
  return delta;
}

Mlp::Gradients Mlp::backward(std::span<const double> x, std::span<const double> upstream) const {
  if (static_cast<int>(upstream.size()) != output_dim()) {
    throw UsageError("Mlp::backward: upstream width mismatch");
  }
  Cache cache;
  run(Eigen::Map<const Matrix>(x.data(), static_cast<Eigen::Index>(x.size()), 1), &cache);
  Gradients g;
  g.params.assign(params_.size(), 0.0);
  const Matrix dx = backward(
      cache, Eigen::Map<const Matrix>(upstream.data(), static_cast<Eigen::Index>(upstream.size()), 1),
      g.params);
  g.input.assign(dx.data(), dx.data() + dx.size());
  return g;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw UsageError("adam_step: length mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw TrainingError("adam_step: non-finite gradient");
  }
  ++s.step_count;
  const double t = static_cast<double>(s.step_count);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double m_hat = s.m[i] / c1;
    const double v_hat = s.v[i] / c2;
    params[i] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

void soft_update(std::span<double> target, std::span<const double> online, double tau) {
  if (target.size() != online.size()) throw UsageError("soft_update: length mismatch");
  if (!(tau > 0.0 && tau <= 1.0)) throw UsageError("soft_update: tau must lie in (0, 1]");
  if (tau == 1.0) {
    std::copy(online.begin(), online.end(), target.begin());
    return;
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = (1.0 - tau) * target[i] + tau * online[i];
  }
}

double clip_grad_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (double& g : grads) g *= scale;
  }
  return norm;
}

void save_checkpoint(std::ostream& out, const Mlp& net) {
  out.write("RBNN", 4);
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_dims().size()));
  for (int d : net.layer_dims()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (Activation a : net.activations()) put_le<std::uint8_t>(out, static_cast<std::uint8_t>(a));
  put_le<std::uint64_t>(out, net.param_count());
  for (double p : net.params()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p));
  if (!out) throw DataError("failed writing checkpoint");
}

Mlp load_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RBNN", 4) != 0) throw DataError("not a network checkpoint");
  const auto schema = get_le<std::uint32_t>(in);
  if (schema != 1) throw DataError("unsupported checkpoint schema " + std::to_string(schema));
  const auto n_dims = get_le<std::uint32_t>(in);
  if (n_dims < 2 || n_dims > 64) throw DataError("implausible layer count in checkpoint");
  std::vector<int> dims(n_dims);
  for (auto& d : dims) d = static_cast<int>(get_le<std::uint32_t>(in));
  std::vector<Activation> acts(n_dims - 1);
  for (auto& a : acts) {
    const auto tag = get_le<std::uint8_t>(in);
    if (tag > 2) throw DataError("unknown activation tag in checkpoint");
    a = static_cast<Activation>(tag);
  }
  Mlp net(dims, acts);
  const auto count = get_le<std::uint64_t>(in);
  if (count != net.param_count()) throw DataError("checkpoint parameter count mismatch");
  for (double& p : net.params()) p = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return net;
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  save_checkpoint(out, net);
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace reach
