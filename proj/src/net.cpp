#include "bdann/net.hpp"

#include <algorithm>
#include <cmath>

#include "bdann/errors.hpp"
#include "bdann/kernels.hpp"

namespace bdann {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid:
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      else {
        const double e = std::exp(z);
        return e / (1.0 + e);
      }
    case Activation::identity: return z;
  }
  return z;
}

double activate_derivative(Activation act, double z, double a) {
  switch (act) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - a * a;
    case Activation::sigmoid: return a * (1.0 - a);
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw InvalidArgument("network needs at least two layers");
  if (activations.size() != layer_sizes.size() - 1)
    throw InvalidArgument("activation count must equal layer count - 1");
  if (!dropout_rates.empty() && dropout_rates.size() != layer_sizes.size() - 1)
    throw InvalidArgument("dropout rate count must equal layer count - 1");
  for (auto n : layer_sizes)
    if (n == 0) throw InvalidArgument("layer sizes must be positive");
  for (auto r : dropout_rates)
    if (!(r >= 0.0 && r <= 0.5)) throw InvalidArgument("dropout rate outside [0, 0.5]");
}

NetworkState NetworkState::initialize(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  NetworkState net;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    DenseLayer layer;
    const auto fan_in = spec.layer_sizes[l];
    layer.weights = Matrix(spec.layer_sizes[l + 1], fan_in);
    layer.bias.assign(spec.layer_sizes[l + 1], 0.0);
    layer.activation = spec.activations[l];
    layer.dropout = spec.dropout_rates.empty() ? 0.0 : spec.dropout_rates[l];
    const double scale = layer.activation == Activation::relu ? 6.0 : 3.0;
    const double limit = std::sqrt(scale / static_cast<double>(fan_in));
    for (auto& w : layer.weights.data) w = uniform(rng, -limit, limit);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

NetworkSpec NetworkState::spec() const {
  NetworkSpec s;
  if (layers.empty()) return s;
  s.layer_sizes.push_back(layers.front().in());
  for (const auto& l : layers) {
    s.layer_sizes.push_back(l.out());
    s.activations.push_back(l.activation);
    s.dropout_rates.push_back(l.dropout);
  }
  return s;
}

std::size_t NetworkState::input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
std::size_t NetworkState::output_dim() const { return layers.empty() ? 0 : layers.back().out(); }

std::size_t NetworkState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

void NetworkState::check_finite() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& W = layers[l].weights;
    for (std::size_t r = 0; r < W.rows; ++r)
      for (std::size_t c = 0; c < W.cols; ++c)
        if (!std::isfinite(W(r, c)))
          throw NumericError("layer" + std::to_string(l) + ".weight[" + std::to_string(r) + "," +
                             std::to_string(c) + "] is not finite");
    for (std::size_t r = 0; r < layers[l].bias.size(); ++r)
      if (!std::isfinite(layers[l].bias[r]))
        throw NumericError("layer" + std::to_string(l) + ".bias[" + std::to_string(r) +
                           "] is not finite");
  }
}

NetworkState concat(const NetworkState& lower, const NetworkState& upper) {
  if (!lower.layers.empty() && !upper.layers.empty() && lower.output_dim() != upper.input_dim())
    throw ShapeError("concat: lower output dim differs from upper input dim");
  NetworkState out = lower;
  out.layers.insert(out.layers.end(), upper.layers.begin(), upper.layers.end());
  return out;
}

std::pair<NetworkState, NetworkState> split(const NetworkState& net, std::size_t n_lower) {
  if (n_lower > net.layers.size()) throw ShapeError("split: index exceeds layer count");
  NetworkState lower, upper;
  const auto mid = net.layers.begin() + static_cast<std::ptrdiff_t>(n_lower);
  lower.layers.assign(net.layers.begin(), mid);
  upper.layers.assign(mid, net.layers.end());
  return {std::move(lower), std::move(upper)};
}

Gradients Gradients::zeros_like(const NetworkState& net) {
  Gradients g;
  for (const auto& l : net.layers) {
    g.weights.emplace_back(l.weights.rows, l.weights.cols);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  return g;
}

void Gradients::scale(double s) {
  for (auto& w : weights)
    for (auto& x : w.data) x *= s;
  for (auto& b : bias)
    for (auto& x : b) x *= s;
}

void Gradients::add(const Gradients& other) {
  if (other.weights.size() != weights.size()) throw ShapeError("Gradients::add: layer mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (other.weights[l].size() != weights[l].size() || other.bias[l].size() != bias[l].size())
      throw ShapeError("Gradients::add: shape mismatch");
    for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l].data[i] += other.weights[l].data[i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
  }
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weights)
    for (double x : w.data) m = std::max(m, std::abs(x));
  for (const auto& b : bias)
    for (double x : b) m = std::max(m, std::abs(x));
  return m;
}

ForwardCache forward_cached(const NetworkState& net, const Matrix& X, bool train_mode, Rng* rng) {
  if (net.layers.empty()) throw ShapeError("forward: empty network");
  if (X.cols != net.input_dim())
    throw ShapeError("forward: input dimension " + std::to_string(X.cols) + " != " +
                     std::to_string(net.input_dim()));
  ForwardCache cache;
  const auto L = net.layers.size();
  cache.inputs.reserve(L);
  cache.pre.resize(L);
  cache.post.resize(L);
  cache.masks.resize(L);
  Matrix current = X;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = net.layers[l];
    cache.inputs.push_back(std::move(current));
    kernels::parallel::affine_forward(cache.inputs[l], layer.weights, layer.bias, cache.pre[l]);
    Matrix& A = cache.post[l];
    A = Matrix(cache.pre[l].rows, cache.pre[l].cols);
    for (std::size_t i = 0; i < A.size(); ++i) {
      A.data[i] = activate(layer.activation, cache.pre[l].data[i]);
      if (!std::isfinite(A.data[i]))
        throw NumericError("forward: non-finite activation in layer " + std::to_string(l));
    }
    current = A;
    const bool last = l + 1 == L;
    if (train_mode && !last && layer.dropout > 0.0) {
      if (rng == nullptr) throw InvalidArgument("forward: dropout requires an rng stream");
      const double keep = 1.0 - layer.dropout;
      Matrix& M = cache.masks[l];
      M = Matrix(A.rows, A.cols);
      for (std::size_t i = 0; i < M.size(); ++i) {
        M.data[i] = uniform(*rng, 0.0, 1.0) < keep ? 1.0 / keep : 0.0;
        current.data[i] *= M.data[i];
      }
    }
  }
  cache.output = current;
  return cache;
}

Matrix forward(const NetworkState& net, const Matrix& X, bool train_mode, Rng* rng) {
  return forward_cached(net, X, train_mode, rng).output;
}

Vector forward(const NetworkState& net, std::span<const double> x, bool train_mode, Rng* rng) {
  Matrix X(1, x.size());
  std::copy(x.begin(), x.end(), X.data.begin());
  return forward(net, X, train_mode, rng).data;
}

BackwardResult backward(const NetworkState& net, const ForwardCache& cache,
                        const Matrix& output_grad) {
  const auto L = net.layers.size();
  if (cache.pre.size() != L) throw ShapeError("backward: cache does not match network");
  if (output_grad.rows != cache.output.rows || output_grad.cols != cache.output.cols)
    throw ShapeError("backward: output gradient shape mismatch");
  BackwardResult res;
  res.grads = Gradients::zeros_like(net);
  Matrix upstream = output_grad;  // d loss / d (layer output after dropout)
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = net.layers[li];
    Matrix dZ = upstream;
    const Matrix& M = cache.masks[li];
    const Matrix& Z = cache.pre[li];
    const Matrix& A = cache.post[li];
    for (std::size_t i = 0; i < dZ.size(); ++i) {
      double g = dZ.data[i];
      if (!M.empty()) g *= M.data[i];
      dZ.data[i] = g * activate_derivative(layer.activation, Z.data[i], A.data[i]);
    }
    kernels::parallel::weight_grad(dZ, cache.inputs[li], res.grads.weights[li], res.grads.bias[li]);
    Matrix dIn(dZ.rows, layer.in());
    kernels::parallel::input_grad(dZ, layer.weights, dIn);
    upstream = std::move(dIn);
  }
  res.input_grad = std::move(upstream);
  return res;
}

}  // namespace bdann
