#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bdann/matrix.hpp"
#include "bdann/rng.hpp"

namespace bdann {

enum class Activation { relu, tanh, sigmoid, identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

double activate(Activation a, double z);
/// Derivative of the activation given pre-activation `z` and output `a`.
double activate_derivative(Activation act, double z, double a);

/// Layer topology of a dense feed-forward network.
struct NetworkSpec {
  std::vector<std::size_t> layer_sizes;  // input first, output last
  std::vector<Activation> activations;   // one per non-input layer
  std::vector<double> dropout_rates;     // one per non-input layer, or empty for none

  /// Throws InvalidArgument when the invariants do not hold.
  void validate() const;
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;
  double dropout = 0.0;  // fraction of this layer's outputs dropped in train mode

  std::size_t in() const { return weights.cols; }
  std::size_t out() const { return weights.rows; }
  bool operator==(const DenseLayer&) const = default;
};

struct NetworkState {
  std::vector<DenseLayer> layers;

  /// Scaled-uniform fan-in initialisation, b = 0. W ~ U(-l, l) with
  /// l = sqrt(6/fan_in) for relu layers and sqrt(3/fan_in) otherwise.
  static NetworkState initialize(const NetworkSpec& spec, std::uint64_t seed);

  NetworkSpec spec() const;
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  /// Throws NumericError naming the first non-finite parameter.
  void check_finite() const;

  bool operator==(const NetworkState&) const = default;
};

/// Stacks `upper` on top of `lower` (lower's output feeds upper's input).
NetworkState concat(const NetworkState& lower, const NetworkState& upper);
/// Splits after the first `n_lower` layers.
std::pair<NetworkState, NetworkState> split(const NetworkState& net, std::size_t n_lower);

/// Parameter-shaped container for derivatives.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;

  static Gradients zeros_like(const NetworkState& net);
  void scale(double s);
  void add(const Gradients& other);
  double max_abs() const;
};

/// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[l] enters layer l
  std::vector<Matrix> pre;     // pre-activations of layer l
  std::vector<Matrix> post;    // activations of layer l before dropout
  std::vector<Matrix> masks;   // inverted-dropout multipliers, empty when inactive
  Matrix output;
};

/// Batched forward pass; rows of X are samples. Dropout is active only when
/// `train_mode` is set, in which case `rng` must be non-null.
ForwardCache forward_cached(const NetworkState& net, const Matrix& X, bool train_mode = false,
                            Rng* rng = nullptr);
Matrix forward(const NetworkState& net, const Matrix& X, bool train_mode = false,
               Rng* rng = nullptr);
Vector forward(const NetworkState& net, std::span<const double> x, bool train_mode = false,
               Rng* rng = nullptr);

struct BackwardResult {
  Gradients grads;
  Matrix input_grad;  // d loss / d X
};

/// Reverse-mode sweep given d loss / d output for the cached batch.
BackwardResult backward(const NetworkState& net, const ForwardCache& cache,
                        const Matrix& output_grad);

}  // namespace bdann
