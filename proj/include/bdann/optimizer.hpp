#pragma once

#include <span>
#include <string>
#include <vector>

#include "bdann/matrix.hpp"
#include "bdann/net.hpp"

namespace bdann {

struct OptimizerConfig {
  double initial_learning_rate = 1e-3;
  double decay_factor = 0.96;
  int decay_every_epochs = 10;
  double l2_penalty = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Staircase exponential decay: lr0 * decay_factor^floor(epoch / decay_every_epochs).
  double learning_rate_at(int epoch) const;
  void validate() const;
};

/// One named parameter block handed to the optimizer.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
  bool l2 = false;        // add 2 * l2_penalty * value to the gradient
  bool trainable = true;  // frozen blocks keep value and moments untouched
};

/// Adam with bias correction. Moment buffers are keyed by block position, so
/// callers must present the same block list on every step.
class Adam {
 public:
  explicit Adam(OptimizerConfig cfg = {});

  /// Throws NumericError naming the parameter path when a gradient is not finite;
  /// in that case no parameter is modified.
  void step(std::span<const ParamRef> params, int epoch);

  /// Convenience for a deterministic network. `trainable_layers`, when non-empty,
  /// has one flag per layer. L2 applies to weight matrices only.
  void step(NetworkState& net, const Gradients& grads, int epoch,
            std::span<const bool> trainable_layers = {});

  long steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
  long t_ = 0;
};

/// Parameter blocks of `net` paired with `grads`, named "layer<i>.weight"/"layer<i>.bias".
std::vector<ParamRef> param_refs(NetworkState& net, const Gradients& grads,
                                 std::span<const bool> trainable_layers = {});

}  // namespace bdann
