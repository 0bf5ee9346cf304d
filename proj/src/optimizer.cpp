#include "bdann/optimizer.hpp"

#include <cmath>

#include "bdann/errors.hpp"

namespace bdann {

double OptimizerConfig::learning_rate_at(int epoch) const {
  if (epoch < 0) throw InvalidArgument("learning_rate_at: negative epoch");
  return initial_learning_rate * std::pow(decay_factor, epoch / decay_every_epochs);
}

void OptimizerConfig::validate() const {
  if (!(initial_learning_rate > 0.0)) throw ConfigError("optimizer.initial_learning_rate must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0))
    throw ConfigError("optimizer.decay_factor must lie in (0, 1]");
  if (decay_every_epochs <= 0) throw ConfigError("optimizer.decay_every_epochs must be > 0");
  if (!(l2_penalty >= 0.0)) throw ConfigError("optimizer.l2_penalty must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("optimizer betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("optimizer.adam_epsilon must be > 0");
}

Adam::Adam(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void Adam::step(std::span<const ParamRef> params, int epoch) {
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size())
      throw ShapeError("adam: gradient shape differs for " + p.name);
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.grad.size(); ++i)
      if (!std::isfinite(p.grad[i]))
        throw NumericError("adam: non-finite gradient at " + p.name + "[" + std::to_string(i) + "]");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter block count changed between steps");
  }

  ++t_;
  const double lr = cfg_.learning_rate_at(epoch);
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (!p.trainable) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != p.value.size()) throw ShapeError("adam: block size changed for " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (p.l2) g += 2.0 * cfg_.l2_penalty * p.value[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_epsilon);
    }
  }
}

std::vector<ParamRef> param_refs(NetworkState& net, const Gradients& grads,
                                 std::span<const bool> trainable_layers) {
  if (grads.weights.size() != net.layers.size())
    throw ShapeError("param_refs: gradient layer count mismatch");
  if (!trainable_layers.empty() && trainable_layers.size() != net.layers.size())
    throw ShapeError("param_refs: trainable mask must have one flag per layer");
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const bool trainable = trainable_layers.empty() || trainable_layers[l];
    const auto prefix = "layer" + std::to_string(l);
    refs.push_back({prefix + ".weight", net.layers[l].weights.data, grads.weights[l].data, true,
                    trainable});
    refs.push_back({prefix + ".bias", net.layers[l].bias, grads.bias[l], false, trainable});
  }
  return refs;
}

void Adam::step(NetworkState& net, const Gradients& grads, int epoch,
                std::span<const bool> trainable_layers) {
  const auto refs = param_refs(net, grads, trainable_layers);
  step(refs, epoch);
}

}  // namespace bdann
