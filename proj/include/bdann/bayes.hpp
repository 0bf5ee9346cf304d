#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bdann/matrix.hpp"
#include "bdann/net.hpp"
#include "bdann/rng.hpp"

namespace bdann {

/// Mean-field Gaussian posterior and prior for one dense layer. Posterior
/// standard deviations are softplus(rho).
struct VariationalLayer {
  Matrix weight_mean, weight_rho, weight_prior_mean, weight_prior_std;
  Vector bias_mean, bias_rho, bias_prior_mean, bias_prior_std;
  Activation activation = Activation::identity;

  std::size_t in() const { return weight_mean.cols; }
  std::size_t out() const { return weight_mean.rows; }
  bool operator==(const VariationalLayer&) const = default;
};

/// Variational network whose final layer emits (mean, raw variance).
struct VariationalState {
  std::vector<VariationalLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  std::size_t parameter_count() const;
  /// Throws NumericError on non-finite entries, InvalidArgument on non-positive prior stds.
  void validate() const;
  /// Network built from the posterior means.
  NetworkState mean_network() const;

  bool operator==(const VariationalState&) const = default;
};

/// Sigmoid-annealed KL weight.
struct BetaSchedule {
  double beta_max = 1.0;
  int total_epochs = 400;
};

/// beta(p) = beta_max * (2 / (1 + exp(-10 p)) - 1), p clamped to [0, 1].
double beta_at(double progress, const BetaSchedule& sched);

/// Monte-Carlo predictive summary for one input.
struct PredictiveSummary {
  double mean = 0.0;
  double epistemic_std = 0.0;
  double aleatoric_std = 0.0;
  double total_std = 0.0;
  int n_samples = 0;
};

inline constexpr double kDefaultPosteriorInitStd = 0.1;
inline constexpr double kTransferredPriorStd = 1.0;

/// Builds the variational network from a deterministic one whose last layer
/// has a single output. Posterior means copy the deterministic parameters,
/// posterior stds equal `init_std`, and priors are N(det, 1). The extra
/// variance row of the final layer has no deterministic counterpart: it is
/// freshly initialised from `seed` with a N(0, 1) prior.
VariationalState init_from_deterministic(const NetworkState& det, double init_std,
                                         std::uint64_t seed);

/// KL(N(qm, qs^2) || N(pm, ps^2)).
double kl_gaussian(double q_mean, double q_std, double p_mean, double p_std);
/// Sum of the element-wise KL over all parameters of the state.
double kl_divergence(const VariationalState& vs);

/// Derivatives with respect to posterior means and rho parameters.
struct VariationalGradients {
  std::vector<Matrix> weight_mean, weight_rho;
  std::vector<Vector> bias_mean, bias_rho;

  static VariationalGradients zeros_like(const VariationalState& vs);
};

/// Standard-normal draws used for one reparameterised weight sample.
struct WeightNoise {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

WeightNoise draw_noise(const VariationalState& vs, Rng& rng);
/// Deterministic network with w = mean + softplus(rho) * eps.
NetworkState sample_network(const VariationalState& vs, const WeightNoise& eps);

struct ElboResult {
  double value = 0.0;
  double nll = 0.0;
  double kl = 0.0;
  VariationalGradients grads;
};

/// Mean Gaussian NLL over the batch plus (beta / kl_denominator) * KL, using a
/// single reparameterised weight draw taken from `rng`. `kl_denominator` is the
/// number of target training samples; zero means "use the batch size".
ElboResult elbo_loss_and_grad(const Matrix& X, std::span<const double> y,
                              const VariationalState& vs, double beta, Rng& rng,
                              double kl_denominator = 0.0);

double elbo_loss(const Matrix& X, std::span<const double> y, const VariationalState& vs,
                 double beta, Rng& rng);

/// MC prediction for every row of X. Sample s uses the weight draw seeded by
/// derive_seed(seed, s), so results are independent of thread count.
std::vector<PredictiveSummary> predict_mc(const VariationalState& vs, const Matrix& X,
                                          int n_samples, std::uint64_t seed);
PredictiveSummary predict_mc(const VariationalState& vs, std::span<const double> x,
                             int n_samples, std::uint64_t seed);

/// Serial reference of predict_mc, kept for equivalence tests and benchmarks.
std::vector<PredictiveSummary> predict_mc_serial(const VariationalState& vs, const Matrix& X,
                                                 int n_samples, std::uint64_t seed);

}  // namespace bdann
