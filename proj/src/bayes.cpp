#include "bdann/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "bdann/errors.hpp"
#include "bdann/losses.hpp"

namespace bdann {

namespace {

template <typename Fn>
void for_each_block(const VariationalState& vs, Fn&& fn) {
  for (std::size_t l = 0; l < vs.layers.size(); ++l) {
    const auto& L = vs.layers[l];
    fn(l, true, L.weight_mean.data, L.weight_rho.data, L.weight_prior_mean.data,
       L.weight_prior_std.data);
    fn(l, false, L.bias_mean, L.bias_rho, L.bias_prior_mean, L.bias_prior_std);
  }
}

}  // namespace

std::size_t VariationalState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight_mean.size() + l.bias_mean.size();
  return n;
}

void VariationalState::validate() const {
  if (layers.empty()) throw InvalidArgument("variational state has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.weight_rho.size() != L.weight_mean.size() ||
        L.weight_prior_mean.size() != L.weight_mean.size() ||
        L.weight_prior_std.size() != L.weight_mean.size() ||
        L.bias_rho.size() != L.bias_mean.size() || L.bias_prior_mean.size() != L.bias_mean.size() ||
        L.bias_prior_std.size() != L.bias_mean.size() || L.bias_mean.size() != L.out())
      throw ShapeError("variational layer " + std::to_string(l) + " has inconsistent shapes");
    if (l > 0 && L.in() != layers[l - 1].out())
      throw ShapeError("variational layer " + std::to_string(l) + " input dim mismatch");
  }
  if (layers.back().out() != 2) throw ShapeError("variational output layer must emit (mean, variance)");
  for_each_block(*this, [](std::size_t l, bool is_w, const auto& mean, const auto& rho,
                           const auto& pm, const auto& ps) {
    for (std::size_t i = 0; i < mean.size(); ++i) {
      if (!std::isfinite(mean[i]) || !std::isfinite(rho[i]) || !std::isfinite(pm[i]))
        throw NumericError("layer" + std::to_string(l) + (is_w ? ".weight" : ".bias") + "[" +
                           std::to_string(i) + "] is not finite");
      if (!(ps[i] > 0.0) || !std::isfinite(ps[i]))
        throw InvalidArgument("prior std must be positive and finite");
    }
  });
}

NetworkState VariationalState::mean_network() const {
  NetworkState net;
  for (const auto& L : layers) {
    DenseLayer d;
    d.weights = L.weight_mean;
    d.bias = L.bias_mean;
    d.activation = L.activation;
    net.layers.push_back(std::move(d));
  }
  return net;
}

double beta_at(double progress, const BetaSchedule& sched) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return sched.beta_max * (2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0);
}

VariationalState init_from_deterministic(const NetworkState& det, double init_std,
                                         std::uint64_t seed) {
  if (!(init_std > 0.0)) throw InvalidArgument("init_std must be positive");
  if (det.layers.empty()) throw ShapeError("init_from_deterministic: empty network");
  if (det.output_dim() != 1)
    throw ShapeError("init_from_deterministic: deterministic network must have one output");
  det.check_finite();
  const double rho0 = softplus_inverse(init_std);
  VariationalState vs;
  for (std::size_t l = 0; l < det.layers.size(); ++l) {
    const auto& d = det.layers[l];
    const bool last = l + 1 == det.layers.size();
    const std::size_t out = last ? 2 : d.out();
    VariationalLayer v;
    v.activation = d.activation;
    v.weight_mean = Matrix(out, d.in());
    v.weight_rho = Matrix(out, d.in(), rho0);
    v.weight_prior_mean = Matrix(out, d.in());
    v.weight_prior_std = Matrix(out, d.in(), kTransferredPriorStd);
    v.bias_mean.assign(out, 0.0);
    v.bias_rho.assign(out, rho0);
    v.bias_prior_mean.assign(out, 0.0);
    v.bias_prior_std.assign(out, kTransferredPriorStd);
    for (std::size_t r = 0; r < d.out(); ++r) {
      for (std::size_t c = 0; c < d.in(); ++c) {
        v.weight_mean(r, c) = d.weights(r, c);
        v.weight_prior_mean(r, c) = d.weights(r, c);
      }
      v.bias_mean[r] = d.bias[r];
      v.bias_prior_mean[r] = d.bias[r];
    }
    if (last) {
      // Fresh variance row: fan-in uniform means, standard-normal prior.
      Rng rng(seed);
      const double limit = std::sqrt(3.0 / static_cast<double>(d.in()));
      for (std::size_t c = 0; c < d.in(); ++c) v.weight_mean(1, c) = uniform(rng, -limit, limit);
      v.activation = Activation::identity;
    }
    vs.layers.push_back(std::move(v));
  }
  return vs;
}

double kl_gaussian(double q_mean, double q_std, double p_mean, double p_std) {
  if (!(q_std > 0.0) || !(p_std > 0.0)) throw InvalidArgument("kl_gaussian: stds must be positive");
  const double d = q_mean - p_mean;
  return std::log(p_std / q_std) + (q_std * q_std + d * d) / (2.0 * p_std * p_std) - 0.5;
}

double kl_divergence(const VariationalState& vs) {
  double total = 0.0;
  for_each_block(vs, [&](std::size_t, bool, const auto& mean, const auto& rho, const auto& pm,
                         const auto& ps) {
    for (std::size_t i = 0; i < mean.size(); ++i)
      total += kl_gaussian(mean[i], softplus(rho[i]), pm[i], ps[i]);
  });
  return total;
}

VariationalGradients VariationalGradients::zeros_like(const VariationalState& vs) {
  VariationalGradients g;
  for (const auto& L : vs.layers) {
    g.weight_mean.emplace_back(L.weight_mean.rows, L.weight_mean.cols);
    g.weight_rho.emplace_back(L.weight_mean.rows, L.weight_mean.cols);
    g.bias_mean.emplace_back(L.bias_mean.size(), 0.0);
    g.bias_rho.emplace_back(L.bias_mean.size(), 0.0);
  }
  return g;
}

WeightNoise draw_noise(const VariationalState& vs, Rng& rng) {
  WeightNoise eps;
  for (const auto& L : vs.layers) {
    Matrix w(L.weight_mean.rows, L.weight_mean.cols);
    for (auto& x : w.data) x = standard_normal(rng);
    Vector b(L.bias_mean.size());
    for (auto& x : b) x = standard_normal(rng);
    eps.weights.push_back(std::move(w));
    eps.bias.push_back(std::move(b));
  }
  return eps;
}

NetworkState sample_network(const VariationalState& vs, const WeightNoise& eps) {
  if (eps.weights.size() != vs.layers.size()) throw ShapeError("sample_network: noise layer mismatch");
  NetworkState net;
  for (std::size_t l = 0; l < vs.layers.size(); ++l) {
    const auto& L = vs.layers[l];
    DenseLayer d;
    d.activation = L.activation;
    d.weights = Matrix(L.weight_mean.rows, L.weight_mean.cols);
    for (std::size_t i = 0; i < d.weights.size(); ++i)
      d.weights.data[i] = L.weight_mean.data[i] + softplus(L.weight_rho.data[i]) * eps.weights[l].data[i];
    d.bias.resize(L.bias_mean.size());
    for (std::size_t i = 0; i < d.bias.size(); ++i)
      d.bias[i] = L.bias_mean[i] + softplus(L.bias_rho[i]) * eps.bias[l][i];
    net.layers.push_back(std::move(d));
  }
  return net;
}

ElboResult elbo_loss_and_grad(const Matrix& X, std::span<const double> y,
                              const VariationalState& vs, double beta, Rng& rng,
                              double kl_denominator) {
  if (!(beta >= 0.0)) throw InvalidArgument("elbo: beta must be >= 0");
  if (X.rows == 0) throw InvalidArgument("elbo: empty batch");
  const double denom = kl_denominator > 0.0 ? kl_denominator : static_cast<double>(X.rows);
  const auto eps = draw_noise(vs, rng);
  const auto net = sample_network(vs, eps);
  const auto cache = forward_cached(net, X);
  const auto lg = loss_with_grad(Loss::gaussian_nll, cache.output, y);
  const auto bw = backward(net, cache, lg.output_grad);

  ElboResult res;
  res.nll = lg.value;
  res.kl = kl_divergence(vs);
  res.value = res.nll + beta / denom * res.kl;
  res.grads = VariationalGradients::zeros_like(vs);
  const double kw = beta / denom;
  for (std::size_t l = 0; l < vs.layers.size(); ++l) {
    const auto& L = vs.layers[l];
    auto fill = [kw](std::span<const double> g, std::span<const double> e,
                     std::span<const double> mean, std::span<const double> rho,
                     std::span<const double> pm, std::span<const double> ps,
                     std::span<double> gm, std::span<double> gr) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double sd = softplus(rho[i]);
        const double dsd = sigmoid(rho[i]);
        const double dkl_dm = (mean[i] - pm[i]) / (ps[i] * ps[i]);
        const double dkl_ds = -1.0 / sd + sd / (ps[i] * ps[i]);
        gm[i] = g[i] + kw * dkl_dm;
        gr[i] = (g[i] * e[i] + kw * dkl_ds) * dsd;
      }
    };
    fill(bw.grads.weights[l].data, eps.weights[l].data, L.weight_mean.data, L.weight_rho.data,
         L.weight_prior_mean.data, L.weight_prior_std.data, res.grads.weight_mean[l].data,
         res.grads.weight_rho[l].data);
    fill(bw.grads.bias[l], eps.bias[l], L.bias_mean, L.bias_rho, L.bias_prior_mean,
         L.bias_prior_std, res.grads.bias_mean[l], res.grads.bias_rho[l]);
  }
  return res;
}

double elbo_loss(const Matrix& X, std::span<const double> y, const VariationalState& vs,
                 double beta, Rng& rng) {
  return elbo_loss_and_grad(X, y, vs, beta, rng).value;
}

namespace {

struct SampleOutputs {
  Vector means;
  Vector variances;
};

SampleOutputs run_sample(const VariationalState& vs, const Matrix& X, std::uint64_t seed, int s) {
  Rng rng = make_rng(seed, static_cast<std::uint64_t>(s));
  const auto net = sample_network(vs, draw_noise(vs, rng));
  const auto out = forward(net, X);
  SampleOutputs so;
  so.means.resize(X.rows);
  so.variances.resize(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) {
    so.means[i] = out(i, 0);
    so.variances[i] = predicted_variance(out(i, 1));
  }
  return so;
}

std::vector<PredictiveSummary> summarize(const std::vector<SampleOutputs>& samples,
                                         std::size_t n_rows) {
  const auto S = samples.size();
  const double invS = 1.0 / static_cast<double>(S);
  std::vector<PredictiveSummary> res(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) {
    double msum = 0.0, vsum = 0.0;
    for (const auto& s : samples) {
      msum += s.means[i];
      vsum += s.variances[i];
    }
    const double mean = msum * invS;
    double dev = 0.0;
    for (const auto& s : samples) {
      const double d = s.means[i] - mean;
      dev += d * d;
    }
    auto& r = res[i];
    r.mean = mean;
    r.epistemic_std = std::sqrt(dev * invS);
    r.aleatoric_std = std::sqrt(vsum * invS);
    r.total_std = std::sqrt(r.epistemic_std * r.epistemic_std + r.aleatoric_std * r.aleatoric_std);
    r.n_samples = static_cast<int>(S);
  }
  return res;
}

void check_mc_args(const VariationalState& vs, const Matrix& X, int n_samples) {
  if (n_samples < 1) throw InvalidArgument("predict_mc: n_samples must be >= 1");
  if (X.cols != vs.input_dim()) throw ShapeError("predict_mc: input dimension mismatch");
}

}  // namespace

std::vector<PredictiveSummary> predict_mc_serial(const VariationalState& vs, const Matrix& X,
                                                 int n_samples, std::uint64_t seed) {
  check_mc_args(vs, X, n_samples);
  std::vector<SampleOutputs> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) samples.push_back(run_sample(vs, X, seed, s));
  return summarize(samples, X.rows);
}

std::vector<PredictiveSummary> predict_mc(const VariationalState& vs, const Matrix& X,
                                          int n_samples, std::uint64_t seed) {
  check_mc_args(vs, X, n_samples);
  std::vector<SampleOutputs> samples(static_cast<std::size_t>(n_samples));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < n_samples; ++s) {
    try {
      samples[static_cast<std::size_t>(s)] = run_sample(vs, X, seed, s);
    } catch (...) {
#pragma omp critical(bdann_mc_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return summarize(samples, X.rows);
}

PredictiveSummary predict_mc(const VariationalState& vs, std::span<const double> x, int n_samples,
                             std::uint64_t seed) {
  Matrix X(1, x.size());
  std::copy(x.begin(), x.end(), X.data.begin());
  return predict_mc(vs, X, n_samples, seed).front();
}

}  // namespace bdann
