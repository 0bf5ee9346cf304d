#include "bdann/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bdann/errors.hpp"

namespace bdann {

void LambdaSchedule::validate() const {
  // lambda_max = 0 is accepted as "alignment disabled".
  if (!(lambda_max >= 0.0 && lambda_max <= 2.0)) throw ConfigError("lambda_schedule.lambda_max outside [0, 2]");
  if (!(lambda_min_fraction >= 0.01 && lambda_min_fraction <= 0.2))
    throw ConfigError("lambda_schedule.lambda_min_fraction outside [0.01, 0.2]");
  if (!(ramp_k >= 5.0 && ramp_k <= 20.0)) throw ConfigError("lambda_schedule.ramp_k outside [5, 20]");
  if (warmup_epochs < 0 || warmup_epochs > 15) throw ConfigError("lambda_schedule.warmup_epochs outside [0, 15]");
  if (total_epochs <= 0) throw ConfigError("lambda_schedule.total_epochs must be positive");
}

double lambda_at(int epoch, const LambdaSchedule& sched) {
  if (epoch < sched.warmup_epochs) return 0.0;
  const double span = std::max(1, sched.total_epochs - sched.warmup_epochs);
  const double p = static_cast<double>(epoch - sched.warmup_epochs) / span;
  const double ramp = 2.0 / (1.0 + std::exp(-sched.ramp_k * p)) - 1.0;
  return sched.lambda_max * std::max(sched.lambda_min_fraction, ramp);
}

Matrix grl_backward(const Matrix& upstream_grad, double lambda) {
  Matrix out = upstream_grad;
  for (auto& g : out.data) g *= -lambda;
  return out;
}

Vector grl_backward(std::span<const double> upstream_grad, double lambda) {
  Vector out(upstream_grad.begin(), upstream_grad.end());
  for (auto& g : out) g *= -lambda;
  return out;
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (double l : labels) {
    if (l != 0.0 && l != 1.0) throw InvalidArgument("auc: labels must be 0 or 1");
    if (l == 1.0) ++n_pos;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InvalidArgument("auc: undefined with a single class");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positive class.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1.0) rank_sum += mid_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double early_stop_score(double auc_val, double bce_val, double gamma) {
  return std::abs(auc_val - 0.5) + gamma * std::max(0.0, std::numbers::ln2 - bce_val);
}

std::vector<BatchPlan> plan_balanced_epoch(std::size_t n_source, std::size_t n_target,
                                           std::size_t batch_size, Rng& rng) {
  if (n_source == 0 || n_target == 0) throw InvalidArgument("balanced_batches: empty split");
  if (batch_size < 2 || batch_size % 2 != 0)
    throw InvalidArgument("balanced_batches: batch_size must be a positive even integer");
  const std::size_t half = batch_size / 2;
  const std::size_t n_batches = (n_source + half - 1) / half;
  const std::size_t needed = n_batches * half;

  const auto src = permutation(n_source, rng);
  std::vector<std::size_t> tgt;
  if (n_target >= needed) {
    tgt = permutation(n_target, rng);
    tgt.resize(needed);
  } else {
    tgt.resize(needed);
    for (auto& t : tgt) t = uniform_index(rng, n_target);
  }

  std::vector<BatchPlan> plan(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    auto& p = plan[b];
    p.source_rows.reserve(half);
    p.target_rows.reserve(half);
    for (std::size_t k = 0; k < half; ++k) {
      p.source_rows.push_back(src[(b * half + k) % n_source]);
      p.target_rows.push_back(tgt[b * half + k]);
    }
  }
  return plan;
}

std::vector<DomainBatch> balanced_batches(const Matrix& source, const Matrix& target,
                                          std::size_t batch_size, Rng& rng) {
  if (source.cols != target.cols) throw ShapeError("balanced_batches: feature dims differ");
  const auto plan = plan_balanced_epoch(source.rows, target.rows, batch_size, rng);
  std::vector<DomainBatch> out;
  out.reserve(plan.size());
  for (const auto& p : plan) {
    DomainBatch b;
    b.features = vstack(select_rows(source, p.source_rows), select_rows(target, p.target_rows));
    b.labels.assign(p.source_rows.size(), 0.0);
    b.labels.insert(b.labels.end(), p.target_rows.size(), 1.0);
    b.source_rows = p.source_rows;
    b.target_rows = p.target_rows;
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<DomainBatch> balanced_batches(const DataSplit& source, const DataSplit& target,
                                          std::size_t batch_size, Rng& rng) {
  return balanced_batches(source.features(), target.features(), batch_size, rng);
}

}  // namespace bdann
