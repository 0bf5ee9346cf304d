#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bdann/data.hpp"
#include "bdann/matrix.hpp"
#include "bdann/rng.hpp"

namespace bdann {

/// Logistic ramp for the gradient-reversal weight.
struct LambdaSchedule {
  double lambda_max = 1.0;
  double lambda_min_fraction = 0.05;
  double ramp_k = 10.0;
  int warmup_epochs = 0;
  int total_epochs = 100;

  /// Throws ConfigError when a field falls outside its search range.
  void validate() const;
};

/// 0 before warmup, afterwards lambda_max * max(lambda_min_fraction, 2/(1+exp(-k p)) - 1)
/// with p = (e - warmup) / max(1, total - warmup).
double lambda_at(int epoch, const LambdaSchedule& sched);

/// Gradient reversal: identity forward, -lambda * upstream backward.
Matrix grl_backward(const Matrix& upstream_grad, double lambda);
Vector grl_backward(std::span<const double> upstream_grad, double lambda);

/// Rank-based (Mann-Whitney) AUC, ties counted half. Labels are 0/1.
/// Throws InvalidArgument when only one class is present.
double auc(std::span<const double> scores, std::span<const double> labels);

/// Composite stopping score |AUC - 0.5| + gamma * max(0, ln 2 - bce); lower is better.
double early_stop_score(double auc_val, double bce_val, double gamma = 0.5);

/// One class-balanced Stage-2 batch; labels are 0 (source) or 1 (target).
struct DomainBatch {
  Matrix features;
  Vector labels;
  std::vector<std::size_t> source_rows;  // indices into the source split
  std::vector<std::size_t> target_rows;  // indices into the target split

  std::size_t source_count() const { return source_rows.size(); }
  std::size_t target_count() const { return target_rows.size(); }
};

/// Index plan of one epoch: per batch, the source and target row indices.
struct BatchPlan {
  std::vector<std::size_t> source_rows;
  std::vector<std::size_t> target_rows;
};

/// Samples one epoch of balanced batch indices. Source rows are drawn without
/// replacement from a fresh shuffle; the final batch is topped up from the start
/// of the shuffle when the source count is not a multiple of batch_size / 2.
/// Target rows are drawn without replacement when enough exist for the epoch,
/// with replacement otherwise. Epoch length is ceil(n_source / (batch_size / 2)).
std::vector<BatchPlan> plan_balanced_epoch(std::size_t n_source, std::size_t n_target,
                                           std::size_t batch_size, Rng& rng);

/// Materialises plan_balanced_epoch over two feature matrices.
std::vector<DomainBatch> balanced_batches(const Matrix& source, const Matrix& target,
                                          std::size_t batch_size, Rng& rng);
std::vector<DomainBatch> balanced_batches(const DataSplit& source, const DataSplit& target,
                                          std::size_t batch_size, Rng& rng);

}  // namespace bdann
