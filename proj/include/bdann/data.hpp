#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bdann/matrix.hpp"

namespace bdann {

enum class Domain { source, target };
enum class Partition { train, val, test };

std::string_view to_string(Domain d);
std::string_view to_string(Partition p);
Domain parse_domain(std::string_view s);
Partition parse_partition(std::string_view s);

/// Features and targets of one partition of one domain. Reads through
/// features()/targets() are counted so callers can audit that a split was not
/// consulted during training; copies share the counter.
class DataSplit {
 public:
  DataSplit() = default;
  DataSplit(Matrix X, Vector y, Domain domain, Partition partition, std::uint64_t seed = 0);

  const Matrix& features() const;
  const Vector& targets() const;

  std::size_t size() const { return X_.rows; }
  std::size_t dim() const { return X_.cols; }
  bool empty() const { return X_.rows == 0; }
  Domain domain() const { return domain_; }
  Partition partition() const { return partition_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t reads() const { return reads_ ? reads_->load() : 0; }

  /// New split with the listed rows; gets a fresh read counter.
  DataSplit subset(std::span<const std::size_t> idx) const;
  /// Same rows, replaced features (e.g. after standardisation); shares the counter.
  DataSplit with_features(Matrix X) const;
  DataSplit with_targets(Vector y) const;

 private:
  Matrix X_;
  Vector y_;
  Domain domain_ = Domain::source;
  Partition partition_ = Partition::train;
  std::uint64_t seed_ = 0;
  std::shared_ptr<std::atomic<std::size_t>> reads_ = std::make_shared<std::atomic<std::size_t>>(0);
};

/// Train/val/test partitions of one domain.
struct DomainSplits {
  DataSplit train, val, test;
};

}  // namespace bdann
