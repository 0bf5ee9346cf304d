#include "bdann/data.hpp"

#include "bdann/errors.hpp"

namespace bdann {

std::string_view to_string(Domain d) { return d == Domain::source ? "source" : "target"; }

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "train";
}

Domain parse_domain(std::string_view s) {
  if (s == "source" || s == "0") return Domain::source;
  if (s == "target" || s == "1") return Domain::target;
  throw DataError("unknown domain '" + std::string(s) + "'");
}

Partition parse_partition(std::string_view s) {
  if (s == "train") return Partition::train;
  if (s == "val") return Partition::val;
  if (s == "test") return Partition::test;
  throw DataError("unknown partition '" + std::string(s) + "'");
}

DataSplit::DataSplit(Matrix X, Vector y, Domain domain, Partition partition, std::uint64_t seed)
    : X_(std::move(X)), y_(std::move(y)), domain_(domain), partition_(partition), seed_(seed) {
  if (X_.rows != y_.size()) throw ShapeError("DataSplit: feature rows differ from target count");
}

const Matrix& DataSplit::features() const {
  reads_->fetch_add(1, std::memory_order_relaxed);
  return X_;
}

const Vector& DataSplit::targets() const {
  reads_->fetch_add(1, std::memory_order_relaxed);
  return y_;
}

DataSplit DataSplit::subset(std::span<const std::size_t> idx) const {
  return DataSplit(select_rows(X_, idx), select(y_, idx), domain_, partition_, seed_);
}

DataSplit DataSplit::with_features(Matrix X) const {
  if (X.rows != X_.rows) throw ShapeError("with_features: row count changed");
  DataSplit out = *this;
  out.X_ = std::move(X);
  return out;
}

DataSplit DataSplit::with_targets(Vector y) const {
  if (y.size() != X_.rows) throw ShapeError("with_targets: row count changed");
  DataSplit out = *this;
  out.y_ = std::move(y);
  return out;
}

}  // namespace bdann
