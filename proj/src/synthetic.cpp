#include "bdann/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bdann/errors.hpp"
#include "bdann/rng.hpp"

namespace bdann {

DomainParams DomainParams::source() {
  DomainParams p;
  p.a = {2.0, 5.0, 0.8, 1.0, -0.5, 0.4, -0.2, 0.6, 0.5, 0.3};
  p.omega = {2.0, 1.2, 1.8, 1.5, 2.2, 1.7};
  return p;
}

DomainParams DomainParams::target() {
  DomainParams p;
  p.a = {2.0, 5.0, 0.8, 1.0, -0.4, 0.35, -0.3, 0.6, 0.5, 0.3};
  p.omega = {2.2, 1.0, 2.0, 1.8, 2.0, 1.9};
  return p;
}

double base_function(std::span<const double> x, const DomainParams& p) {
  if (x.size() != kSyntheticDim) throw ShapeError("base_function expects a 5-vector");
  const auto& a = p.a;
  const auto& w = p.omega;
  const double x1 = x[0], x2 = x[1], x3 = x[2], x4 = x[3], x5 = x[4];
  const double s = a[0] + a[1] * std::sin(w[0] * x1 + w[1] * x2) + a[2] * std::cos(w[2] * x1 * x2) +
                   a[3] * std::log(1.0 + x2 * x2) + a[4] * x3 + a[5] * x4 * x4 + a[6] * x5 +
                   a[7] * std::sin(w[3] * x1 * x3) + a[8] * std::cos(w[4] * x3 * x4) +
                   a[9] * std::sin(w[5] * (x1 + x5) * x3);
  return p.kappa * s;
}

std::array<double, kSyntheticDim> target_warp(std::span<const double> x) {
  if (x.size() != kSyntheticDim) throw ShapeError("target_warp expects a 5-vector");
  return {1.2 * std::sin(1.3 * x[0]) + 1.5, x[1] + 0.4 * std::cos(1.5 * x[2]),
          x[2] + 0.3 * std::sin(0.8 * x[0] * x[1]), x[3], x[4]};
}

DataSplit generate_domain(std::size_t n, Domain domain, std::uint64_t seed,
                          const DomainParams& params) {
  if (n == 0) throw InvalidArgument("generate_domain: n must be >= 1");
  Rng rng(seed);
  Matrix X(n, kSyntheticDim);
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = X.row(i);
    for (auto& v : row) v = uniform(rng, kInputLow, kInputHigh);
    double clean;
    if (domain == Domain::source) {
      clean = base_function(row, params);
    } else {
      const auto g = target_warp(row);
      clean = base_function(g, params);
    }
    const double eps = standard_normal(rng);
    y[i] = clean + params.noise_std * eps;
  }
  return DataSplit(std::move(X), std::move(y), domain, Partition::train, seed);
}

DataSplit generate_domain(std::size_t n, Domain domain, std::uint64_t seed) {
  return generate_domain(n, domain, seed,
                         domain == Domain::source ? DomainParams::source() : DomainParams::target());
}

double empirical_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw InvalidArgument("empirical_quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("empirical_quantile: q outside [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

namespace {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double QuantileSigmoidScaler::apply(double y) const {
  if (y > q95) return apply(q95) + derivative(q95) * (y - q95);
  if (y < q05) return apply(q05) + derivative(q05) * (y - q05);
  return 1.0 + 4.0 * logistic(alpha * (y - center));
}

double QuantileSigmoidScaler::derivative(double y) const {
  const double yc = std::clamp(y, q05, q95);
  const double s = logistic(alpha * (yc - center));
  return 4.0 * alpha * s * (1.0 - s);
}

double QuantileSigmoidScaler::invert(double s) const {
  const double s_hi = apply(q95);
  const double s_lo = apply(q05);
  if (s > s_hi) return q95 + (s - s_hi) / derivative(q95);
  if (s < s_lo) return q05 + (s - s_lo) / derivative(q05);
  const double u = (s - 1.0) / 4.0;
  return center + std::log(u / (1.0 - u)) / alpha;
}

Vector QuantileSigmoidScaler::apply(std::span<const double> y) const {
  Vector out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), [this](double v) { return apply(v); });
  return out;
}

Vector QuantileSigmoidScaler::invert(std::span<const double> s) const {
  Vector out(s.size());
  std::transform(s.begin(), s.end(), out.begin(), [this](double v) { return invert(v); });
  return out;
}

QuantileSigmoidScaler fit_quantile_sigmoid(std::span<const double> y_all, double delta) {
  if (y_all.size() < 20) throw InvalidArgument("fit_quantile_sigmoid: need at least 20 values");
  if (!(delta > 0.0 && delta < 2.0)) throw InvalidArgument("fit_quantile_sigmoid: delta outside (0, 2)");
  QuantileSigmoidScaler sc;
  sc.q05 = empirical_quantile(y_all, 0.05);
  sc.q95 = empirical_quantile(y_all, 0.95);
  if (!(sc.q95 > sc.q05)) throw DataError("fit_quantile_sigmoid: degenerate spread (q05 == q95)");
  sc.delta = delta;
  sc.center = 0.5 * (sc.q05 + sc.q95);
  // 1 + 4 sigma(alpha (q95 - c)) = 5 - delta
  const double u = (4.0 - delta) / 4.0;
  sc.alpha = std::log(u / (1.0 - u)) / (sc.q95 - sc.center);
  return sc;
}

Matrix ZScoreScaler::apply(const Matrix& X) const {
  if (X.cols != means.size()) throw ShapeError("ZScoreScaler: feature count mismatch");
  Matrix Z = X;
  for (std::size_t i = 0; i < Z.rows; ++i)
    for (std::size_t j = 0; j < Z.cols; ++j) Z(i, j) = (X(i, j) - means[j]) / stds[j];
  return Z;
}

Matrix ZScoreScaler::invert(const Matrix& Z) const {
  if (Z.cols != means.size()) throw ShapeError("ZScoreScaler: feature count mismatch");
  Matrix X = Z;
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t j = 0; j < X.cols; ++j) X(i, j) = Z(i, j) * stds[j] + means[j];
  return X;
}

ZScoreScaler fit_zscore(const Matrix& X) {
  if (X.rows == 0) throw DataError("fit_zscore: no rows");
  ZScoreScaler sc;
  sc.means.assign(X.cols, 0.0);
  sc.stds.assign(X.cols, 0.0);
  const double n = static_cast<double>(X.rows);
  for (std::size_t j = 0; j < X.cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) s += X(i, j);
    const double m = s / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < X.rows; ++i) ss += (X(i, j) - m) * (X(i, j) - m);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0)) throw DataError("fit_zscore: feature column " + std::to_string(j) + " has zero variance");
    sc.means[j] = m;
    sc.stds[j] = sd;
  }
  return sc;
}

ZScoreScaler fit_zscore(const Matrix& target_train, const Matrix& source_train, ScalerPolicy policy) {
  if (policy == ScalerPolicy::target_only) return fit_zscore(target_train);
  return fit_zscore(vstack(source_train, target_train));
}

Vector ScalarScaler::apply(std::span<const double> v) const {
  Vector out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [this](double x) { return apply(x); });
  return out;
}

Vector ScalarScaler::invert(std::span<const double> z) const {
  Vector out(z.size());
  std::transform(z.begin(), z.end(), out.begin(), [this](double x) { return invert(x); });
  return out;
}

ScalarScaler fit_scalar(std::span<const double> v) {
  Matrix M(v.size(), 1);
  std::copy(v.begin(), v.end(), M.data.begin());
  const auto z = fit_zscore(M);
  return {z.means[0], z.stds[0]};
}

Benchmark make_benchmark(std::uint64_t seed, std::size_t ablation_size) {
  BenchmarkOptions opt;
  opt.ablation_size = ablation_size;
  return make_benchmark(seed, opt);
}

Benchmark make_benchmark(std::uint64_t seed, const BenchmarkOptions& opt) {
  if (opt.ablation_size == 0 || opt.ablation_size > opt.target_pool)
    throw InvalidArgument("make_benchmark: ablation size must lie in [1, " +
                          std::to_string(opt.target_pool) + "]");
  const std::size_t n_src = opt.source_train + opt.source_val + opt.source_test;
  const std::size_t n_tgt = opt.target_val + opt.target_test + opt.target_pool;

  const auto src_raw = generate_domain(n_src, Domain::source, derive_seed(seed, 1));
  const auto tgt_raw =
      opt.identical_domains
          ? generate_domain(n_tgt, Domain::source, derive_seed(seed, 2), DomainParams::source())
          : generate_domain(n_tgt, Domain::target, derive_seed(seed, 2));

  Vector all_y = src_raw.targets();
  const auto& ty = tgt_raw.targets();
  all_y.insert(all_y.end(), ty.begin(), ty.end());

  Benchmark bm;
  bm.seed = seed;
  bm.options = opt;
  bm.output_scaler = fit_quantile_sigmoid(all_y);

  auto scaled = [&](const DataSplit& raw, Domain d) {
    return DataSplit(raw.features(), bm.output_scaler.apply(raw.targets()), d, Partition::train, raw.seed());
  };
  const auto src = scaled(src_raw, Domain::source);
  const auto tgt = scaled(tgt_raw, Domain::target);

  auto range = [](std::size_t from, std::size_t count) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), from);
    return idx;
  };
  auto tag = [](const DataSplit& s, Partition p) {
    return DataSplit(s.features(), s.targets(), s.domain(), p, s.seed());
  };

  Rng shuffle_rng = make_rng(seed, 3);
  auto src_train_idx = range(0, opt.source_train);
  std::shuffle(src_train_idx.begin(), src_train_idx.end(), shuffle_rng);
  bm.source.train = tag(src.subset(src_train_idx), Partition::train);
  bm.source.val = tag(src.subset(range(opt.source_train, opt.source_val)), Partition::val);
  bm.source.test = tag(src.subset(range(opt.source_train + opt.source_val, opt.source_test)), Partition::test);

  bm.target.val = tag(tgt.subset(range(0, opt.target_val)), Partition::val);
  bm.target.test = tag(tgt.subset(range(opt.target_val, opt.target_test)), Partition::test);
  // One shuffle of the pool; every ablation size takes a prefix, so smaller
  // training sets are subsets of larger ones.
  auto pool = range(opt.target_val + opt.target_test, opt.target_pool);
  std::shuffle(pool.begin(), pool.end(), shuffle_rng);
  pool.resize(opt.ablation_size);
  bm.target.train = tag(tgt.subset(pool), Partition::train);
  return bm;
}

void write_split_csv(const std::filesystem::path& path, std::span<const DataSplit* const> splits) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "x1,x2,x3,x4,x5,y,domain,partition\n";
  char buf[64];
  for (const auto* s : splits) {
    const auto& X = s->features();
    const auto& y = s->targets();
    for (std::size_t i = 0; i < X.rows; ++i) {
      for (std::size_t j = 0; j < X.cols; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", X(i, j));
        out << buf << ',';
      }
      std::snprintf(buf, sizeof buf, "%.17g", y[i]);
      out << buf << ',' << to_string(s->domain()) << ',' << to_string(s->partition()) << '\n';
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

DataSplit read_split_csv(const std::filesystem::path& path, Domain domain, Partition partition) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  std::vector<double> xs, ys;
  std::size_t lineno = 1;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) throw DataError(path.string() + ":" + std::to_string(lineno) + ": too few columns");
    if (parse_domain(cells[cells.size() - 2]) != domain ||
        parse_partition(cells[cells.size() - 1]) != partition)
      continue;
    dim = cells.size() - 3;
    for (std::size_t j = 0; j < dim; ++j) xs.push_back(std::stod(cells[j]));
    ys.push_back(std::stod(cells[dim]));
  }
  Matrix X(ys.size(), dim);
  X.data = std::move(xs);
  return DataSplit(std::move(X), std::move(ys), domain, partition);
}

}  // namespace bdann
