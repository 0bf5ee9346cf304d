#include "bdann/hybrid.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bdann/errors.hpp"
#include "bdann/metrics.hpp"
#include "bdann/rng.hpp"
#include "bdann/serialize.hpp"

namespace bdann {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end != s.c_str() && *end == '\0';
}

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

}  // namespace

TabularSchema TabularSchema::chf() {
  TabularSchema s;
  s.inputs = {{"D", "mm", false},
              {"L", "m", false},
              {"P", "MPa", false},
              {"G", "kg/m2/s", false},
              {"dh_sub_in", "kJ/kg", true}};
  s.target = {"q_cr", "kW/m2", false};
  s.base_column = "base_pred";
  return s;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".manifest.json");
}

TabularManifest read_manifest(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  TabularManifest m;
  if (!j.contains("units") || !j["units"].is_object())
    throw DataError("manifest " + path.string() + ": missing 'units' object");
  for (const auto& [k, v] : j["units"].items()) m.units[k] = v.get<std::string>();
  if (j.contains("base_prediction") && j["base_prediction"].contains("provenance"))
    m.base_provenance = j["base_prediction"]["provenance"].get<std::string>();
  return m;
}

TabularDataset read_tabular_csv(const std::filesystem::path& path, const TabularSchema& schema,
                                const std::optional<TabularManifest>& manifest) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());

  std::vector<ColumnSpec> required = schema.inputs;
  required.push_back(schema.target);
  if (manifest) {
    for (const auto& c : required) {
      const auto it = manifest->units.find(c.name);
      if (it == manifest->units.end())
        throw DataError(path.string() + ": manifest declares no unit for column '" + c.name + "'");
      if (it->second != c.unit)
        throw DataError(path.string() + ": unit mismatch for column '" + c.name + "': expected " +
                        c.unit + ", manifest says " + it->second);
    }
  }

  std::string line;
  if (!std::getline(is, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  auto find = [&](const std::string& name) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  };
  std::vector<std::size_t> cols;
  for (const auto& c : required) {
    const auto k = find(c.name);
    if (k < 0) throw DataError(path.string() + ": missing column '" + c.name + "'");
    cols.push_back(static_cast<std::size_t>(k));
  }
  std::ptrdiff_t base_col = -1;
  if (schema.base_column) base_col = find(*schema.base_column);

  TabularDataset d;
  const std::size_t n_in = schema.inputs.size();
  std::vector<double> xs;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      d.rejected.push_back({lineno, "expected " + std::to_string(header.size()) + " fields, found " +
                                        std::to_string(cells.size())});
      continue;
    }
    std::vector<double> row(required.size());
    std::string problem;
    for (std::size_t c = 0; c < required.size() && problem.empty(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[cols[c]], v) || !std::isfinite(v))
        problem = "column '" + required[c].name + "' is not a finite number";
      else if (!required[c].allow_nonpositive && !(v > 0.0))
        problem = "column '" + required[c].name + "' must be positive";
      row[c] = v;
    }
    double base = kMissing;
    if (problem.empty() && base_col >= 0) {
      const auto& cell = cells[static_cast<std::size_t>(base_col)];
      if (!cell.empty() && (!parse_double(cell, base) || !std::isfinite(base)))
        problem = "column '" + *schema.base_column + "' is not a finite number";
    }
    if (!problem.empty()) {
      d.rejected.push_back({lineno, problem});
      continue;
    }
    xs.insert(xs.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n_in));
    d.y.push_back(row[n_in]);
    if (base_col >= 0) d.base.push_back(base);
    d.lines.push_back(lineno);
  }
  d.X = Matrix(d.y.size(), n_in);
  d.X.data = std::move(xs);
  return d;
}

void write_tabular_csv(const std::filesystem::path& path, const TabularSchema& schema,
                       const TabularDataset& data) {
  std::ostringstream os;
  for (const auto& c : schema.inputs) os << c.name << ',';
  os << schema.target.name;
  const bool with_base = schema.base_column && !data.base.empty();
  if (with_base) os << ',' << *schema.base_column;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < data.X.rows; ++i) {
    for (double v : data.X.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g,", v);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", data.y[i]);
    os << buf;
    if (with_base) {
      os << ',';
      if (!std::isnan(data.base[i])) {
        std::snprintf(buf, sizeof buf, "%.17g", data.base[i]);
        os << buf;
      }
    }
    os << '\n';
  }
  write_text(path, os.str());
}

TabularSplits split_tabular(const TabularDataset& data, std::uint64_t seed, Domain domain) {
  const std::size_t n = data.X.rows;
  if (n < 3) throw DataError("split_tabular: need at least 3 rows");
  const auto n_train = static_cast<std::size_t>(std::llround(0.80 * static_cast<double>(n)));
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(n))));
  if (n_train + n_val >= n) throw DataError("split_tabular: too few rows for an 80/5/15 split");
  Rng rng = make_rng(seed, 0);
  const auto perm = permutation(n, rng);
  auto part = [&](std::size_t from, std::size_t to, Partition p, Vector& base) {
    std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(from),
                                 perm.begin() + static_cast<std::ptrdiff_t>(to));
    if (!data.base.empty()) base = select(data.base, idx);
    return DataSplit(select_rows(data.X, idx), select(data.y, idx), domain, p, seed);
  };
  TabularSplits s;
  s.splits.train = part(0, n_train, Partition::train, s.base_train);
  s.splits.val = part(n_train, n_train + n_val, Partition::val, s.base_val);
  s.splits.test = part(n_train + n_val, n, Partition::test, s.base_test);
  s.rejected = data.rejected;
  return s;
}

TabularSplits ingest_csv(const std::filesystem::path& path, const TabularSchema& schema,
                         std::uint64_t seed, Domain domain) {
  const auto mp = manifest_path_for(path);
  if (!std::filesystem::exists(mp))
    throw DataError(path.string() + ": no unit manifest at " + mp.string());
  return split_tabular(read_tabular_csv(path, schema, read_manifest(mp)), seed, domain);
}

double FunctionBaseModel::predict_row(std::span<const double> x, double) const {
  const double v = fn_(x);
  if (!std::isfinite(v)) throw NumericError(tag_ + ": non-finite base prediction");
  return v;
}

double ColumnBaseModel::predict_row(std::span<const double>, double column) const {
  if (!std::isfinite(column)) throw DataError(tag_ + ": base-prediction cell is missing");
  return column;
}

ResidualSet residual_targets(const Matrix& X, std::span<const double> y, std::span<const double> column,
                             const BaseModel& base) {
  if (y.size() != X.rows) throw ShapeError("residual_targets: target length mismatch");
  if (!column.empty() && column.size() != X.rows)
    throw ShapeError("residual_targets: base column length mismatch");
  ResidualSet r;
  for (std::size_t i = 0; i < X.rows; ++i) {
    try {
      const double b = base.predict_row(X.row(i), column.empty() ? kMissing : column[i]);
      r.residual.push_back(y[i] - b);
      r.base.push_back(b);
      r.kept.push_back(i);
    } catch (const Error& e) {
      r.excluded.push_back({i + 1, e.what()});
    }
  }
  if (!r.excluded.empty())
    std::fprintf(stderr, "residual_targets: %zu row(s) excluded after base-model failures\n",
                 r.excluded.size());
  return r;
}

std::vector<PredictiveSummary> hybrid_predict(const Matrix& X, std::span<const double> column,
                                              const BaseModel& base, const HybridCorrector& corrector,
                                              int mc_samples, std::uint64_t mc_seed) {
  if (corrector.base_tag != base.tag())
    throw ConfigError("hybrid_predict: corrector was trained on base '" + corrector.base_tag +
                      "', not '" + base.tag() + "'");
  if (!column.empty() && column.size() != X.rows) throw ShapeError("hybrid_predict: base column length mismatch");
  auto out = corrector.model.predict(X, mc_samples, mc_seed);
  const double sd = corrector.residual_scaler.std;
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double b = base.predict_row(X.row(i), column.empty() ? kMissing : column[i]);
    auto& s = out[i];
    s.mean = b + corrector.residual_scaler.invert(s.mean);
    s.epistemic_std *= sd;
    s.aleatoric_std *= sd;
    s.total_std *= sd;
  }
  return out;
}

namespace {

struct ResidualDomain {
  DomainSplits splits;    // features raw, targets = raw residuals
  ResidualSet train, val, test;
  Vector test_truth;      // true targets of kept test rows
};

ResidualDomain residual_domain(const HybridDomain& d, const BaseModel& base) {
  ResidualDomain r;
  auto build = [&](const DataSplit& s, const Vector& col, ResidualSet& rs) {
    if (s.empty()) return DataSplit();
    rs = residual_targets(s.features(), s.targets(), col, base);
    return DataSplit(select_rows(s.features(), rs.kept), rs.residual, s.domain(), s.partition(), s.seed());
  };
  r.splits.train = build(d.splits.train, d.base_train, r.train);
  r.splits.val = build(d.splits.val, d.base_val, r.val);
  r.splits.test = build(d.splits.test, d.base_test, r.test);
  if (!d.splits.test.empty()) r.test_truth = select(d.splits.test.targets(), r.test.kept);
  return r;
}

DomainSplits rescale_targets(const DomainSplits& s, const ScalarScaler& sc) {
  auto f = [&](const DataSplit& d) { return d.empty() ? d : d.with_targets(sc.apply(d.targets())); };
  return {f(s.train), f(s.val), f(s.test)};
}

Vector concat(const Vector& a, const Vector& b) {
  Vector v = a;
  v.insert(v.end(), b.begin(), b.end());
  return v;
}

}  // namespace

std::vector<HybridCorrector> train_hybrid_correctors(const HybridDomain& source,
                                                     const HybridDomain& target, const BaseModel& base,
                                                     const PipelineConfig& cfg,
                                                     std::span<const Strategy> strategies,
                                                     std::uint64_t seed) {
  const auto rs = residual_domain(source, base);
  const auto rt = residual_domain(target, base);
  std::vector<HybridCorrector> out(strategies.size());

  std::vector<Strategy> tl;
  std::vector<std::size_t> tl_pos;
  for (std::size_t k = 0; k < strategies.size(); ++k) {
    if (strategies[k] == Strategy::from_scratch) {
      const auto sc = fit_scalar(rt.splits.train.targets());
      TransferData d{rescale_targets(rs.splits, sc), rescale_targets(rt.splits, sc)};
      const Strategy only[] = {Strategy::from_scratch};
      out[k] = {base.tag(), std::move(run_strategies(d, cfg, only, seed).front()), sc};
    } else {
      tl.push_back(strategies[k]);
      tl_pos.push_back(k);
    }
  }
  if (!tl.empty()) {
    const auto sc = fit_scalar(concat(rs.splits.train.targets(), rt.splits.train.targets()));
    TransferData d{rescale_targets(rs.splits, sc), rescale_targets(rt.splits, sc)};
    auto models = run_strategies(d, cfg, tl, seed);
    for (std::size_t i = 0; i < tl.size(); ++i) out[tl_pos[i]] = {base.tag(), std::move(models[i]), sc};
  }
  return out;
}

std::vector<EnsembleSummary> run_hybrid_ensemble(const HybridDomain& source, const HybridDomain& target,
                                                 const BaseModel& base, const PipelineConfig& cfg,
                                                 std::span<const Strategy> strategies,
                                                 const EnsembleOptions& opts, const CorrectorHook& hook) {
  cfg.validate();
  if (target.splits.test.empty()) throw InvalidArgument("run_hybrid_ensemble: target test split is empty");
  const auto& test = target.splits.test;
  const auto scored = residual_targets(test.features(), test.targets(), target.base_test, base);
  if (scored.kept.empty()) throw DataError("run_hybrid_ensemble: the base model failed on every test row");
  const Matrix X = select_rows(test.features(), scored.kept);
  const Vector truth = select(test.targets(), scored.kept);
  const Vector column = target.base_test.empty() ? Vector() : select(target.base_test, scored.kept);
  return run_ensemble(strategies, opts, [&](std::uint64_t seed) {
    const auto correctors = train_hybrid_correctors(source, target, base, cfg, strategies, seed);
    std::vector<std::vector<PredictiveSummary>> preds;
    std::vector<MetricsReport> reports;
    for (const auto& c : correctors) {
      preds.push_back(hybrid_predict(X, column, base, c, cfg.mc_samples, derive_seed(seed, 99)));
      Vector mean(preds.back().size());
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = preds.back()[i].mean;
      reports.push_back(error_metrics(truth, mean));
    }
    if (hook) hook(seed, correctors, truth, preds);
    return reports;
  });
}

FunctionBaseModel synthetic_base_model(const QuantileSigmoidScaler& scaler) {
  const auto p = DomainParams::source();
  return FunctionBaseModel("smooth_synthetic", [p, scaler](std::span<const double> x) {
    if (x.size() != kSyntheticDim) throw ShapeError("synthetic base model expects 5 inputs");
    const auto& a = p.a;
    const double raw = p.kappa * (a[0] + a[3] * std::log(1.0 + x[1] * x[1]) + a[4] * x[2] +
                                  a[5] * x[3] * x[3] + a[6] * x[4]);
    return scaler.apply(raw);
  });
}

}  // namespace bdann
