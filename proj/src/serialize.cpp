#include "bdann/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bdann/errors.hpp"

namespace bdann {

namespace {

constexpr const char* kMagic = "bdann-model";
constexpr int kVersion = 1;

void write_values(std::ostream& os, std::span<const double> v, std::size_t per_line) {
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a", v[i]);
    os << buf << ((i + 1) % per_line == 0 || i + 1 == v.size() ? '\n' : ' ');
  }
  if (v.empty()) os << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string word(const char* what) {
    std::string w;
    if (!(is_ >> w)) fail(std::string("expected ") + what);
    return w;
  }
  void expect(const std::string& kw) {
    const auto w = word(kw.c_str());
    if (w != kw) fail("expected '" + kw + "', found '" + w + "'");
  }
  std::size_t size(const char* what) {
    const auto w = word(what);
    char* end = nullptr;
    const auto v = std::strtoull(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') fail(std::string("bad integer for ") + what + ": " + w);
    return static_cast<std::size_t>(v);
  }
  double real(const char* what) {
    const auto w = word(what);
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') fail(std::string("bad number for ") + what + ": " + w);
    return v;
  }
  void values(std::span<double> out, const char* what) {
    for (auto& v : out) v = real(what);
  }
  [[noreturn]] void fail(const std::string& msg) { throw DataError("model file: " + msg); }

 private:
  std::istream& is_;
};

Json nan_safe(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

void write_network(std::ostream& os, const std::string& name, const NetworkState& net) {
  os << "network " << name << ' ' << net.layers.size() << '\n';
  for (const auto& L : net.layers) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", L.dropout);
    os << "layer " << L.in() << ' ' << L.out() << ' ' << to_string(L.activation) << ' ' << buf << '\n';
    write_values(os, L.weights.data, L.in());
    write_values(os, L.bias, L.out());
  }
}

NetworkState read_network(std::istream& is, const std::string& name) {
  Reader r(is);
  r.expect("network");
  r.expect(name);
  const auto n = r.size("layer count");
  NetworkState net;
  for (std::size_t l = 0; l < n; ++l) {
    r.expect("layer");
    const auto in = r.size("layer input width");
    const auto out = r.size("layer output width");
    DenseLayer L;
    L.activation = parse_activation(r.word("activation"));
    L.dropout = r.real("dropout");
    L.weights = Matrix(out, in);
    L.bias.assign(out, 0.0);
    r.values(L.weights.data, "weight");
    r.values(L.bias, "bias");
    net.layers.push_back(std::move(L));
  }
  return net;
}

void write_variational(std::ostream& os, const VariationalState& vs) {
  os << "variational " << vs.layers.size() << '\n';
  for (const auto& L : vs.layers) {
    os << "vlayer " << L.in() << ' ' << L.out() << ' ' << to_string(L.activation) << '\n';
    for (const Matrix* m : {&L.weight_mean, &L.weight_rho, &L.weight_prior_mean, &L.weight_prior_std})
      write_values(os, m->data, L.in());
    for (const Vector* v : {&L.bias_mean, &L.bias_rho, &L.bias_prior_mean, &L.bias_prior_std})
      write_values(os, *v, L.out());
  }
}

VariationalState read_variational(std::istream& is) {
  Reader r(is);
  r.expect("variational");
  const auto n = r.size("layer count");
  VariationalState vs;
  for (std::size_t l = 0; l < n; ++l) {
    r.expect("vlayer");
    const auto in = r.size("layer input width");
    const auto out = r.size("layer output width");
    VariationalLayer L;
    L.activation = parse_activation(r.word("activation"));
    for (Matrix* m : {&L.weight_mean, &L.weight_rho, &L.weight_prior_mean, &L.weight_prior_std}) {
      *m = Matrix(out, in);
      r.values(m->data, "weight");
    }
    for (Vector* v : {&L.bias_mean, &L.bias_rho, &L.bias_prior_mean, &L.bias_prior_std}) {
      v->assign(out, 0.0);
      r.values(*v, "bias");
    }
    vs.layers.push_back(std::move(L));
  }
  vs.validate();
  return vs;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  std::ostringstream os;
  os << kMagic << ' ' << kVersion << '\n';
  os << "strategy " << to_string(model.strategy) << '\n';
  os << "seed " << model.seed << '\n';
  os << "scaler " << model.input_scaler.means.size() << '\n';
  write_values(os, model.input_scaler.means, model.input_scaler.means.size());
  write_values(os, model.input_scaler.stds, model.input_scaler.stds.size());
  write_network(os, "extractor", model.extractor);
  write_network(os, "head", model.head);
  if (model.classifier) write_network(os, "classifier", *model.classifier);
  if (model.variational) write_variational(os, *model.variational);
  os << "end\n";
  write_text(path, os.str());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open model file " + path.string());
  Reader r(is);
  r.expect(kMagic);
  if (r.size("version") != static_cast<std::size_t>(kVersion)) r.fail("unsupported version");
  TrainedModel m;
  r.expect("strategy");
  m.strategy = parse_strategy(r.word("strategy"));
  r.expect("seed");
  m.seed = std::strtoull(r.word("seed").c_str(), nullptr, 10);
  r.expect("scaler");
  const auto d = r.size("scaler width");
  m.input_scaler.means.assign(d, 0.0);
  m.input_scaler.stds.assign(d, 0.0);
  r.values(m.input_scaler.means, "scaler mean");
  r.values(m.input_scaler.stds, "scaler std");
  m.extractor = read_network(is, "extractor");
  m.head = read_network(is, "head");
  for (;;) {
    const auto pos = is.tellg();
    const auto kw = r.word("record");
    if (kw == "end") break;
    is.seekg(pos);
    if (kw == "network") {
      m.classifier = read_network(is, "classifier");
    } else if (kw == "variational") {
      m.variational = read_variational(is);
    } else {
      r.fail("unknown record '" + kw + "'");
    }
  }
  return m;
}

Json to_json(const MetricsReport& r) {
  Json j;
  for (std::size_t i = 0; i < metric_names().size(); ++i)
    j[std::string(metric_names()[i])] = metric_value(r, i);
  return j;
}

MetricsReport metrics_from_json(const Json& j) {
  MetricsReport r;
  for (std::size_t i = 0; i < metric_names().size(); ++i)
    set_metric_value(r, i, j.at(std::string(metric_names()[i])).get<double>());
  return r;
}

Json to_json(const CalibrationResult& c) {
  Json j;
  j["source"] = std::string(to_string(c.source));
  j["miscalibration_area"] = c.miscalibration_area;
  j["used"] = c.used;
  j["excluded"] = c.excluded;
  Json curve = Json::array();
  for (const auto& [level, frac] : c.curve) curve.push_back({{"expected", level}, {"observed", frac}});
  j["curve"] = std::move(curve);
  return j;
}

Json to_json(const RstdDistribution& d) {
  return {{"min", d.min},         {"max", d.max},           {"mean", d.mean},
          {"skewness", d.skewness}, {"bin_edges", d.bin_edges}, {"counts", d.counts},
          {"excluded", d.excluded}, {"n", d.values.size()}};
}

Json to_json(const StageHistory& h) {
  Json j;
  j["stage"] = h.stage;
  j["epochs_ran"] = h.epochs_ran;
  j["best_epoch"] = h.best_epoch;
  j["best_value"] = nan_safe(h.best_value);
  j["stopped_early"] = h.stopped_early;
  return j;
}

Json to_json(const EnsembleSummary& s) {
  Json j;
  j["strategy"] = std::string(to_string(s.strategy));
  j["n_runs"] = s.runs.size();
  j["failures"] = s.failures;
  Json metrics;
  for (std::size_t i = 0; i < metric_names().size(); ++i) {
    const auto& m = s.metrics[i];
    metrics[std::string(metric_names()[i])] = {{"mean", m.mean},
                                               {"std", m.std},
                                               {"ci95_half_width", m.ci_half_width},
                                               {"raw_1p96_std", m.raw_half_width}};
  }
  j["metrics"] = std::move(metrics);
  Json runs = Json::array();
  for (const auto& r : s.runs) runs.push_back({{"seed", r.seed}, {"metrics", to_json(r.report)}});
  j["runs"] = std::move(runs);
  return j;
}

Json to_json(const PredictiveSummary& s) {
  return {{"mean", s.mean},
          {"epistemic_std", s.epistemic_std},
          {"aleatoric_std", s.aleatoric_std},
          {"total_std", s.total_std},
          {"n_samples", s.n_samples}};
}

void write_history_csv(const std::filesystem::path& path, const StageHistory& h) {
  std::ostringstream os;
  os << "epoch,learning_rate,train_loss,val_loss,lambda,val_auc,val_bce,head_source_val_mse,beta,kl\n";
  char buf[512];
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch,
                  e.learning_rate, e.train_loss, e.val_loss, e.lambda, e.val_auc, e.val_bce,
                  e.head_source_val_mse, e.beta, e.kl);
    os << buf;
  }
  write_text(path, os.str());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
  if (!os) throw Error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace bdann
