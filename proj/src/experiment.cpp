#include "bdann/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "bdann/errors.hpp"
#include "bdann/losses.hpp"
#include "bdann/synthetic.hpp"

#ifndef BDANN_VERSION
#define BDANN_VERSION "0.0.0"
#endif

namespace bdann {

PipelineConfig benchmark_pipeline_defaults() {
  PipelineConfig c;
  c.arch = Architecture::defaults(kSyntheticDim);
  for (auto& a : c.arch.extractor.activations) a = Activation::tanh;
  for (std::size_t i = 0; i + 1 < c.arch.head.activations.size(); ++i) c.arch.head.activations[i] = Activation::tanh;
  c.beta.beta_max = 0.1;
  c.stage3.batch_size = 16;
  c.stage3.optimizer.initial_learning_rate = 3e-3;
  c.stage3.patience = 80;
  c.stage3.max_epochs = 1500;
  c.stage3_monitor = Stage3Monitor::predictive_mse;
  return c;
}

namespace {

// JSON object reader that tracks consumed keys so leftovers can be reported.
class Section {
 public:
  Section(const Json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const char* key) const { return j_ && j_->contains(key); }

  Section child(const char* key) {
    if (!has(key)) return Section(nullptr, field(key));
    used_.insert(key);
    return Section(&(*j_)[key], field(key));
  }

  const Json* raw(const char* key) {
    if (!has(key)) return nullptr;
    used_.insert(key);
    return &(*j_)[key];
  }

  void get(const char* key, double& out) {
    if (const auto* v = raw(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + " must be a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(field(key) + " must be finite");
    }
  }
  void get(const char* key, int& out) {
    if (const auto* v = raw(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, std::size_t& out) {
    if (const auto* v = raw(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0)
        throw ConfigError(field(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, bool& out) {
    if (const auto* v = raw(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const auto* v = raw(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (const auto* v = raw(key)) {
      if (!v->is_array()) throw ConfigError(field(key) + " must be an array of positive integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer() || e.get<std::int64_t>() < 1)
          throw ConfigError(field(key) + " must be an array of positive integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items())
      if (!used_.count(k)) throw ConfigError("unknown field " + field(k.c_str()));
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : path_; }

  // Wraps a conversion so its error names the field.
  template <class F>
  auto convert(const char* key, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const ConfigError& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

 private:
  const Json* j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_stage(Section s, StageConfig& c) {
  s.get("max_epochs", c.max_epochs);
  s.get("patience", c.patience);
  s.get("batch_size", c.batch_size);
  s.get("learning_rate", c.optimizer.initial_learning_rate);
  s.get("decay_factor", c.optimizer.decay_factor);
  s.get("decay_every_epochs", c.optimizer.decay_every_epochs);
  s.get("l2_penalty", c.optimizer.l2_penalty);
  s.get("adam_beta1", c.optimizer.adam_beta1);
  s.get("adam_beta2", c.optimizer.adam_beta2);
  s.get("adam_epsilon", c.optimizer.adam_epsilon);
  s.finish();
}

Json stage_json(const StageConfig& c) {
  return {{"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"learning_rate", c.optimizer.initial_learning_rate},
          {"decay_factor", c.optimizer.decay_factor},
          {"decay_every_epochs", c.optimizer.decay_every_epochs},
          {"l2_penalty", c.optimizer.l2_penalty},
          {"adam_beta1", c.optimizer.adam_beta1},
          {"adam_beta2", c.optimizer.adam_beta2},
          {"adam_epsilon", c.optimizer.adam_epsilon}};
}

std::vector<std::size_t> hidden_sizes(const NetworkSpec& s) {
  if (s.layer_sizes.size() < 2) return {};
  return {s.layer_sizes.begin() + 1, s.layer_sizes.end() - 1};
}

// The extractor has no output layer of its own: every width after the input counts.
std::vector<std::size_t> extractor_sizes(const NetworkSpec& s) {
  if (s.layer_sizes.empty()) return {};
  return {s.layer_sizes.begin() + 1, s.layer_sizes.end()};
}

Architecture build_architecture(std::size_t input_dim, const std::vector<std::size_t>& extractor,
                                const std::vector<std::size_t>& head, Activation act,
                                const std::vector<std::size_t>& classifier, double clf_dropout) {
  Architecture a;
  a.extractor.layer_sizes = {input_dim};
  a.extractor.layer_sizes.insert(a.extractor.layer_sizes.end(), extractor.begin(), extractor.end());
  a.extractor.activations.assign(extractor.size(), act);
  const std::size_t latent = a.latent_dim();
  a.head.layer_sizes = {latent};
  a.head.layer_sizes.insert(a.head.layer_sizes.end(), head.begin(), head.end());
  a.head.layer_sizes.push_back(1);
  a.head.activations.assign(head.size(), act);
  a.head.activations.push_back(Activation::identity);
  a.classifier.layer_sizes = {latent};
  a.classifier.layer_sizes.insert(a.classifier.layer_sizes.end(), classifier.begin(), classifier.end());
  a.classifier.layer_sizes.push_back(1);
  a.classifier.activations.assign(classifier.size(), Activation::relu);
  a.classifier.activations.push_back(Activation::sigmoid);
  if (clf_dropout > 0.0) {
    a.classifier.dropout_rates.assign(classifier.size(), clf_dropout);
    a.classifier.dropout_rates.push_back(0.0);
  }
  return a;
}

std::size_t dataset_dim(const DatasetConfig& d) {
  return d.kind == DatasetKind::synthetic ? kSyntheticDim : TabularSchema::chf().inputs.size();
}

std::string_view to_string(DatasetKind k) { return k == DatasetKind::synthetic ? "synthetic" : "tabular"; }

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

ExperimentConfig config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  Section root(&j, "");
  root.get("name", cfg.name);
  if (const auto* v = root.raw("strategies")) {
    if (!v->is_array() || v->empty()) throw ConfigError("strategies must be a nonempty array");
    cfg.strategies.clear();
    for (const auto& e : *v) {
      if (!e.is_string()) throw ConfigError("strategies must hold strategy names");
      cfg.strategies.push_back(root.convert("strategies", [&] { return parse_strategy(e.get<std::string>()); }));
    }
  }
  root.get("seed", cfg.seed);
  std::string out = cfg.output_dir.string();
  root.get("output_dir", out);
  cfg.output_dir = out;

  {
    auto d = root.child("dataset");
    std::string kind(to_string(cfg.dataset.kind));
    d.get("kind", kind);
    if (kind == "synthetic") cfg.dataset.kind = DatasetKind::synthetic;
    else if (kind == "tabular") cfg.dataset.kind = DatasetKind::tabular;
    else throw ConfigError("dataset.kind must be 'synthetic' or 'tabular'");
    d.get("seed", cfg.dataset.seed);
    d.get("ablation_size", cfg.dataset.ablation_size);
    d.get("identical_domains", cfg.dataset.identical_domains);
    std::string src, tgt;
    d.get("source_csv", src);
    d.get("target_csv", tgt);
    cfg.dataset.source_csv = resolve(src, base_dir);
    cfg.dataset.target_csv = resolve(tgt, base_dir);
    d.get("base_model", cfg.dataset.base_model);
    d.finish();
  }

  auto& p = cfg.pipeline;
  {
    auto a = root.child("architecture");
    auto ext = extractor_sizes(p.arch.extractor);
    auto head = hidden_sizes(p.arch.head);
    auto clf = hidden_sizes(p.arch.classifier);
    std::string act(to_string(p.arch.extractor.activations.front()));
    double clf_dropout = p.arch.classifier.dropout_rates.empty() ? 0.0 : p.arch.classifier.dropout_rates.front();
    a.get("extractor", ext);
    a.get("head", head);
    a.get("classifier", clf);
    a.get("activation", act);
    a.get("classifier_dropout", clf_dropout);
    a.finish();
    if (ext.empty()) throw ConfigError("architecture.extractor needs at least one layer");
    if (clf.empty()) throw ConfigError("architecture.classifier needs at least one layer");
    if (!(clf_dropout >= 0.0 && clf_dropout < 1.0)) throw ConfigError("architecture.classifier_dropout must lie in [0, 1)");
    const auto activation = a.convert("activation", [&] {
      try {
        return parse_activation(act);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    });
    p.arch = build_architecture(dataset_dim(cfg.dataset), ext, head, activation, clf, clf_dropout);
  }
  read_stage(root.child("stage1"), p.stage1);
  read_stage(root.child("stage2"), p.stage2);
  read_stage(root.child("stage3"), p.stage3);
  read_stage(root.child("baseline"), p.baseline);
  {
    auto l = root.child("lambda");
    l.get("lambda_max", p.lambda.lambda_max);
    l.get("lambda_min_fraction", p.lambda.lambda_min_fraction);
    l.get("ramp_k", p.lambda.ramp_k);
    l.get("warmup_epochs", p.lambda.warmup_epochs);
    l.finish();
  }
  {
    auto b = root.child("beta");
    b.get("beta_max", p.beta.beta_max);
    b.finish();
  }
  p.lambda.total_epochs = p.stage2.max_epochs;
  p.beta.total_epochs = p.stage3.max_epochs;
  root.get("posterior_init_std", p.posterior_init_std);
  root.get("stopping_gamma", p.stopping_gamma);
  std::string mode(to_string(p.transfer_mode));
  root.get("transfer_mode", mode);
  p.transfer_mode = root.convert("transfer_mode", [&] { return parse_transfer_mode(mode); });
  root.get("partial_layers", p.partial_layers);
  root.get("mc_samples", p.mc_samples);
  root.get("val_mc_samples", p.val_mc_samples);
  std::string monitor(to_string(p.stage3_monitor));
  root.get("stage3_monitor", monitor);
  p.stage3_monitor = root.convert("stage3_monitor", [&] { return parse_stage3_monitor(monitor); });
  {
    auto e = root.child("ensemble");
    e.get("n_runs", cfg.n_runs);
    e.get("base_seed", cfg.base_seed);
    e.finish();
  }
  {
    auto h = root.child("hpo");
    h.get("architecture_budget", cfg.hpo.architecture_budget);
    h.get("architecture_warm", cfg.hpo.architecture_warm);
    h.get("training_budget", cfg.hpo.training_budget);
    h.get("training_warm", cfg.hpo.training_warm);
    h.get("seed", cfg.hpo.seed);
    h.finish();
  }
  root.finish();

  if (cfg.n_runs < 2) throw ConfigError("ensemble.n_runs must be at least 2");
  if (cfg.dataset.kind == DatasetKind::synthetic) {
    if (cfg.dataset.ablation_size < 1 || cfg.dataset.ablation_size > 500)
      throw ConfigError("dataset.ablation_size must lie in [1, 500]");
  } else {
    for (const auto* f : {&cfg.dataset.source_csv, &cfg.dataset.target_csv}) {
      if (f->empty()) throw ConfigError("dataset.source_csv and dataset.target_csv are required for tabular data");
      if (!std::filesystem::exists(*f)) throw ConfigError("dataset: file not found: " + f->string());
    }
  }
  if (cfg.dataset.base_model != "column" && cfg.dataset.base_model != "smooth_synthetic")
    throw ConfigError("dataset.base_model must be 'column' or 'smooth_synthetic'");
  if (cfg.hpo.architecture_warm < 1 || cfg.hpo.architecture_budget < cfg.hpo.architecture_warm ||
      cfg.hpo.training_warm < 1 || cfg.hpo.training_budget < cfg.hpo.training_warm)
    throw ConfigError("hpo: need budget >= warm >= 1 for both phases");
  p.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

Json to_json(const ExperimentConfig& cfg) {
  const auto& p = cfg.pipeline;
  Json strategies = Json::array();
  for (auto s : cfg.strategies) strategies.push_back(std::string(to_string(s)));
  Json j;
  j["name"] = cfg.name;
  j["strategies"] = strategies;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.string();
  j["dataset"] = {{"kind", std::string(to_string(cfg.dataset.kind))},
                  {"seed", cfg.dataset.seed},
                  {"ablation_size", cfg.dataset.ablation_size},
                  {"identical_domains", cfg.dataset.identical_domains},
                  {"source_csv", cfg.dataset.source_csv.string()},
                  {"target_csv", cfg.dataset.target_csv.string()},
                  {"base_model", cfg.dataset.base_model}};
  j["architecture"] = {
      {"extractor", extractor_sizes(p.arch.extractor)},
      {"head", hidden_sizes(p.arch.head)},
      {"classifier", hidden_sizes(p.arch.classifier)},
      {"activation", std::string(to_string(p.arch.extractor.activations.front()))},
      {"classifier_dropout", p.arch.classifier.dropout_rates.empty() ? 0.0 : p.arch.classifier.dropout_rates.front()}};
  j["stage1"] = stage_json(p.stage1);
  j["stage2"] = stage_json(p.stage2);
  j["stage3"] = stage_json(p.stage3);
  j["baseline"] = stage_json(p.baseline);
  j["lambda"] = {{"lambda_max", p.lambda.lambda_max},
                 {"lambda_min_fraction", p.lambda.lambda_min_fraction},
                 {"ramp_k", p.lambda.ramp_k},
                 {"warmup_epochs", p.lambda.warmup_epochs}};
  j["beta"] = {{"beta_max", p.beta.beta_max}};
  j["posterior_init_std"] = p.posterior_init_std;
  j["stopping_gamma"] = p.stopping_gamma;
  j["transfer_mode"] = std::string(to_string(p.transfer_mode));
  j["partial_layers"] = p.partial_layers;
  j["mc_samples"] = p.mc_samples;
  j["val_mc_samples"] = p.val_mc_samples;
  j["stage3_monitor"] = std::string(to_string(p.stage3_monitor));
  j["ensemble"] = {{"n_runs", cfg.n_runs}, {"base_seed", cfg.base_seed}};
  j["hpo"] = {{"architecture_budget", cfg.hpo.architecture_budget},
              {"architecture_warm", cfg.hpo.architecture_warm},
              {"training_budget", cfg.hpo.training_budget},
              {"training_warm", cfg.hpo.training_warm},
              {"seed", cfg.hpo.seed}};
  return j;
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

namespace {

Benchmark benchmark_for(const ExperimentConfig& cfg) {
  BenchmarkOptions o;
  o.ablation_size = cfg.dataset.ablation_size;
  o.identical_domains = cfg.dataset.identical_domains;
  return make_benchmark(cfg.dataset.seed, o);
}

TabularSplits tabular_domain(const ExperimentConfig& cfg, Domain d) {
  const auto& path = d == Domain::source ? cfg.dataset.source_csv : cfg.dataset.target_csv;
  auto s = ingest_csv(path, TabularSchema::chf(), derive_seed(cfg.dataset.seed, d == Domain::source ? 1 : 2), d);
  for (const auto& r : s.rejected)
    std::fprintf(stderr, "%s:%zu: row rejected: %s\n", path.string().c_str(), r.line, r.message.c_str());
  return s;
}

void apply_overrides(ExperimentConfig& cfg, const CommandOptions& opts) {
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.ablation) {
    if (cfg.dataset.kind != DatasetKind::synthetic) throw ConfigError("--ablation applies to synthetic data only");
    if (*opts.ablation < 1 || *opts.ablation > 500) throw ConfigError("--ablation must lie in [1, 500]");
    cfg.dataset.ablation_size = *opts.ablation;
  }
}

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_run_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg, const std::string& command) {
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  Json m{{"command", command},
         {"name", cfg.name},
         {"config_hash", config_hash(cfg)},
         {"seed", cfg.seed},
         {"base_seed", cfg.base_seed},
         {"n_runs", cfg.n_runs},
         {"version", BDANN_VERSION},
         {"compiler", __VERSION__},
         {"json_library", "nlohmann/json " + std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  write_text(dir / "run.json", m.dump(2) + "\n");
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const double> y,
                           std::span<const PredictiveSummary> pred) {
  std::ostringstream os;
  os << "row,y_true,mean,epistemic_std,aleatoric_std,total_std\n";
  for (std::size_t i = 0; i < pred.size(); ++i)
    os << i << ',' << csv_num(y[i]) << ',' << csv_num(pred[i].mean) << ',' << csv_num(pred[i].epistemic_std) << ','
       << csv_num(pred[i].aleatoric_std) << ',' << csv_num(pred[i].total_std) << '\n';
  write_text(path, os.str());
}

void write_calibration(const std::filesystem::path& dir, std::span<const double> y,
                       std::span<const PredictiveSummary> pred) {
  Json all = Json::object();
  std::ostringstream curves;
  curves << "source,expected,observed\n";
  for (auto src : {UncertaintySource::epistemic, UncertaintySource::aleatoric, UncertaintySource::total}) {
    const auto c = calibration(y, pred, src);
    all[std::string(to_string(src))] = to_json(c);
    std::ostringstream one;
    one << "expected,observed\n";
    for (const auto& [e, o] : c.curve) {
      one << csv_num(e) << ',' << csv_num(o) << '\n';
      curves << to_string(src) << ',' << csv_num(e) << ',' << csv_num(o) << '\n';
    }
    write_text(dir / ("calibration_" + std::string(to_string(src)) + ".csv"), one.str());
  }
  write_text(dir / "calibration.json", all.dump(2) + "\n");
  write_text(dir / "calibration_curves.csv", curves.str());

  const auto r = rstd_distribution(pred);
  write_text(dir / "rstd.json", to_json(r).dump(2) + "\n");
  std::ostringstream hist;
  hist << "bin_low,bin_high,count\n";
  for (std::size_t b = 0; b < r.counts.size(); ++b)
    hist << csv_num(r.bin_edges[b]) << ',' << csv_num(r.bin_edges[b + 1]) << ',' << r.counts[b] << '\n';
  write_text(dir / "rstd_histogram.csv", hist.str());
}

Json model_report(const TrainedModel& m, const MetricsReport& test) {
  Json j;
  j["strategy"] = std::string(to_string(m.strategy));
  j["seed"] = m.seed;
  j["test"] = to_json(test);
  if (std::isfinite(m.final_val_auc)) j["stage2_final_val_auc"] = m.final_val_auc;
  Json stages = Json::array();
  for (const auto& h : m.history) stages.push_back(to_json(h));
  j["stages"] = std::move(stages);
  return j;
}

std::string summary_csv_single(const std::vector<std::pair<Strategy, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "strategy";
  for (auto n : metric_names()) os << ',' << n;
  os << '\n';
  for (const auto& [s, r] : rows) {
    os << to_string(s);
    for (std::size_t i = 0; i < metric_names().size(); ++i) os << ',' << csv_num(metric_value(r, i));
    os << '\n';
  }
  return os.str();
}

std::string runs_csv(const std::vector<EnsembleSummary>& s) {
  std::ostringstream os;
  os << "strategy,seed";
  for (auto n : metric_names()) os << ',' << n;
  os << '\n';
  for (const auto& e : s)
    for (const auto& r : e.runs) {
      os << to_string(e.strategy) << ',' << r.seed;
      for (std::size_t i = 0; i < metric_names().size(); ++i) os << ',' << csv_num(metric_value(r.report, i));
      os << '\n';
    }
  return os.str();
}

EnsembleOptions ensemble_options(const ExperimentConfig& cfg, const CommandOptions& opts) {
  EnsembleOptions e;
  e.n_runs = cfg.n_runs;
  e.base_seed = opts.seed ? *opts.seed : cfg.base_seed;
  e.workers = opts.workers;
  return e;
}

std::size_t write_ensemble_outputs(const std::filesystem::path& dir, const std::vector<EnsembleSummary>& s) {
  Json arr = Json::array();
  std::size_t failures = 0;
  for (const auto& e : s) {
    arr.push_back(to_json(e));
    failures += e.failures.size();
    for (const auto& f : e.failures) std::fprintf(stderr, "warning: %s\n", f.c_str());
  }
  write_text(dir / "summary.json", arr.dump(2) + "\n");
  write_text(dir / "summary.csv", summary_table_csv(s));
  write_text(dir / "runs.csv", runs_csv(s));
  return failures;
}

}  // namespace

TransferData load_transfer_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == DatasetKind::synthetic) return transfer_data(benchmark_for(cfg));
  return {tabular_domain(cfg, Domain::source).splits, tabular_domain(cfg, Domain::target).splits};
}

std::filesystem::path run_directory(const ExperimentConfig& cfg, const CommandOptions& opts) {
  if (!opts.out.empty()) return opts.out;
  if (const char* root = std::getenv("BDANN_OUTPUT_ROOT"); root && *root)
    return std::filesystem::path(root) / cfg.name;
  return cfg.output_dir / cfg.name;
}

std::string summary_table_csv(const std::vector<EnsembleSummary>& s) {
  std::ostringstream os;
  os << "strategy,n_runs";
  for (auto n : metric_names()) os << ',' << n << "_mean," << n << "_ci95";
  os << '\n';
  for (const auto& e : s) {
    os << to_string(e.strategy) << ',' << e.runs.size();
    for (const auto& m : e.metrics) os << ',' << csv_num(m.mean) << ',' << csv_num(m.ci_half_width);
    os << '\n';
  }
  return os.str();
}

std::filesystem::path cmd_generate(ExperimentConfig cfg, const CommandOptions& opts) {
  apply_overrides(cfg, opts);
  if (cfg.dataset.kind != DatasetKind::synthetic) throw ConfigError("generate: dataset.kind must be 'synthetic'");
  const auto dir = run_directory(cfg, opts);
  BenchmarkOptions full;
  full.identical_domains = cfg.dataset.identical_domains;
  full.ablation_size = full.target_pool;
  const auto b = make_benchmark(cfg.dataset.seed, full);
  const auto ab = benchmark_for(cfg);

  std::filesystem::create_directories(dir);
  const DataSplit* src[] = {&b.source.train, &b.source.val, &b.source.test};
  const DataSplit* tgt[] = {&b.target.train, &b.target.val, &b.target.test};
  const DataSplit* tgt_train[] = {&ab.target.train};
  write_split_csv(dir / "source.csv", src);
  write_split_csv(dir / "target.csv", tgt);
  write_split_csv(dir / "target_train.csv", tgt_train);

  const auto& sc = b.output_scaler;
  Json m{{"seed", cfg.dataset.seed},
         {"identical_domains", cfg.dataset.identical_domains},
         {"ablation_size", cfg.dataset.ablation_size},
         {"columns", {"x1", "x2", "x3", "x4", "x5", "y", "domain", "partition"}},
         {"files",
          {{"source.csv", {{"train", b.source.train.size()}, {"val", b.source.val.size()}, {"test", b.source.test.size()}}},
           {"target.csv", {{"train", b.target.train.size()}, {"val", b.target.val.size()}, {"test", b.target.test.size()}}},
           {"target_train.csv", {{"train", ab.target.train.size()}}}}},
         {"output_scaler", {{"q05", sc.q05}, {"q95", sc.q95}, {"center", sc.center}, {"alpha", sc.alpha}, {"delta", sc.delta}}}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  return dir;
}

std::filesystem::path cmd_train(ExperimentConfig cfg, const CommandOptions& opts) {
  apply_overrides(cfg, opts);
  const auto dir = run_directory(cfg, opts);
  const auto data = load_transfer_data(cfg);
  const auto models = run_strategies(data, cfg.pipeline, cfg.strategies, cfg.seed);
  write_run_manifest(dir, cfg, "train");

  std::vector<std::pair<Strategy, MetricsReport>> rows;
  const auto& test = data.target.test;
  for (const auto& m : models) {
    const auto sub = dir / std::string(to_string(m.strategy));
    const auto pred = m.predict(test.features(), cfg.pipeline.mc_samples, derive_seed(cfg.seed, 99));
    Vector mean(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) mean[i] = pred[i].mean;
    const auto report = error_metrics(test.targets(), mean);
    rows.emplace_back(m.strategy, report);

    save_model(sub / "model.txt", m);
    for (const auto& h : m.history) write_history_csv(sub / ("history_" + h.stage + ".csv"), h);
    auto j = model_report(m, report);
    // Source test error is reported after training; nothing during training touches it.
    if (m.strategy != Strategy::from_scratch && !data.source.test.empty())
      j["source_test"] = to_json(error_metrics(data.source.test.targets(), m.predict_mean(data.source.test.features())));
    write_text(sub / "metrics.json", j.dump(2) + "\n");
    write_predictions_csv(sub / "predictions.csv", test.targets(), pred);
    if (m.bayesian()) write_calibration(sub, test.targets(), pred);
  }
  write_text(dir / "summary.csv", summary_csv_single(rows));
  return dir;
}

std::filesystem::path cmd_ensemble(ExperimentConfig cfg, const CommandOptions& opts, std::size_t* failures) {
  apply_overrides(cfg, opts);
  const auto dir = run_directory(cfg, opts);
  const auto data = load_transfer_data(cfg);
  const auto eo = ensemble_options(cfg, opts);
  cfg.base_seed = eo.base_seed;
  const auto summaries = run_seed_ensemble(data, cfg.pipeline, cfg.strategies, eo);
  write_run_manifest(dir, cfg, "ensemble");
  const auto f = write_ensemble_outputs(dir, summaries);
  if (failures) *failures = f;
  return dir;
}

namespace {

struct LoadedEvaluation {
  TrainedModel model;
  DataSplit test;
  std::vector<PredictiveSummary> pred;
};

LoadedEvaluation evaluate_loaded(const ExperimentConfig& cfg, const CommandOptions& opts) {
  if (opts.model.empty()) throw ConfigError("a --model path is required");
  LoadedEvaluation e;
  e.model = load_model(opts.model);
  e.test = load_transfer_data(cfg).target.test;
  if (e.test.dim() != e.model.input_scaler.means.size())
    throw ConfigError("model expects " + std::to_string(e.model.input_scaler.means.size()) +
                      " inputs but the dataset has " + std::to_string(e.test.dim()));
  e.pred = e.model.predict(e.test.features(), cfg.pipeline.mc_samples, derive_seed(e.model.seed, 99));
  return e;
}

}  // namespace

MetricsReport cmd_evaluate(ExperimentConfig cfg, const CommandOptions& opts) {
  apply_overrides(cfg, opts);
  const auto e = evaluate_loaded(cfg, opts);
  Vector mean(e.pred.size());
  for (std::size_t i = 0; i < e.pred.size(); ++i) mean[i] = e.pred[i].mean;
  const auto report = error_metrics(e.test.targets(), mean);
  if (!opts.out.empty()) {
    write_text(opts.out / "evaluation.json", model_report(e.model, report).dump(2) + "\n");
    write_predictions_csv(opts.out / "predictions.csv", e.test.targets(), e.pred);
  }
  return report;
}

std::filesystem::path cmd_calibrate(ExperimentConfig cfg, const CommandOptions& opts) {
  apply_overrides(cfg, opts);
  const auto e = evaluate_loaded(cfg, opts);
  if (!e.model.bayesian()) throw ConfigError("calibrate: the model has no variational state");
  const auto dir = opts.out.empty() ? opts.model.parent_path() : opts.out;
  write_calibration(dir, e.test.targets(), e.pred);
  return dir;
}

std::filesystem::path cmd_hpo(ExperimentConfig cfg, const CommandOptions& opts) {
  apply_overrides(cfg, opts);
  const auto dir = run_directory(cfg, opts);
  const auto data = load_transfer_data(cfg);
  const std::size_t dim = data.source.train.dim();
  const auto arch_space = SearchSpace::architecture_defaults();
  const auto train_space = SearchSpace::classifier_defaults();

  StagedSearchOptions so;
  so.architecture = {cfg.hpo.architecture_budget, cfg.hpo.architecture_warm, opts.workers, 1, {}};
  so.training = {cfg.hpo.training_budget, cfg.hpo.training_warm, opts.workers, 1, {}};
  const auto base = cfg.pipeline;
  const auto result = staged_search(
      arch_space, train_space,
      [&](const Params& a, const Params& t, std::uint64_t seed) {
        PipelineConfig p = base;
        Params all = a;
        all.insert(t.begin(), t.end());
        apply_params(p, all, dim);
        return staged_validation_mse(data, p, seed);
      },
      cfg.hpo.seed, so);

  Params best = result.best_architecture;
  best.insert(result.best_training.begin(), result.best_training.end());
  ExperimentConfig tuned = cfg;
  apply_params(tuned.pipeline, best, dim);
  write_run_manifest(dir, cfg, "hpo");
  Json j{{"architecture_space", to_json(arch_space)},
         {"training_space", to_json(train_space)},
         {"architecture_search", to_json(result.architecture)},
         {"training_search", to_json(result.training)},
         {"best", to_json(best)}};
  write_text(dir / "hpo.json", j.dump(2) + "\n");
  write_text(dir / "best_config.json", to_json(tuned).dump(2) + "\n");
  return dir;
}

std::filesystem::path cmd_hybrid(ExperimentConfig cfg, const CommandOptions& opts, std::size_t* failures) {
  apply_overrides(cfg, opts);
  const auto dir = run_directory(cfg, opts);
  HybridDomain source, target;
  std::unique_ptr<BaseModel> base;
  if (cfg.dataset.kind == DatasetKind::synthetic) {
    if (cfg.dataset.base_model != "smooth_synthetic")
      throw ConfigError("dataset.base_model must be 'smooth_synthetic' for synthetic hybrid runs");
    const auto b = benchmark_for(cfg);
    source.splits = b.source;
    target.splits = b.target;
    base = std::make_unique<FunctionBaseModel>(synthetic_base_model(b.output_scaler));
  } else {
    if (cfg.dataset.base_model != "column")
      throw ConfigError("dataset.base_model must be 'column' for tabular hybrid runs");
    auto fill = [](const TabularSplits& t, HybridDomain& d) {
      d.splits = t.splits;
      d.base_train = t.base_train;
      d.base_val = t.base_val;
      d.base_test = t.base_test;
    };
    fill(tabular_domain(cfg, Domain::source), source);
    fill(tabular_domain(cfg, Domain::target), target);
    const auto manifest = read_manifest(manifest_path_for(cfg.dataset.target_csv));
    base = std::make_unique<ColumnBaseModel>(manifest.base_provenance.empty() ? "column" : manifest.base_provenance);
  }

  const auto eo = ensemble_options(cfg, opts);
  cfg.base_seed = eo.base_seed;
  const auto first = ensemble_seeds(eo).front();
  const auto summaries = run_hybrid_ensemble(
      source, target, *base, cfg.pipeline, cfg.strategies, eo,
      [&](std::uint64_t seed, const std::vector<HybridCorrector>& correctors, const Vector& truth,
          const std::vector<std::vector<PredictiveSummary>>& preds) {
        if (seed != first) return;
        for (std::size_t k = 0; k < correctors.size(); ++k)
          write_predictions_csv(dir / std::string(to_string(correctors[k].model.strategy)) / "predictions.csv", truth,
                                preds[k]);
      });
  write_run_manifest(dir, cfg, "hybrid");
  const auto f = write_ensemble_outputs(dir, summaries);
  if (failures) *failures = f;
  return dir;
}

}  // namespace bdann
