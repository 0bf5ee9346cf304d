#include "bdann/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <omp.h>

#include "bdann/errors.hpp"
#include "bdann/losses.hpp"

namespace bdann {

std::string_view to_string(DimKind k) {
  switch (k) {
    case DimKind::integer: return "int";
    case DimKind::real: return "real";
    case DimKind::log_real: return "log_real";
    case DimKind::categorical: return "categorical";
  }
  return "real";
}

DimKind parse_dim_kind(std::string_view s) {
  if (s == "int") return DimKind::integer;
  if (s == "real") return DimKind::real;
  if (s == "log_real") return DimKind::log_real;
  if (s == "categorical") return DimKind::categorical;
  throw ConfigError("unknown dimension kind '" + std::string(s) + "'");
}

std::string_view to_string(TrialStatus s) { return s == TrialStatus::completed ? "completed" : "failed"; }

namespace {

const ParamValue& lookup(const Params& p, const std::string& name) {
  const auto it = p.find(name);
  if (it == p.end()) throw ConfigError("parameter '" + name + "' is not set");
  return it->second;
}

double unit_of(const Dimension& d, double v) {
  if (d.hi == d.lo) return 0.5;
  if (d.kind == DimKind::log_real) return (std::log(v) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo));
  return (v - d.lo) / (d.hi - d.lo);
}

ParamValue from_unit(const Dimension& d, double u) {
  u = std::clamp(u, 0.0, 1.0);
  switch (d.kind) {
    case DimKind::integer:
      return static_cast<std::int64_t>(std::llround(d.lo + u * (d.hi - d.lo)));
    case DimKind::log_real:
      return std::clamp(std::exp(std::log(d.lo) + u * (std::log(d.hi) - std::log(d.lo))), d.lo, d.hi);
    default:
      return std::clamp(d.lo + u * (d.hi - d.lo), d.lo, d.hi);
  }
}

}  // namespace

std::int64_t param_int(const Params& p, const std::string& name) {
  const auto& v = lookup(p, name);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw ConfigError("parameter '" + name + "' is not an integer");
}

double param_real(const Params& p, const std::string& name) {
  const auto& v = lookup(p, name);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw ConfigError("parameter '" + name + "' is not numeric");
}

const std::string& param_str(const Params& p, const std::string& name) {
  const auto& v = lookup(p, name);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw ConfigError("parameter '" + name + "' is not a string");
}

SearchSpace& SearchSpace::add_int(std::string name, std::int64_t lo, std::int64_t hi) {
  dims_.push_back({std::move(name), DimKind::integer, static_cast<double>(lo), static_cast<double>(hi), {}});
  return *this;
}

SearchSpace& SearchSpace::add_real(std::string name, double lo, double hi) {
  dims_.push_back({std::move(name), DimKind::real, lo, hi, {}});
  return *this;
}

SearchSpace& SearchSpace::add_log_real(std::string name, double lo, double hi) {
  dims_.push_back({std::move(name), DimKind::log_real, lo, hi, {}});
  return *this;
}

SearchSpace& SearchSpace::add_categorical(std::string name, std::vector<std::string> choices) {
  dims_.push_back({std::move(name), DimKind::categorical, 0.0, 0.0, std::move(choices)});
  return *this;
}

void SearchSpace::validate() const {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    const std::string where = "search space dimension '" + d.name + "'";
    for (std::size_t j = 0; j < i; ++j)
      if (dims_[j].name == d.name) throw ConfigError(where + " is declared twice");
    if (d.kind == DimKind::categorical) {
      if (d.choices.empty()) throw ConfigError(where + ": no choices");
      continue;
    }
    if (!std::isfinite(d.lo) || !std::isfinite(d.hi) || d.lo > d.hi)
      throw ConfigError(where + ": bounds must be finite and ordered");
    if (d.kind == DimKind::log_real && d.lo <= 0.0) throw ConfigError(where + ": log range must be positive");
    if (d.kind == DimKind::integer && (d.lo != std::floor(d.lo) || d.hi != std::floor(d.hi)))
      throw ConfigError(where + ": integer bounds must be integral");
  }
}

Params SearchSpace::sample(Rng& rng) const {
  Params p;
  for (const auto& d : dims_) {
    switch (d.kind) {
      case DimKind::integer: {
        const auto span = static_cast<std::size_t>(d.hi - d.lo) + 1;
        p[d.name] = static_cast<std::int64_t>(d.lo) + static_cast<std::int64_t>(uniform_index(rng, span));
        break;
      }
      case DimKind::real: p[d.name] = uniform(rng, d.lo, d.hi); break;
      case DimKind::log_real:
        p[d.name] = std::clamp(std::exp(uniform(rng, std::log(d.lo), std::log(d.hi))), d.lo, d.hi);
        break;
      case DimKind::categorical: p[d.name] = d.choices[uniform_index(rng, d.choices.size())]; break;
    }
  }
  return p;
}

Params SearchSpace::perturb(const Params& base, double scale, Rng& rng) const {
  Params p;
  for (const auto& d : dims_) {
    if (d.kind == DimKind::categorical) {
      const auto& cur = param_str(base, d.name);
      if (d.choices.size() > 1 && uniform(rng, 0.0, 1.0) < scale) {
        std::vector<std::string> others;
        for (const auto& c : d.choices)
          if (c != cur) others.push_back(c);
        p[d.name] = others[uniform_index(rng, others.size())];
      } else {
        p[d.name] = cur;
      }
      continue;
    }
    const double u = unit_of(d, param_real(base, d.name)) + scale * standard_normal(rng);
    p[d.name] = from_unit(d, u);
  }
  return p;
}

Params SearchSpace::midpoint() const {
  Params p;
  for (const auto& d : dims_)
    p[d.name] = d.kind == DimKind::categorical ? ParamValue(d.choices.front()) : from_unit(d, 0.5);
  return p;
}

bool SearchSpace::contains(const Params& p) const {
  for (const auto& d : dims_) {
    const auto it = p.find(d.name);
    if (it == p.end()) return false;
    const auto& v = it->second;
    switch (d.kind) {
      case DimKind::integer: {
        const auto* i = std::get_if<std::int64_t>(&v);
        if (!i || static_cast<double>(*i) < d.lo || static_cast<double>(*i) > d.hi) return false;
        break;
      }
      case DimKind::real:
      case DimKind::log_real: {
        const auto* x = std::get_if<double>(&v);
        if (!x || !(*x >= d.lo && *x <= d.hi)) return false;
        break;
      }
      case DimKind::categorical: {
        const auto* s = std::get_if<std::string>(&v);
        if (!s || std::find(d.choices.begin(), d.choices.end(), *s) == d.choices.end()) return false;
        break;
      }
    }
  }
  return true;
}

SearchSpace SearchSpace::classifier_defaults() {
  SearchSpace s;
  s.add_int("classifier_layers", 1, 4)
      .add_int("classifier_neurons", 32, 256)
      .add_real("classifier_dropout", 0.0, 0.5)
      .add_log_real("learning_rate", 1e-5, 1e-4)
      .add_real("lambda_max", 0.1, 2.0)
      .add_real("lambda_min_fraction", 0.01, 0.2)
      .add_real("ramp_k", 5.0, 20.0)
      .add_log_real("l2_penalty", 1e-7, 1e-3)
      .add_int("warmup_epochs", 0, 15);
  return s;
}

SearchSpace SearchSpace::architecture_defaults() {
  SearchSpace s;
  s.add_int("extractor_layers", 2, 4)
      .add_int("extractor_width", 16, 128)
      .add_int("head_width", 16, 128)
      .add_categorical("activation", {"relu", "tanh"})
      .add_real("beta_max", 0.1, 2.0);
  return s;
}

std::vector<double> SearchResult::running_best() const {
  std::vector<double> out;
  double best_so_far = std::numeric_limits<double>::infinity();
  for (const auto& t : trials) {
    if (t.status == TrialStatus::completed) best_so_far = std::min(best_so_far, t.objective);
    out.push_back(best_so_far);
  }
  return out;
}

Sampler local_perturbation_sampler(double initial_scale, double final_scale) {
  return [=](const SearchSpace& space, const std::vector<Trial>& history, std::size_t remaining, Rng& rng) {
    const Trial* best = nullptr;
    for (const auto& t : history)
      if (t.status == TrialStatus::completed && (!best || t.objective < best->objective)) best = &t;
    if (!best) return space.sample(rng);
    const double frac = static_cast<double>(remaining) / static_cast<double>(remaining + history.size());
    return space.perturb(best->params, final_scale + (initial_scale - final_scale) * frac, rng);
  };
}

namespace {

constexpr std::uint64_t kTrialSeedStream = 1000;
constexpr std::uint64_t kProposalStream = 100000;

void evaluate_trials(std::vector<Trial>& trials, std::size_t from, const Objective& objective, int workers) {
  const auto n = static_cast<std::ptrdiff_t>(trials.size() - from);
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    auto& t = trials[from + static_cast<std::size_t>(k)];
    try {
      const double v = objective(t.params, t.seed);
      if (std::isfinite(v)) {
        t.objective = v;
        t.status = TrialStatus::completed;
      } else {
        t.error = "non-finite objective";
      }
    } catch (const std::exception& e) {
      t.error = e.what();
    }
  }
}

}  // namespace

SearchResult run_search(const SearchSpace& space, const Objective& objective, std::uint64_t seed,
                        const SearchOptions& opts) {
  space.validate();
  if (opts.warm_random < 1 || opts.budget < opts.warm_random)
    throw ConfigError("search: need budget >= warm_random >= 1");
  if (opts.round_size < 1) throw ConfigError("search: round_size must be at least 1");
  const Sampler sampler = opts.sampler ? opts.sampler : local_perturbation_sampler();

  SearchResult r;
  auto add = [&](Params p) {
    Trial t;
    t.index = r.trials.size();
    t.params = std::move(p);
    t.seed = derive_seed(seed, kTrialSeedStream + t.index);
    r.trials.push_back(std::move(t));
  };

  Rng warm = make_rng(seed, 1);
  for (std::size_t k = 0; k < opts.warm_random; ++k) add(space.sample(warm));
  evaluate_trials(r.trials, 0, objective, opts.workers);

  while (r.trials.size() < opts.budget) {
    const std::size_t from = r.trials.size();
    const std::size_t round = std::min(opts.round_size, opts.budget - from);
    const std::vector<Trial> history = r.trials;
    for (std::size_t k = 0; k < round; ++k) {
      Rng rng = make_rng(seed, kProposalStream + from + k);
      add(sampler(space, history, opts.budget - from - k, rng));
    }
    evaluate_trials(r.trials, from, objective, opts.workers);
  }

  bool any = false;
  for (const auto& t : r.trials) {
    if (t.status != TrialStatus::completed) continue;
    if (!any || t.objective < r.trials[r.best].objective) r.best = t.index;
    any = true;
  }
  if (!any) throw Error("search: all " + std::to_string(r.trials.size()) + " trials failed; first error: " +
                        r.trials.front().error);
  return r;
}

StagedSearchResult staged_search(const SearchSpace& arch_space, const SearchSpace& train_space,
                                 const StagedObjective& objective, std::uint64_t seed,
                                 const StagedSearchOptions& opts) {
  if (arch_space.empty() || train_space.empty()) throw ConfigError("staged search: both spaces must be nonempty");
  StagedSearchResult out;
  const Params mid = train_space.midpoint();
  out.architecture = run_search(
      arch_space, [&](const Params& a, std::uint64_t s) { return objective(a, mid, s); }, derive_seed(seed, 1),
      opts.architecture);
  out.best_architecture = out.architecture.best_trial().params;
  const Params arch = out.best_architecture;
  out.training = run_search(
      train_space, [&](const Params& t, std::uint64_t s) { return objective(arch, t, s); }, derive_seed(seed, 2),
      opts.training);
  out.best_training = out.training.best_trial().params;
  return out;
}

void apply_params(PipelineConfig& cfg, const Params& p, std::size_t input_dim) {
  auto& a = cfg.arch;
  auto hidden = [](const NetworkSpec& s) { return s.layer_sizes.size() >= 2 ? s.layer_sizes.size() - 2 : 0; };
  std::size_t ext_layers = a.extractor.layer_sizes.size() - 1;
  std::size_t ext_width = a.extractor.layer_sizes.back();
  std::size_t head_width = hidden(a.head) > 0 ? a.head.layer_sizes[1] : 16;
  Activation act = a.extractor.activations.empty() ? Activation::relu : a.extractor.activations.front();
  std::size_t clf_layers = std::max<std::size_t>(1, hidden(a.classifier));
  std::size_t clf_width = hidden(a.classifier) > 0 ? a.classifier.layer_sizes[1] : 64;
  double clf_dropout = a.classifier.dropout_rates.empty() ? 0.0 : a.classifier.dropout_rates.front();

  auto positive = [&](const std::string& name) {
    const auto v = param_int(p, name);
    if (v < 1) throw ConfigError("parameter '" + name + "' must be at least 1");
    return static_cast<std::size_t>(v);
  };
  for (const auto& [name, value] : p) {
    if (name == "extractor_layers") ext_layers = positive(name);
    else if (name == "extractor_width") ext_width = positive(name);
    else if (name == "head_width") head_width = positive(name);
    else if (name == "activation") act = parse_activation(param_str(p, name));
    else if (name == "beta_max") cfg.beta.beta_max = param_real(p, name);
    else if (name == "classifier_layers") clf_layers = positive(name);
    else if (name == "classifier_neurons") clf_width = positive(name);
    else if (name == "classifier_dropout") clf_dropout = param_real(p, name);
    else if (name == "learning_rate") cfg.stage2.optimizer.initial_learning_rate = param_real(p, name);
    else if (name == "lambda_max") cfg.lambda.lambda_max = param_real(p, name);
    else if (name == "lambda_min_fraction") cfg.lambda.lambda_min_fraction = param_real(p, name);
    else if (name == "ramp_k") cfg.lambda.ramp_k = param_real(p, name);
    else if (name == "l2_penalty") cfg.stage2.optimizer.l2_penalty = param_real(p, name);
    else if (name == "warmup_epochs") cfg.lambda.warmup_epochs = static_cast<int>(param_int(p, name));
    else throw ConfigError("unknown search parameter '" + name + "'");
  }

  a.extractor.layer_sizes.assign(1, input_dim);
  a.extractor.layer_sizes.insert(a.extractor.layer_sizes.end(), ext_layers, ext_width);
  a.extractor.activations.assign(ext_layers, act);
  a.extractor.dropout_rates.clear();
  a.head.layer_sizes = {ext_width, head_width, 1};
  a.head.activations = {act, Activation::identity};
  a.head.dropout_rates.clear();
  a.classifier.layer_sizes.assign(1, ext_width);
  a.classifier.layer_sizes.insert(a.classifier.layer_sizes.end(), clf_layers, clf_width);
  a.classifier.layer_sizes.push_back(1);
  a.classifier.activations.assign(clf_layers, Activation::relu);
  a.classifier.activations.push_back(Activation::sigmoid);
  a.classifier.dropout_rates.assign(clf_layers, clf_dropout);
  a.classifier.dropout_rates.push_back(0.0);
  cfg.validate();
}

double staged_validation_mse(const TransferData& data, const PipelineConfig& cfg, std::uint64_t seed) {
  const Strategy only[] = {Strategy::staged_bdann};
  const auto models = run_strategies(data, cfg, only, seed);
  const auto& val = data.target.val;
  const auto pred = models.front().predict_mean(val.features(), cfg.mc_samples, derive_seed(seed, 99));
  return mse_loss(val.targets(), pred);
}

Json to_json(const Params& p) {
  Json j = Json::object();
  for (const auto& [name, v] : p) std::visit([&, &n = name](const auto& x) { j[n] = x; }, v);
  return j;
}

Params params_from_json(const Json& j, const SearchSpace& space) {
  if (!j.is_object()) throw ConfigError("parameters must be a JSON object");
  Params p;
  for (const auto& [name, v] : j.items()) {
    const auto it = std::find_if(space.dims().begin(), space.dims().end(),
                                 [&, &n = name](const Dimension& d) { return d.name == n; });
    try {
      if (it != space.dims().end()) {
        switch (it->kind) {
          case DimKind::integer: p[name] = v.get<std::int64_t>(); break;
          case DimKind::categorical: p[name] = v.get<std::string>(); break;
          default: p[name] = v.get<double>(); break;
        }
      } else if (v.is_number_integer()) {
        p[name] = v.get<std::int64_t>();
      } else if (v.is_number()) {
        p[name] = v.get<double>();
      } else {
        p[name] = v.get<std::string>();
      }
    } catch (const Json::exception&) {
      throw ConfigError("parameter '" + name + "' has the wrong type");
    }
  }
  return p;
}

Json to_json(const SearchSpace& space) {
  Json arr = Json::array();
  for (const auto& d : space.dims()) {
    Json j{{"name", d.name}, {"kind", std::string(to_string(d.kind))}};
    if (d.kind == DimKind::categorical) {
      j["choices"] = d.choices;
    } else if (d.kind == DimKind::integer) {
      j["low"] = static_cast<std::int64_t>(d.lo);
      j["high"] = static_cast<std::int64_t>(d.hi);
    } else {
      j["low"] = d.lo;
      j["high"] = d.hi;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

SearchSpace space_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("search space must be a JSON array");
  SearchSpace s;
  try {
    for (const auto& d : j) {
      const auto name = d.at("name").get<std::string>();
      switch (parse_dim_kind(d.at("kind").get<std::string>())) {
        case DimKind::integer: s.add_int(name, d.at("low").get<std::int64_t>(), d.at("high").get<std::int64_t>()); break;
        case DimKind::real: s.add_real(name, d.at("low").get<double>(), d.at("high").get<double>()); break;
        case DimKind::log_real: s.add_log_real(name, d.at("low").get<double>(), d.at("high").get<double>()); break;
        case DimKind::categorical: s.add_categorical(name, d.at("choices").get<std::vector<std::string>>()); break;
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("search space: ") + e.what());
  }
  s.validate();
  return s;
}

Json to_json(const SearchResult& r) {
  Json trials = Json::array();
  const auto running = r.running_best();
  for (const auto& t : r.trials) {
    Json j{{"index", t.index},
           {"seed", t.seed},
           {"status", std::string(to_string(t.status))},
           {"params", to_json(t.params)},
           {"running_best", std::isfinite(running[t.index]) ? Json(running[t.index]) : Json(nullptr)}};
    if (t.status == TrialStatus::completed) j["objective"] = t.objective;
    else j["error"] = t.error;
    trials.push_back(std::move(j));
  }
  return {{"best_index", r.best}, {"best", to_json(r.best_trial().params)},
          {"best_objective", r.best_trial().objective}, {"trials", std::move(trials)}};
}

}  // namespace bdann
