#include "bdann/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include <omp.h>

#include "bdann/losses.hpp"

namespace bdann {

namespace {

constexpr std::uint64_t kStreamStage1 = 1;
constexpr std::uint64_t kStreamScratch = 2;
constexpr std::uint64_t kStreamDirect = 3;
constexpr std::uint64_t kStreamStage2 = 4;
constexpr std::uint64_t kStreamStage3 = 5;
constexpr std::uint64_t kStreamPredict = 99;

Matrix scaled(const ZScoreScaler& sc, const DataSplit& s) { return sc.apply(s.features()); }

Matrix first_rows(const Matrix& m, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return select_rows(m, idx);
}

bool finite(double v) { return std::isfinite(v); }

struct Batch {
  Matrix X;
  Vector y;
};

Batch take(const Matrix& X, const Vector& y, std::span<const std::size_t> idx) {
  return {select_rows(X, idx), select(y, idx)};
}

/// Mini-batch MSE training with early stopping on validation MSE; the best
/// parameters are restored.
NetworkState train_mse(NetworkState net, const std::vector<bool>& trainable_in, const Matrix& Xtr,
                       const Vector& ytr, const Matrix& Xva, const Vector& yva,
                       const StageConfig& cfg, Rng& rng, StageHistory& hist) {
  std::unique_ptr<bool[]> flags(new bool[trainable_in.size()]);
  std::copy(trainable_in.begin(), trainable_in.end(), flags.get());
  const std::span<const bool> trainable(flags.get(), trainable_in.size());
  Adam adam(cfg.optimizer);
  NetworkState best = net;
  double best_val = std::numeric_limits<double>::infinity();
  int wait = 0;
  const std::size_t n = Xtr.rows;
  for (int e = 0; e < cfg.max_epochs; ++e) {
    const auto perm = permutation(n, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(perm.data() + start, stop - start);
      const auto b = take(Xtr, ytr, idx);
      LossGradients lg;
      try {
        lg = backward(net, b.X, b.y, Loss::mse, true, &rng);
        if (!finite(lg.loss)) throw NumericError("non-finite training loss");
        adam.step(net, lg.grads, e, trainable);
      } catch (const NumericError& err) {
        throw TrainingDiverged(hist.stage + ": " + err.what(), hist);
      }
      loss_sum += lg.loss * static_cast<double>(stop - start);
    }
    EpochRecord rec;
    rec.epoch = e;
    rec.learning_rate = cfg.optimizer.learning_rate_at(e);
    rec.train_loss = loss_sum / static_cast<double>(n);
    Matrix pred;
    try {
      pred = forward(net, Xva);
    } catch (const NumericError& err) {
      throw TrainingDiverged(hist.stage + ": " + err.what(), hist);
    }
    rec.val_loss = mse_loss(yva, pred.data);
    hist.epochs.push_back(rec);
    hist.epochs_ran = e + 1;
    if (!finite(rec.val_loss)) throw TrainingDiverged(hist.stage + ": non-finite validation loss", hist);
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = net;
      hist.best_epoch = e;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  hist.best_value = hist.best_epoch >= 0 ? best_val : kNaN;
  return hist.best_epoch >= 0 ? best : net;
}

std::vector<bool> all_layers(std::size_t n, bool v) { return std::vector<bool>(n, v); }

void append_variational_refs(std::vector<ParamRef>& refs, VariationalState& vs,
                             const VariationalGradients& g) {
  for (std::size_t l = 0; l < vs.layers.size(); ++l) {
    auto& L = vs.layers[l];
    const std::string p = "layer" + std::to_string(l);
    refs.push_back({p + ".weight_mean", L.weight_mean.data, g.weight_mean[l].data, true, true});
    refs.push_back({p + ".bias_mean", L.bias_mean, g.bias_mean[l], false, true});
    refs.push_back({p + ".weight_rho", L.weight_rho.data, g.weight_rho[l].data, false, true});
    refs.push_back({p + ".bias_rho", L.bias_rho, g.bias_rho[l], false, true});
  }
}

/// Mean Gaussian NLL over a fixed set of weight draws plus the full-weight KL term.
double variational_val_objective(const VariationalState& vs, const Matrix& Xv, const Vector& yv,
                                 double beta_max, double n_train, int draws, std::uint64_t seed) {
  double nll = 0.0;
  Vector mean(Xv.rows), var(Xv.rows);
  for (int k = 0; k < draws; ++k) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(k));
    const auto net = sample_network(vs, draw_noise(vs, rng));
    const auto out = forward(net, Xv);
    for (std::size_t i = 0; i < Xv.rows; ++i) {
      mean[i] = out(i, 0);
      var[i] = predicted_variance(out(i, 1));
    }
    nll += gaussian_nll(yv, mean, var);
  }
  return nll / static_cast<double>(draws) + beta_max / n_train * kl_divergence(vs);
}

double predictive_val_mse(const VariationalState& vs, const Matrix& Xv, const Vector& yv, int draws,
                          std::uint64_t seed) {
  const auto pred = predict_mc(vs, Xv, draws, seed);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i].mean - yv[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

}  // namespace

void StageConfig::validate(std::string_view path) const {
  const std::string p(path);
  if (max_epochs < 0) throw ConfigError(p + ".max_epochs must be >= 0");
  if (patience < 1) throw ConfigError(p + ".patience must be >= 1");
  if (batch_size < 1) throw ConfigError(p + ".batch_size must be >= 1");
  try {
    optimizer.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(p + "." + e.what());
  }
}

StageConfig StageConfig::alignment_defaults() {
  StageConfig c;
  c.max_epochs = 100;
  c.patience = 10;
  c.batch_size = 64;
  c.optimizer.initial_learning_rate = 1e-4;
  return c;
}

void Architecture::validate() const {
  extractor.validate();
  head.validate();
  classifier.validate();
  if (head.layer_sizes.front() != latent_dim())
    throw ConfigError("architecture.head input width must equal the extractor output width");
  if (head.layer_sizes.back() != 1) throw ConfigError("architecture.head must have one output");
  if (classifier.layer_sizes.front() != latent_dim())
    throw ConfigError("architecture.classifier input width must equal the extractor output width");
  if (classifier.layer_sizes.back() != 1 || classifier.activations.back() != Activation::sigmoid)
    throw ConfigError("architecture.classifier must end in one sigmoid unit");
}

Architecture Architecture::defaults(std::size_t input_dim) {
  Architecture a;
  a.extractor.layer_sizes = {input_dim, 32, 32};
  a.extractor.activations = {Activation::relu, Activation::relu};
  a.head.layer_sizes = {32, 16, 1};
  a.head.activations = {Activation::relu, Activation::identity};
  a.classifier.layer_sizes = {32, 64, 1};
  a.classifier.activations = {Activation::relu, Activation::sigmoid};
  return a;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::from_scratch: return "from_scratch";
    case Strategy::direct_transfer: return "direct_transfer";
    case Strategy::staged_bdann: return "staged_bdann";
  }
  return "from_scratch";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "from_scratch") return Strategy::from_scratch;
  if (s == "direct_transfer") return Strategy::direct_transfer;
  if (s == "staged_bdann") return Strategy::staged_bdann;
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

std::string_view to_string(TransferMode m) {
  switch (m) {
    case TransferMode::frozen: return "frozen";
    case TransferMode::partial: return "partial";
    case TransferMode::full: return "full";
  }
  return "full";
}

TransferMode parse_transfer_mode(std::string_view s) {
  if (s == "frozen") return TransferMode::frozen;
  if (s == "partial") return TransferMode::partial;
  if (s == "full") return TransferMode::full;
  throw ConfigError("unknown transfer mode '" + std::string(s) + "'");
}

std::string_view to_string(Stage3Monitor m) {
  return m == Stage3Monitor::elbo ? "elbo" : "predictive_mse";
}

Stage3Monitor parse_stage3_monitor(std::string_view s) {
  if (s == "elbo") return Stage3Monitor::elbo;
  if (s == "predictive_mse") return Stage3Monitor::predictive_mse;
  throw ConfigError("unknown stage3 monitor '" + std::string(s) + "'");
}

std::vector<PredictiveSummary> TrainedModel::predict(const Matrix& X_raw, int mc_samples,
                                                     std::uint64_t mc_seed) const {
  const Matrix X = input_scaler.apply(X_raw);
  if (variational) return predict_mc(*variational, X, mc_samples, mc_seed);
  const Matrix out = forward(network(), X);
  std::vector<PredictiveSummary> res(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) res[i].mean = out(i, 0);
  return res;
}

Vector TrainedModel::predict_mean(const Matrix& X_raw, int mc_samples, std::uint64_t mc_seed) const {
  const auto s = predict(X_raw, mc_samples, mc_seed);
  Vector m(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) m[i] = s[i].mean;
  return m;
}

TransferData transfer_data(const Benchmark& b) { return {b.source, b.target}; }

void PipelineConfig::validate() const {
  arch.validate();
  stage1.validate("stage1");
  stage2.validate("stage2");
  stage3.validate("stage3");
  baseline.validate("baseline");
  if (stage2.batch_size < 2 || stage2.batch_size % 2 != 0)
    throw ConfigError("stage2.batch_size must be even and >= 2");
  lambda.validate();
  if (!(beta.beta_max >= 0.0)) throw ConfigError("beta_schedule.beta_max must be >= 0");
  if (beta.total_epochs <= 0) throw ConfigError("beta_schedule.total_epochs must be positive");
  if (!(posterior_init_std > 0.0)) throw ConfigError("posterior_init_std must be > 0");
  if (!(stopping_gamma >= 0.0)) throw ConfigError("stopping_gamma must be >= 0");
  if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
  if (val_mc_samples < 1) throw ConfigError("val_mc_samples must be >= 1");
  if (transfer_mode == TransferMode::partial &&
      (partial_layers < 1 || partial_layers > arch.extractor.activations.size()))
    throw ConfigError("partial_layers must lie in [1, extractor layer count]");
}

TrainedModel stage1_pretrain(const DomainSplits& source, const Architecture& arch,
                             const StageConfig& cfg, std::uint64_t seed,
                             std::optional<ZScoreScaler> scaler) {
  arch.validate();
  cfg.validate("stage1");
  if (source.train.empty() || source.val.empty())
    throw InvalidArgument("stage1_pretrain: source train and val partitions are required");
  TrainedModel m;
  m.strategy = Strategy::direct_transfer;
  m.seed = seed;
  m.input_scaler = scaler ? *scaler : fit_zscore(source.train.features());
  const auto ext = NetworkState::initialize(arch.extractor, derive_seed(seed, 11));
  const auto head = NetworkState::initialize(arch.head, derive_seed(seed, 12));
  Rng rng = make_rng(seed, 13);
  StageHistory hist;
  hist.stage = "stage1";
  const auto net = train_mse(concat(ext, head), all_layers(ext.layers.size() + head.layers.size(), true),
                             scaled(m.input_scaler, source.train), source.train.targets(),
                             scaled(m.input_scaler, source.val), source.val.targets(), cfg, rng, hist);
  std::tie(m.extractor, m.head) = split(net, ext.layers.size());
  m.history.push_back(std::move(hist));
  return m;
}

TrainedModel stage2_align(const TrainedModel& model, const DomainSplits& source,
                          const DomainSplits& target, const Architecture& arch,
                          const LambdaSchedule& sched, const StageConfig& cfg, std::uint64_t seed,
                          double gamma) {
  sched.validate();
  cfg.validate("stage2");
  if (cfg.batch_size < 2 || cfg.batch_size % 2 != 0)
    throw ConfigError("stage2.batch_size must be even and >= 2");
  if (target.train.empty()) throw InvalidArgument("stage2_align: target train partition is empty");
  if (source.train.empty()) throw InvalidArgument("stage2_align: source train partition is empty");
  if (model.extractor.output_dim() != arch.latent_dim())
    throw ShapeError("stage2_align: classifier input width differs from the extractor output");

  TrainedModel m = model;
  m.strategy = Strategy::staged_bdann;
  NetworkState ext = model.extractor;
  NetworkState clf = NetworkState::initialize(arch.classifier, derive_seed(seed, 21));
  Rng rng = make_rng(seed, 22);

  const Matrix Xs = scaled(m.input_scaler, source.train);
  const Matrix Xt = scaled(m.input_scaler, target.train);

  // Validation pairs source and target val rows in equal numbers.
  const Matrix Xsv_all = scaled(m.input_scaler, source.val);
  const std::size_t nv = std::min(source.val.size(), target.val.size());
  if (nv == 0) throw InvalidArgument("stage2_align: source and target val partitions are required");
  const Matrix Xv = vstack(first_rows(Xsv_all, nv), first_rows(scaled(m.input_scaler, target.val), nv));
  Vector dv(2 * nv, 0.0);
  std::fill(dv.begin() + static_cast<std::ptrdiff_t>(nv), dv.end(), 1.0);
  const Vector& ysv = source.val.targets();

  Adam opt_ext(cfg.optimizer), opt_clf(cfg.optimizer);
  StageHistory hist;
  hist.stage = "stage2";
  NetworkState best_ext = ext, best_clf = clf;
  double best_score = std::numeric_limits<double>::infinity();
  int wait = 0;
  const std::size_t half = cfg.batch_size / 2;

  for (int e = 0; e < cfg.max_epochs; ++e) {
    const double lam = lambda_at(e, sched);
    const auto plan = plan_balanced_epoch(Xs.rows, Xt.rows, cfg.batch_size, rng);
    double loss_sum = 0.0;
    for (const auto& bp : plan) {
      Matrix Xb = vstack(select_rows(Xs, bp.source_rows), select_rows(Xt, bp.target_rows));
      Vector db(2 * half, 0.0);
      std::fill(db.begin() + static_cast<std::ptrdiff_t>(half), db.end(), 1.0);
      try {
        const auto ce = forward_cached(ext, Xb, true, &rng);
        const auto cc = forward_cached(clf, ce.output, true, &rng);
        const auto lg = loss_with_grad(Loss::bce, cc.output, db);
        const auto bc = backward(clf, cc, lg.output_grad);
        if (!finite(lg.value)) throw NumericError("non-finite classifier loss");
        opt_clf.step(clf, bc.grads, e);
        if (lam > 0.0) {
          const auto be = backward(ext, ce, grl_backward(bc.input_grad, lam));
          opt_ext.step(ext, be.grads, e);
        }
        loss_sum += lg.value;
      } catch (const NumericError& err) {
        throw TrainingDiverged(std::string("stage2: ") + err.what(), hist);
      }
    }
    EpochRecord rec;
    rec.epoch = e;
    rec.learning_rate = cfg.optimizer.learning_rate_at(e);
    rec.train_loss = loss_sum / static_cast<double>(plan.size());
    rec.lambda = lam;
    Matrix p;
    try {
      p = forward(clf, forward(ext, Xv));
      rec.head_source_val_mse = mse_loss(ysv, forward(concat(ext, m.head), Xsv_all).data);
    } catch (const NumericError& err) {
      throw TrainingDiverged(std::string("stage2: ") + err.what(), hist);
    }
    rec.val_auc = auc(p.data, dv);
    rec.val_bce = bce_loss(dv, p.data);
    rec.val_loss = early_stop_score(rec.val_auc, rec.val_bce, gamma);
    hist.epochs.push_back(rec);
    hist.epochs_ran = e + 1;
    if (e < sched.warmup_epochs) continue;
    if (rec.val_loss < best_score) {
      best_score = rec.val_loss;
      best_ext = ext;
      best_clf = clf;
      hist.best_epoch = e;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  if (hist.best_epoch >= 0) {
    ext = std::move(best_ext);
    clf = std::move(best_clf);
    hist.best_value = best_score;
  }
  m.extractor = std::move(ext);
  m.classifier = std::move(clf);
  m.final_val_auc = auc(forward(*m.classifier, forward(m.extractor, Xv)).data, dv);
  m.history.push_back(std::move(hist));
  return m;
}

TrainedModel stage3_finetune(const TrainedModel& model, const DomainSplits& target,
                             const BetaSchedule& beta_sched, const StageConfig& cfg,
                             std::uint64_t seed, double init_std, int val_mc_samples,
                             Stage3Monitor monitor) {
  cfg.validate("stage3");
  if (target.train.empty() || target.val.empty())
    throw InvalidArgument("stage3_finetune: target train and val partitions are required");
  if (val_mc_samples < 1) throw InvalidArgument("stage3_finetune: val_mc_samples must be >= 1");
  TrainedModel m = model;
  m.strategy = Strategy::staged_bdann;
  VariationalState vs = init_from_deterministic(model.network(), init_std, derive_seed(seed, 31));
  Rng rng = make_rng(seed, 32);
  const std::uint64_t val_seed = derive_seed(seed, 33);

  const Matrix Xt = scaled(m.input_scaler, target.train);
  const Vector& yt = target.train.targets();
  const Matrix Xv = scaled(m.input_scaler, target.val);
  const Vector& yv = target.val.targets();
  const double n_t = static_cast<double>(Xt.rows);

  Adam adam(cfg.optimizer);
  StageHistory hist;
  hist.stage = "stage3";
  VariationalState best = vs;
  double best_val = std::numeric_limits<double>::infinity();
  int wait = 0;
  const double total = std::max(1, beta_sched.total_epochs);
  for (int e = 0; e < cfg.max_epochs; ++e) {
    const double beta = beta_at(static_cast<double>(e) / total, beta_sched);
    const auto perm = permutation(Xt.rows, rng);
    double loss_sum = 0.0, kl = 0.0;
    for (std::size_t start = 0; start < Xt.rows; start += cfg.batch_size) {
      const std::size_t stop = std::min(Xt.rows, start + cfg.batch_size);
      const std::span<const std::size_t> idx(perm.data() + start, stop - start);
      const auto b = take(Xt, yt, idx);
      try {
        const auto res = elbo_loss_and_grad(b.X, b.y, vs, beta, rng, n_t);
        if (!finite(res.value)) throw NumericError("non-finite ELBO");
        std::vector<ParamRef> refs;
        append_variational_refs(refs, vs, res.grads);
        adam.step(refs, e);
        loss_sum += res.value * static_cast<double>(stop - start);
        kl = res.kl;
      } catch (const NumericError& err) {
        throw TrainingDiverged(std::string("stage3: ") + err.what(), hist);
      }
    }
    EpochRecord rec;
    rec.epoch = e;
    rec.learning_rate = cfg.optimizer.learning_rate_at(e);
    rec.train_loss = loss_sum / n_t;
    rec.beta = beta;
    rec.kl = kl;
    try {
      rec.val_loss = monitor == Stage3Monitor::elbo
                         ? variational_val_objective(vs, Xv, yv, beta_sched.beta_max, n_t, val_mc_samples, val_seed)
                         : predictive_val_mse(vs, Xv, yv, val_mc_samples, val_seed);
    } catch (const NumericError& err) {
      throw TrainingDiverged(std::string("stage3: ") + err.what(), hist);
    }
    hist.epochs.push_back(rec);
    hist.epochs_ran = e + 1;
    if (!finite(rec.val_loss)) throw TrainingDiverged("stage3: non-finite validation objective", hist);
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      best = vs;
      hist.best_epoch = e;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      hist.stopped_early = true;
      break;
    }
  }
  if (hist.best_epoch >= 0) {
    vs = std::move(best);
    hist.best_value = best_val;
  }
  auto [ext, head] = split(vs.mean_network(), model.extractor.layers.size());
  m.extractor = std::move(ext);
  m.head = std::move(head);
  m.variational = std::move(vs);
  m.history.push_back(std::move(hist));
  return m;
}

TrainedModel train_from_scratch(const DomainSplits& target, const Architecture& arch,
                                const StageConfig& cfg, std::uint64_t seed) {
  arch.validate();
  cfg.validate("baseline");
  if (target.train.empty() || target.val.empty())
    throw InvalidArgument("train_from_scratch: target train and val partitions are required");
  TrainedModel m;
  m.strategy = Strategy::from_scratch;
  m.seed = seed;
  m.input_scaler = fit_zscore(target.train.features());
  const auto ext = NetworkState::initialize(arch.extractor, derive_seed(seed, 41));
  const auto head = NetworkState::initialize(arch.head, derive_seed(seed, 42));
  Rng rng = make_rng(seed, 43);
  StageHistory hist;
  hist.stage = "from_scratch";
  const auto net = train_mse(concat(ext, head), all_layers(ext.layers.size() + head.layers.size(), true),
                             scaled(m.input_scaler, target.train), target.train.targets(),
                             scaled(m.input_scaler, target.val), target.val.targets(), cfg, rng, hist);
  std::tie(m.extractor, m.head) = split(net, ext.layers.size());
  m.history.push_back(std::move(hist));
  return m;
}

TrainedModel train_direct_transfer(const TrainedModel& base, const DomainSplits& target,
                                   const StageConfig& cfg, TransferMode mode,
                                   std::size_t partial_layers, std::uint64_t seed) {
  cfg.validate("baseline");
  if (target.train.empty() || target.val.empty())
    throw InvalidArgument("train_direct_transfer: target train and val partitions are required");
  const std::size_t n_ext = base.extractor.layers.size();
  const std::size_t n_head = base.head.layers.size();
  std::vector<bool> trainable(n_ext + n_head, true);
  if (mode == TransferMode::frozen) {
    std::fill(trainable.begin(), trainable.begin() + static_cast<std::ptrdiff_t>(n_ext), false);
  } else if (mode == TransferMode::partial) {
    if (partial_layers > n_ext)
      throw InvalidArgument("train_direct_transfer: partial_layers exceeds the extractor depth");
    std::fill(trainable.begin(), trainable.begin() + static_cast<std::ptrdiff_t>(n_ext - partial_layers),
              false);
  }
  TrainedModel m = base;
  m.strategy = Strategy::direct_transfer;
  m.seed = seed;
  m.variational.reset();
  m.classifier.reset();
  Rng rng = make_rng(seed, 51);
  StageHistory hist;
  hist.stage = "direct_transfer_" + std::string(to_string(mode));
  const auto net = train_mse(base.network(), trainable, scaled(m.input_scaler, target.train),
                             target.train.targets(), scaled(m.input_scaler, target.val),
                             target.val.targets(), cfg, rng, hist);
  std::tie(m.extractor, m.head) = split(net, n_ext);
  m.history.push_back(std::move(hist));
  return m;
}

ZScoreScaler transfer_scaler(const TransferData& data) {
  return fit_zscore(data.target.train.features(), data.source.train.features(), ScalerPolicy::joint);
}

std::vector<TrainedModel> run_strategies(const TransferData& data, const PipelineConfig& cfg,
                                         std::span<const Strategy> strategies, std::uint64_t seed) {
  cfg.validate();
  const bool need_base = std::any_of(strategies.begin(), strategies.end(),
                                     [](Strategy s) { return s != Strategy::from_scratch; });
  std::optional<TrainedModel> base;
  if (need_base)
    base = stage1_pretrain(data.source, cfg.arch, cfg.stage1, derive_seed(seed, kStreamStage1),
                           transfer_scaler(data));
  std::vector<TrainedModel> out;
  for (Strategy s : strategies) {
    TrainedModel m;
    switch (s) {
      case Strategy::from_scratch:
        m = train_from_scratch(data.target, cfg.arch, cfg.baseline, derive_seed(seed, kStreamScratch));
        break;
      case Strategy::direct_transfer:
        m = train_direct_transfer(*base, data.target, cfg.baseline, cfg.transfer_mode,
                                  cfg.partial_layers, derive_seed(seed, kStreamDirect));
        break;
      case Strategy::staged_bdann: {
        const auto aligned = stage2_align(*base, data.source, data.target, cfg.arch, cfg.lambda,
                                          cfg.stage2, derive_seed(seed, kStreamStage2),
                                          cfg.stopping_gamma);
        m = stage3_finetune(aligned, data.target, cfg.beta, cfg.stage3, derive_seed(seed, kStreamStage3),
                            cfg.posterior_init_std, cfg.val_mc_samples, cfg.stage3_monitor);
        break;
      }
    }
    m.strategy = s;
    m.seed = seed;
    out.push_back(std::move(m));
  }
  return out;
}

MetricsReport evaluate_model(const TrainedModel& model, const DataSplit& test, int mc_samples) {
  const auto mean = model.predict_mean(test.features(), mc_samples, derive_seed(model.seed, kStreamPredict));
  return error_metrics(test.targets(), mean);
}

const MetricSummary& EnsembleSummary::metric(std::string_view name) const {
  const auto names = metric_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return metrics[i];
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

EnsembleSummary aggregate_runs(Strategy strategy, std::vector<RunResult> runs) {
  if (runs.size() < 2) throw Error("ensemble: fewer than two successful runs");
  std::stable_sort(runs.begin(), runs.end(),
                   [](const RunResult& a, const RunResult& b) { return a.seed < b.seed; });
  EnsembleSummary s;
  s.strategy = strategy;
  const double n = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < s.metrics.size(); ++k) {
    double sum = 0.0;
    for (const auto& r : runs) sum += metric_value(r.report, k);
    const double mean = sum / n;
    double dev = 0.0;
    for (const auto& r : runs) {
      const double d = metric_value(r.report, k) - mean;
      dev += d * d;
    }
    auto& m = s.metrics[k];
    m.mean = mean;
    m.std = std::sqrt(dev / (n - 1.0));
    m.ci_half_width = 1.96 * m.std / std::sqrt(n);
    m.raw_half_width = 1.96 * m.std;
  }
  s.runs = std::move(runs);
  return s;
}

std::vector<std::uint64_t> ensemble_seeds(const EnsembleOptions& opts) {
  std::vector<std::uint64_t> seeds = opts.seeds;
  if (seeds.empty()) {
    if (opts.n_runs < 2) throw InvalidArgument("ensemble: n_runs must be >= 2");
    for (int i = 0; i < opts.n_runs; ++i) seeds.push_back(opts.base_seed + static_cast<std::uint64_t>(i));
  }
  if (seeds.size() < 2) throw InvalidArgument("ensemble: at least two seeds are required");
  return seeds;
}

std::vector<EnsembleSummary> run_ensemble(std::span<const Strategy> labels, const EnsembleOptions& opts,
                                          const SeedRunner& run) {
  if (labels.empty()) throw InvalidArgument("ensemble: no strategies requested");
  const auto seeds = ensemble_seeds(opts);
  const auto n = static_cast<long>(seeds.size());
  std::vector<std::vector<MetricsReport>> reports(seeds.size());
  std::vector<std::string> errors(seeds.size());
  const int workers = opts.workers > 0 ? opts.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      reports[k] = run(seeds[k]);
      if (reports[k].size() != labels.size()) throw Error("runner returned the wrong number of reports");
    } catch (const std::exception& e) {
      errors[k] = "seed " + std::to_string(seeds[k]) + ": " + e.what();
    }
  }

  std::vector<std::string> failures;
  for (const auto& e : errors)
    if (!e.empty()) failures.push_back(e);
  std::vector<EnsembleSummary> out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    std::vector<RunResult> runs;
    for (std::size_t i = 0; i < seeds.size(); ++i)
      if (errors[i].empty()) runs.push_back({seeds[i], reports[i][k]});
    auto s = aggregate_runs(labels[k], std::move(runs));
    s.failures = failures;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<EnsembleSummary> run_seed_ensemble(const TransferData& data, const PipelineConfig& cfg,
                                               std::span<const Strategy> strategies,
                                               const EnsembleOptions& opts,
                                               const Evaluator& evaluate) {
  cfg.validate();
  const Evaluator eval = evaluate ? evaluate : Evaluator([&cfg](const TrainedModel& m, const DataSplit& t) {
    return evaluate_model(m, t, cfg.mc_samples);
  });
  return run_ensemble(strategies, opts, [&](std::uint64_t seed) {
    const auto models = run_strategies(data, cfg, strategies, seed);
    std::vector<MetricsReport> r;
    for (const auto& m : models) r.push_back(eval(m, data.target.test));
    if (opts.on_run) {
#pragma omp critical(bdann_ensemble_hook)
      opts.on_run(seed, models);
    }
    return r;
  });
}

}  // namespace bdann
