#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bdann/errors.hpp"
#include "bdann/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Args {
  std::string config;
  std::string out;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t ablation = 0;
  int workers = -1;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "Experiment config (JSON)")->required();
  cmd->add_option("--seed", a.seed, "Run seed (ensemble: first seed)");
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--workers", a.workers, "Parallel runs; 0 uses every core")->check(CLI::NonNegativeNumber);
  cmd->add_option("--ablation", a.ablation, "Target training rows (synthetic data)");
}

bdann::CommandOptions command_options(const CLI::App* cmd, const Args& a) {
  bdann::CommandOptions o;
  o.out = a.out;
  o.model = a.model;
  if (cmd->count("--seed")) o.seed = a.seed;
  if (cmd->count("--ablation")) o.ablation = a.ablation;
  if (a.workers >= 0) {
    o.workers = a.workers;
  } else if (const char* w = std::getenv("BDANN_WORKERS"); w && *w) {
    char* end = nullptr;
    const long v = std::strtol(w, &end, 10);
    if (*end != '\0' || v < 0) throw bdann::ConfigError("BDANN_WORKERS must be a non-negative integer");
    o.workers = static_cast<int>(v);
  }
  return o;
}

void print_metrics(const bdann::MetricsReport& r) {
  std::cout << bdann::to_json(r).dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged transfer learning with adversarial alignment and Bayesian fine-tuning"};
  app.require_subcommand(1);
  Args a;

  auto* generate = app.add_subcommand("generate", "Write the synthetic benchmark to CSV");
  auto* train = app.add_subcommand("train", "Train every configured strategy for one seed");
  auto* ensemble = app.add_subcommand("ensemble", "Seed ensemble with mean and 95% CI per metric");
  auto* evaluate = app.add_subcommand("evaluate", "Score a saved model on the test split");
  auto* calibrate = app.add_subcommand("calibrate", "Calibration curves of a saved Bayesian model");
  auto* hpo = app.add_subcommand("hpo", "Two-phase hyperparameter search");
  auto* hybrid = app.add_subcommand("hybrid", "Residual-correction ensemble on top of a base model");
  for (auto* c : {generate, train, ensemble, evaluate, calibrate, hpo, hybrid}) add_common(c, a);
  for (auto* c : {evaluate, calibrate}) c->add_option("--model", a.model, "Saved model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    auto* cmd = app.get_subcommands().front();
    const auto cfg = bdann::load_config(a.config);
    const auto opts = command_options(cmd, a);
    std::size_t failures = 0;
    if (cmd == generate) {
      std::cout << bdann::cmd_generate(cfg, opts).string() << '\n';
    } else if (cmd == train) {
      std::cout << bdann::cmd_train(cfg, opts).string() << '\n';
    } else if (cmd == ensemble) {
      std::cout << bdann::cmd_ensemble(cfg, opts, &failures).string() << '\n';
    } else if (cmd == evaluate) {
      print_metrics(bdann::cmd_evaluate(cfg, opts));
    } else if (cmd == calibrate) {
      std::cout << bdann::cmd_calibrate(cfg, opts).string() << '\n';
    } else if (cmd == hpo) {
      std::cout << bdann::cmd_hpo(cfg, opts).string() << '\n';
    } else if (cmd == hybrid) {
      std::cout << bdann::cmd_hybrid(cfg, opts, &failures).string() << '\n';
    }
    if (failures > 0) {
      std::fprintf(stderr, "error: %zu run(s) failed\n", failures);
      return kExitRuntime;
    }
    return 0;
  } catch (const bdann::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
