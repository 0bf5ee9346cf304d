#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "bdann/experiment.hpp"

using namespace bdann;
namespace fs = std::filesystem;

namespace {

std::string config_error(const Json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Small but complete config for the CLI tests.
Json tiny_config() {
  return Json::parse(R"({
    "name": "tiny",
    "strategies": ["from_scratch", "direct_transfer", "staged_bdann"],
    "seed": 3,
    "dataset": {"kind": "synthetic", "seed": 5, "ablation_size": 75},
    "architecture": {"extractor": [8, 8], "head": [4], "classifier": [8], "activation": "tanh"},
    "stage1": {"max_epochs": 2, "batch_size": 256},
    "stage2": {"max_epochs": 2, "batch_size": 64},
    "stage3": {"max_epochs": 2},
    "baseline": {"max_epochs": 2},
    "mc_samples": 8,
    "val_mc_samples": 1,
    "ensemble": {"n_runs": 2}
  })");
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("bdann_exp_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BDANN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, UnknownFieldsAndBadValuesNameThePath) {
  auto j = tiny_config();
  j["stage3"]["batchsize"] = 4;
  EXPECT_NE(config_error(j).find("stage3.batchsize"), std::string::npos);
  j = tiny_config();
  j["stage1"]["max_epochs"] = "ten";
  EXPECT_NE(config_error(j).find("stage1.max_epochs"), std::string::npos);
  j = tiny_config();
  j["lambda"] = {{"lambda_max", 5.0}};
  EXPECT_NE(config_error(j).find("lambda"), std::string::npos);
  j = tiny_config();
  j["strategies"] = {"adda"};
  EXPECT_NE(config_error(j).find("strategies"), std::string::npos);
  j = tiny_config();
  j["dataset"]["kind"] = "images";
  EXPECT_NE(config_error(j).find("dataset.kind"), std::string::npos);
  j = tiny_config();
  j["stage2"]["batch_size"] = 31;
  EXPECT_NE(config_error(j).find("stage2.batch_size"), std::string::npos);
  EXPECT_EQ(config_error(tiny_config()), "");
}

TEST(Config, JsonRoundTripKeepsTheHash) {
  const auto cfg = config_from_json(tiny_config());
  EXPECT_EQ(cfg.pipeline.arch.extractor.layer_sizes, (std::vector<std::size_t>{5, 8, 8}));
  EXPECT_EQ(cfg.pipeline.lambda.total_epochs, 2);
  const auto back = config_from_json(to_json(cfg));
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 16u);
  auto other = cfg;
  other.pipeline.stage3.patience += 1;
  EXPECT_NE(config_hash(other), config_hash(cfg));
  other = cfg;
  EXPECT_EQ(cfg.pipeline.stage3_monitor, Stage3Monitor::predictive_mse);
  other.pipeline.stage3_monitor = Stage3Monitor::elbo;
  EXPECT_NE(config_hash(other), config_hash(cfg));
  EXPECT_EQ(config_from_json(to_json(other)).pipeline.stage3_monitor, Stage3Monitor::elbo);
  auto j = tiny_config();
  j["stage3_monitor"] = "median";
  EXPECT_NE(config_error(j).find("stage3_monitor"), std::string::npos);
}

TEST(Config, DefaultsAreValid) {
  ExperimentConfig cfg;
  cfg.pipeline.validate();
  const auto j = to_json(cfg);
  EXPECT_EQ(config_from_json(j).n_runs, 20);
}

TEST(RunDirectory, Precedence) {
  ExperimentConfig cfg;
  cfg.name = "x";
  cfg.output_dir = "base";
  CommandOptions o;
  ::unsetenv("BDANN_OUTPUT_ROOT");
  EXPECT_EQ(run_directory(cfg, o), fs::path("base/x"));
  ::setenv("BDANN_OUTPUT_ROOT", "/tmp/root", 1);
  EXPECT_EQ(run_directory(cfg, o), fs::path("/tmp/root/x"));
  o.out = "explicit";
  EXPECT_EQ(run_directory(cfg, o), fs::path("explicit"));
  ::unsetenv("BDANN_OUTPUT_ROOT");
}

TEST(Summary, TableHeader) {
  const auto csv = summary_table_csv({});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "strategy,n_runs,mu_error_pct_mean,mu_error_pct_ci95,max_error_pct_mean,max_error_pct_ci95,"
            "std_error_pct_mean,std_error_pct_ci95,rrmse_pct_mean,rrmse_pct_ci95,p_over_10_pct_mean,"
            "p_over_10_pct_ci95,r2_mean,r2_ci95");
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  write_text(dir / "ok.json", tiny_config().dump());
  auto bad = tiny_config();
  bad["stage1"]["bogus"] = 1;
  write_text(dir / "bad.json", bad.dump());
  write_text(dir / "broken.json", "{ not json");
  EXPECT_EQ(run_cli("train"), 2);
  EXPECT_EQ(run_cli("frobnicate --config x"), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("evaluate --config " + (dir / "ok.json").string()), 2);  // --model missing
  EXPECT_EQ(run_cli("evaluate --config " + (dir / "ok.json").string() + " --model " +
                    (dir / "nope.txt").string()),
            3);
  fs::remove_all(dir);
}

TEST(Cli, GenerateIsByteIdentical) {
  const auto dir = scratch("generate");
  write_text(dir / "cfg.json", tiny_config().dump());
  ASSERT_EQ(run_cli("generate --config " + (dir / "cfg.json").string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("generate --config " + (dir / "cfg.json").string() + " --out " + (dir / "b").string()), 0);
  for (const auto* f : {"source.csv", "target.csv", "target_train.csv", "manifest.json"})
    EXPECT_EQ(read_text(dir / "a" / f), read_text(dir / "b" / f)) << f;
  fs::remove_all(dir);
}

TEST(Cli, TrainEvaluateAndCalibrate) {
  const auto dir = scratch("train");
  const auto cfg = (dir / "cfg.json").string();
  write_text(cfg, tiny_config().dump());
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + (dir / "b").string()), 0);
  for (const auto* s : {"from_scratch", "direct_transfer", "staged_bdann"}) {
    const auto a = Json::parse(read_text(dir / "a" / s / "metrics.json"));
    const auto b = Json::parse(read_text(dir / "b" / s / "metrics.json"));
    EXPECT_EQ(a, b) << s;
    EXPECT_TRUE(fs::exists(dir / "a" / s / "model.txt"));
    EXPECT_TRUE(fs::exists(dir / "a" / s / "predictions.csv"));
  }
  EXPECT_TRUE(fs::exists(dir / "a" / "staged_bdann" / "calibration.json"));
  EXPECT_TRUE(fs::exists(dir / "a" / "run.json"));
  const auto model = (dir / "a" / "staged_bdann" / "model.txt").string();
  EXPECT_EQ(run_cli("evaluate --config " + cfg + " --model " + model), 0);
  EXPECT_EQ(run_cli("calibrate --config " + cfg + " --model " + model + " --out " + (dir / "cal").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "cal" / "calibration.json"));
  fs::remove_all(dir);
}

TEST(Cli, EnsembleWritesTheSummary) {
  const auto dir = scratch("ensemble");
  const auto cfg = (dir / "cfg.json").string();
  write_text(cfg, tiny_config().dump());
  ASSERT_EQ(run_cli("ensemble --config " + cfg + " --workers 2 --out " + (dir / "e").string()), 0);
  const auto s = Json::parse(read_text(dir / "e" / "summary.json"));
  ASSERT_TRUE(s.is_array());
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0]["n_runs"], 2);
  EXPECT_TRUE(fs::exists(dir / "e" / "summary.csv"));
  fs::remove_all(dir);
}
