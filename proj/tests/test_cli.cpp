#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "icon/runner.hpp"
#include "json.hpp"

using namespace icon;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string config_path(const char* name) {
  return std::string(ICON_CONFIG_DIR) + "/" + name;
}

// Runs the installed binary through the shell; returns its exit status.
int run_cli(const std::string& args) {
  const std::string cmd = std::string(ICON_CLI_PATH) + " " + args;
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

RunConfig smoke_config(const std::string& out_dir) {
  RunConfig cfg = load_config(config_path("smoke.json"));
  cfg.run.out_dir = out_dir;
  return cfg;
}

void wipe(const fs::path& dir) { fs::remove_all(dir); }

}  // namespace

TEST_CASE("parse_config fills defaults from an empty object") {
  const RunConfig cfg = parse_config("{}");
  CHECK(cfg.dataset.source == "synth");
  CHECK(cfg.dataset.num_classes == 10);
  CHECK(cfg.scenario.kind == StreamKind::VIL);
  CHECK(cfg.scenario.classes_per_task == 2);
  CHECK(cfg.scenario.seed == 1234);
  CHECK(cfg.run.seeds == std::vector<std::uint64_t>{1});
  CHECK(cfg.trainer.epochs_total == 5);
  CHECK(cfg.trainer.warmup_epochs == 3);
  CHECK(cfg.trainer.learning_rate == 0.0028125);
  CHECK(cfg.model.ema_decay == 0.9999);
}

TEST_CASE("parse_config names the offending field") {
  try {
    parse_config(R"({"dataset": {"foo": 1}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("dataset.foo") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"zzz": {}})"), ConfigError);
  try {
    parse_config(R"({"trainer": {"epochs_total": "five"}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("trainer.epochs_total") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"scenario": {"kind": "silly"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("not json at all"), ConfigError);
  // Cross-field rules.
  CHECK_THROWS_AS(parse_config(R"({"scenario": {"classes_per_task": 3}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"source": "csv"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"run": {"seeds": []}})"), ConfigError);
}

TEST_CASE("derived quantities") {
  RunConfig cfg = parse_config("{}");
  CHECK(task_count(cfg) == 20);  // 5 groups x 4 domains
  cfg.scenario.kind = StreamKind::CIL;
  CHECK(task_count(cfg) == 5);
  CHECK(node_count_bound(cfg) == 10);
  cfg.scenario.kind = StreamKind::DIL;
  CHECK(task_count(cfg) == 4);
  cfg.scenario.kind = StreamKind::CDIL;
  CHECK(task_count(cfg) == 4);
  CHECK(node_count_bound(cfg) == 40);

  // ceil(5 * layers / 12): 4 -> 2, 12 -> 5, 1 -> 1.
  CHECK(resolved_adapter_layers(cfg) == 2);
  cfg.model.backbone_layers = 12;
  CHECK(resolved_adapter_layers(cfg) == 5);
  cfg.model.backbone_layers = 1;
  CHECK(resolved_adapter_layers(cfg) == 1);
  cfg.model.adapter_layer_count = 3;
  cfg.model.backbone_layers = 6;
  CHECK(resolved_adapter_layers(cfg) == 3);

  // Three adapted layers, rank 5, hidden 16, inputs 16/16/16:
  // each layer holds 5*16 + 16*5 + 1 = 161 values.
  RunConfig sv = parse_config("{}");
  sv.model.adapter_layer_count = 3;
  sv.model.backbone_layers = 4;
  sv.model.hidden_dim = 16;
  sv.dataset.feature_dim = 16;
  CHECK(shift_vector_length(sv) == 483);
}

TEST_CASE("format_double emits shortest round-trip decimals") {
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-3.5) == "-3.5");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(std::stod(format_double(0.0028125)) == 0.0028125);
}

TEST_CASE("cmd_run writes the full output tree") {
  const fs::path out = "/tmp/icon_cli_run";
  wipe(out);
  RunConfig cfg = smoke_config(out.string());
  cfg.run.emit_node_report = true;
  cfg.run.emit_shift_pool = true;
  const std::vector<SeedOutcome> outcomes = cmd_run(cfg);
  REQUIRE(outcomes.size() == 2);

  for (const std::uint64_t seed : {1ULL, 2ULL}) {
    const fs::path dir = out / ("seed_" + std::to_string(seed));
    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(dir / "node_report.csv"));
    CHECK(fs::exists(dir / "shift_pool.txt"));

    // The accuracy matrix is lower-triangular: row t carries t + 1 fields.
    std::istringstream csv(slurp(dir / "acc_matrix.csv"));
    std::string line;
    int row = 0;
    while (std::getline(csv, line)) {
      const long commas = std::count(line.begin(), line.end(), ',');
      CHECK(commas == row);
      ++row;
    }
    CHECK(row == 4);  // vil: 2 groups x 2 domains

    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(summary.at("seed") == seed);
    CHECK(summary.at("num_tasks") == 4);
    CHECK(summary.at("tasks").size() == 4);
    CHECK(summary.at("pool_size") == 4);

    const std::string node_report = slurp(dir / "node_report.csv");
    CHECK(node_report.rfind("class_id,node_count,node_id,created_task,created_domain,thresholds\n", 0) == 0);
  }

  // The aggregate recomputes from the per-seed entries.
  const auto agg = nlohmann::json::parse(slurp(out / "aggregate.json"));
  REQUIRE(agg.at("per_seed").size() == 2);
  double mean = 0.0;
  for (const auto& p : agg.at("per_seed")) mean += p.at("average_accuracy").get<double>();
  mean /= 2.0;
  CHECK(std::abs(agg.at("average_accuracy").at("mean").get<double>() - mean) < 1e-12);
  const double a0 = agg.at("per_seed")[0].at("average_accuracy").get<double>();
  const double a1 = agg.at("per_seed")[1].at("average_accuracy").get<double>();
  const double sd = std::sqrt((a0 - mean) * (a0 - mean) + (a1 - mean) * (a1 - mean));
  CHECK(std::abs(agg.at("average_accuracy").at("stddev").get<double>() - sd) < 1e-12);
  wipe(out);
}

TEST_CASE("identical runs emit identical bytes") {
  const fs::path out_a = "/tmp/icon_cli_det_a";
  const fs::path out_b = "/tmp/icon_cli_det_b";
  wipe(out_a);
  wipe(out_b);
  RunConfig cfg = smoke_config(out_a.string());
  cmd_run(cfg);
  cfg.run.out_dir = out_b.string();
  cmd_run(cfg);
  CHECK(slurp(out_a / "seed_1" / "acc_matrix.csv") ==
        slurp(out_b / "seed_1" / "acc_matrix.csv"));
  CHECK(slurp(out_a / "seed_2" / "acc_matrix.csv") ==
        slurp(out_b / "seed_2" / "acc_matrix.csv"));
  CHECK(slurp(out_a / "aggregate.json") == slurp(out_b / "aggregate.json"));
  wipe(out_a);
  wipe(out_b);
}

TEST_CASE("ablation grid covers the five variants") {
  const fs::path out = "/tmp/icon_cli_ablation";
  wipe(out);
  RunConfig cfg = smoke_config(out.string());
  cfg.run.seeds = {1};  // keep the grid fast
  cmd_ablation(cfg);
  std::istringstream table(slurp(out / "ablation.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(table, line)) lines.push_back(line);
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "config,avg_acc_mean,avg_acc_std,forgetting_mean,forgetting_std");
  CHECK(lines[1].rfind("baseline,", 0) == 0);
  CHECK(lines[2].rfind("cast,", 0) == 0);
  CHECK(lines[3].rfind("ic,", 0) == 0);
  CHECK(lines[4].rfind("icon,", 0) == 0);
  CHECK(lines[5].rfind("icon_no_dt,", 0) == 0);
  CHECK(fs::exists(out / "baseline" / "seed_1" / "summary.json"));
  CHECK(fs::exists(out / "icon" / "aggregate.json"));
  wipe(out);
}

TEST_CASE("binary: validate prints derived sizes and exits zero") {
  const std::string out_file = "/tmp/icon_cli_validate.txt";
  const int rc =
      run_cli("validate -c " + config_path("vil_reference.json") + " > " + out_file);
  CHECK(rc == 0);
  const std::string text = slurp(out_file);
  CHECK(text.find("tasks: 20") != std::string::npos);
  CHECK(text.find("node-bound: 40") != std::string::npos);
  CHECK(text.find("k-clusters: 2") != std::string::npos);

  const int rc2 = run_cli("validate -c " + config_path("vil_reference.json") +
                          " --scenario cil > " + out_file);
  CHECK(rc2 == 0);
  CHECK(slurp(out_file).find("tasks: 5") != std::string::npos);
}

TEST_CASE("binary: run respects the seed and output overrides") {
  const fs::path out = "/tmp/icon_cli_bin_run";
  wipe(out);
  const int rc = run_cli("run -c " + config_path("smoke.json") + " -s 7 -o " +
                         out.string() + " > /dev/null");
  CHECK(rc == 0);
  CHECK(fs::exists(out / "seed_7" / "summary.json"));
  CHECK_FALSE(fs::exists(out / "seed_1"));

  // A parallel rerun must emit the same bytes as the sequential one.
  const fs::path out2 = "/tmp/icon_cli_bin_run2";
  wipe(out2);
  const std::string cmd = std::string("ICON_WORKERS=2 ") + ICON_CLI_PATH +
                          " run -c " + config_path("smoke.json") + " -o " +
                          out2.string() + " > /dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const fs::path out3 = "/tmp/icon_cli_bin_run3";
  wipe(out3);
  REQUIRE(run_cli("run -c " + config_path("smoke.json") + " -o " + out3.string() +
                  " > /dev/null") == 0);
  CHECK(slurp(out2 / "seed_1" / "acc_matrix.csv") ==
        slurp(out3 / "seed_1" / "acc_matrix.csv"));
  CHECK(slurp(out2 / "aggregate.json") == slurp(out3 / "aggregate.json"));
  wipe(out);
  wipe(out2);
  wipe(out3);
}

TEST_CASE("binary: config problems exit 2, data problems exit 3") {
  CHECK(run_cli("validate -c /tmp/does_not_exist.json 2> /dev/null") == 2);

  const std::string bad = "/tmp/icon_cli_bad.json";
  std::ofstream(bad) << R"({"trainer": {"warmup_epochs": 99}})";
  CHECK(run_cli("validate -c " + bad + " 2> /dev/null") == 2);

  std::ofstream(bad) << R"({"dataset": {"source": "csv", "csv_path": "/tmp/missing.csv"}})";
  CHECK(run_cli("run -c " + bad + " -o /tmp/icon_cli_bad_out 2> /dev/null") == 3);

  CHECK(run_cli("run -c " + config_path("smoke.json") +
                " --ablate bogus -o /tmp/icon_cli_bad_out 2> /dev/null") == 2);

  // Missing required arguments are a usage error from the parser itself.
  CHECK(run_cli("run 2> /dev/null") != 0);
  std::remove(bad.c_str());
  fs::remove_all("/tmp/icon_cli_bad_out");
}
