#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icon/model.hpp"
#include "icon/scenario.hpp"
#include "icon/trainer.hpp"

namespace icon {

struct DatasetConfig {
  std::string source = "synth";  // "synth" or "csv"
  std::string csv_path;
  int num_classes = 10;
  int num_domains = 4;
  int feature_dim = 16;
  int per_cell = 60;
  double shift_strength = 0.6;
  double noise_sigma = 0.35;
  double test_fraction = 0.25;
};

struct ScenarioConfig {
  StreamKind kind = StreamKind::VIL;
  int classes_per_task = 2;
  std::uint64_t seed = 1234;  // dataset geometry seed, shared by every run
};

struct RunSection {
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  bool emit_shift_pool = false;
  bool emit_node_report = false;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainerConfig trainer;
  ScenarioConfig scenario;
  RunSection run;
};

// Reads a JSON config file. Unknown keys are rejected; every error names the
// offending field path. Cross-field constraints are checked here too.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);
void validate_config(const RunConfig& cfg);

StreamKind parse_stream_kind(const std::string& name);  // throws ConfigError
std::string stream_kind_name(StreamKind kind);

// Derived quantities used by reports and `validate`.
int task_count(const RunConfig& cfg);
int node_count_bound(const RunConfig& cfg);
int shift_vector_length(const RunConfig& cfg);
int resolved_adapter_layers(const RunConfig& cfg);

}  // namespace icon
