#include "icon/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace icon {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::string& section,
                         const std::set<std::string>& allowed) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw ConfigError("unknown key: " + (section.empty() ? key : section + "." + key));
  }
}

template <typename T>
void read_field(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for " + section + "." + key);
  }
}

}  // namespace

StreamKind parse_stream_kind(const std::string& name) {
  if (name == "cil") return StreamKind::CIL;
  if (name == "dil") return StreamKind::DIL;
  if (name == "vil") return StreamKind::VIL;
  if (name == "cdil") return StreamKind::CDIL;
  throw ConfigError("scenario.kind must be one of cil, dil, vil, cdil (got '" +
                    name + "')");
}

std::string stream_kind_name(StreamKind kind) {
  switch (kind) {
    case StreamKind::CIL: return "cil";
    case StreamKind::DIL: return "dil";
    case StreamKind::VIL: return "vil";
    case StreamKind::CDIL: return "cdil";
  }
  throw BadKind("stream_kind_name: unknown kind");
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");
  reject_unknown_keys(j, "", {"dataset", "model", "trainer", "scenario", "run"});

  RunConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown_keys(d, "dataset",
                        {"source", "csv_path", "num_classes", "num_domains",
                         "feature_dim", "per_cell", "shift_strength", "noise_sigma",
                         "test_fraction"});
    read_field(d, "dataset", "source", cfg.dataset.source);
    read_field(d, "dataset", "csv_path", cfg.dataset.csv_path);
    read_field(d, "dataset", "num_classes", cfg.dataset.num_classes);
    read_field(d, "dataset", "num_domains", cfg.dataset.num_domains);
    read_field(d, "dataset", "feature_dim", cfg.dataset.feature_dim);
    read_field(d, "dataset", "per_cell", cfg.dataset.per_cell);
    read_field(d, "dataset", "shift_strength", cfg.dataset.shift_strength);
    read_field(d, "dataset", "noise_sigma", cfg.dataset.noise_sigma);
    read_field(d, "dataset", "test_fraction", cfg.dataset.test_fraction);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m, "model",
                        {"backbone_layers", "hidden_dim", "adapter_layer_count",
                         "adapter_rank", "ema_decay"});
    read_field(m, "model", "backbone_layers", cfg.model.backbone_layers);
    read_field(m, "model", "hidden_dim", cfg.model.hidden_dim);
    read_field(m, "model", "adapter_layer_count", cfg.model.adapter_layer_count);
    read_field(m, "model", "adapter_rank", cfg.model.adapter_rank);
    read_field(m, "model", "ema_decay", cfg.model.ema_decay);
  }
  if (j.contains("trainer")) {
    const json& t = j.at("trainer");
    reject_unknown_keys(
        t, "trainer",
        {"epochs_total", "warmup_epochs", "learning_rate", "adam_beta1",
         "adam_beta2", "adam_eps", "batch_size", "alpha", "beta", "gamma",
         "k_clusters", "shifts_per_task", "const_threshold", "cast_enabled",
         "ic_enabled", "dynamic_threshold_enabled"});
    read_field(t, "trainer", "epochs_total", cfg.trainer.epochs_total);
    read_field(t, "trainer", "warmup_epochs", cfg.trainer.warmup_epochs);
    read_field(t, "trainer", "learning_rate", cfg.trainer.learning_rate);
    read_field(t, "trainer", "adam_beta1", cfg.trainer.adam_beta1);
    read_field(t, "trainer", "adam_beta2", cfg.trainer.adam_beta2);
    read_field(t, "trainer", "adam_eps", cfg.trainer.adam_eps);
    read_field(t, "trainer", "batch_size", cfg.trainer.batch_size);
    read_field(t, "trainer", "alpha", cfg.trainer.alpha);
    read_field(t, "trainer", "beta", cfg.trainer.beta);
    read_field(t, "trainer", "gamma", cfg.trainer.gamma);
    read_field(t, "trainer", "k_clusters", cfg.trainer.k_clusters);
    read_field(t, "trainer", "shifts_per_task", cfg.trainer.shifts_per_task);
    read_field(t, "trainer", "const_threshold", cfg.trainer.const_threshold);
    read_field(t, "trainer", "cast_enabled", cfg.trainer.cast_enabled);
    read_field(t, "trainer", "ic_enabled", cfg.trainer.ic_enabled);
    read_field(t, "trainer", "dynamic_threshold_enabled",
               cfg.trainer.dynamic_threshold_enabled);
  }
  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    reject_unknown_keys(s, "scenario", {"kind", "classes_per_task", "seed"});
    std::string kind = stream_kind_name(cfg.scenario.kind);
    read_field(s, "scenario", "kind", kind);
    cfg.scenario.kind = parse_stream_kind(kind);
    read_field(s, "scenario", "classes_per_task", cfg.scenario.classes_per_task);
    read_field(s, "scenario", "seed", cfg.scenario.seed);
  }
  if (j.contains("run")) {
    const json& r = j.at("run");
    reject_unknown_keys(r, "run",
                        {"seeds", "out_dir", "emit_shift_pool", "emit_node_report"});
    read_field(r, "run", "seeds", cfg.run.seeds);
    read_field(r, "run", "out_dir", cfg.run.out_dir);
    read_field(r, "run", "emit_shift_pool", cfg.run.emit_shift_pool);
    read_field(r, "run", "emit_node_report", cfg.run.emit_node_report);
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const RunConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  if (d.source != "synth" && d.source != "csv")
    throw ConfigError("dataset.source must be synth or csv");
  if (d.source == "csv" && d.csv_path.empty())
    throw ConfigError("dataset.csv_path required when dataset.source is csv");
  if (d.num_classes < 1) throw ConfigError("dataset.num_classes must be >= 1");
  if (d.num_domains < 1) throw ConfigError("dataset.num_domains must be >= 1");
  if (d.feature_dim < 1) throw ConfigError("dataset.feature_dim must be >= 1");
  if (d.source == "synth") {
    if (d.per_cell < 4) throw ConfigError("dataset.per_cell must be >= 4");
    if (d.shift_strength < 0.0 || d.shift_strength > 1.0)
      throw ConfigError("dataset.shift_strength must lie in [0, 1]");
    if (d.noise_sigma <= 0.0) throw ConfigError("dataset.noise_sigma must be > 0");
    if (d.test_fraction <= 0.0 || d.test_fraction >= 1.0)
      throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  }

  const ModelConfig& m = cfg.model;
  if (m.backbone_layers < 1) throw ConfigError("model.backbone_layers must be >= 1");
  if (m.hidden_dim < 1) throw ConfigError("model.hidden_dim must be >= 1");
  if (m.adapter_layer_count < 0 || m.adapter_layer_count > m.backbone_layers)
    throw ConfigError("model.adapter_layer_count must lie in [0, backbone_layers]");
  if (m.adapter_rank < 1) throw ConfigError("model.adapter_rank must be >= 1");
  if (m.ema_decay < 0.0 || m.ema_decay >= 1.0)
    throw ConfigError("model.ema_decay must lie in [0, 1)");

  try {
    validate(cfg.trainer);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what());
  }

  const ScenarioConfig& s = cfg.scenario;
  if (s.classes_per_task < 1 || d.num_classes % s.classes_per_task != 0)
    throw ConfigError("scenario.classes_per_task must divide dataset.num_classes");

  if (cfg.run.seeds.empty()) throw ConfigError("run.seeds must not be empty");
  if (cfg.run.out_dir.empty()) throw ConfigError("run.out_dir must not be empty");
}

int resolved_adapter_layers(const RunConfig& cfg) {
  if (cfg.model.adapter_layer_count > 0) return cfg.model.adapter_layer_count;
  return (5 * cfg.model.backbone_layers + 11) / 12;
}

int task_count(const RunConfig& cfg) {
  const int groups = cfg.dataset.num_classes / cfg.scenario.classes_per_task;
  switch (cfg.scenario.kind) {
    case StreamKind::CIL: return groups;
    case StreamKind::DIL: return cfg.dataset.num_domains;
    case StreamKind::VIL: return groups * cfg.dataset.num_domains;
    case StreamKind::CDIL: return std::min(groups, cfg.dataset.num_domains);
  }
  throw BadKind("task_count: unknown kind");
}

int node_count_bound(const RunConfig& cfg) {
  if (cfg.scenario.kind == StreamKind::CIL) return cfg.dataset.num_classes;
  return cfg.dataset.num_classes * cfg.dataset.num_domains;
}

int shift_vector_length(const RunConfig& cfg) {
  const int r = cfg.model.adapter_rank;
  const int h = cfg.model.hidden_dim;
  int len = 0;
  for (int l = 0; l < resolved_adapter_layers(cfg); ++l) {
    const int in = l == 0 ? cfg.dataset.feature_dim : h;
    len += r * in + h * r + 1;
  }
  return len;
}

}  // namespace icon
