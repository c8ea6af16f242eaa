#include "icon/runner.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace icon {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

json config_to_json(const RunConfig& cfg) {
  json j;
  j["dataset"] = {{"source", cfg.dataset.source},
                  {"num_classes", cfg.dataset.num_classes},
                  {"num_domains", cfg.dataset.num_domains},
                  {"feature_dim", cfg.dataset.feature_dim},
                  {"per_cell", cfg.dataset.per_cell},
                  {"shift_strength", cfg.dataset.shift_strength},
                  {"noise_sigma", cfg.dataset.noise_sigma},
                  {"test_fraction", cfg.dataset.test_fraction}};
  if (cfg.dataset.source == "csv") j["dataset"]["csv_path"] = cfg.dataset.csv_path;
  j["model"] = {{"backbone_layers", cfg.model.backbone_layers},
                {"hidden_dim", cfg.model.hidden_dim},
                {"adapter_layer_count", resolved_adapter_layers(cfg)},
                {"adapter_rank", cfg.model.adapter_rank},
                {"ema_decay", cfg.model.ema_decay}};
  j["trainer"] = {{"epochs_total", cfg.trainer.epochs_total},
                  {"warmup_epochs", cfg.trainer.warmup_epochs},
                  {"learning_rate", cfg.trainer.learning_rate},
                  {"adam_beta1", cfg.trainer.adam_beta1},
                  {"adam_beta2", cfg.trainer.adam_beta2},
                  {"adam_eps", cfg.trainer.adam_eps},
                  {"batch_size", cfg.trainer.batch_size},
                  {"alpha", cfg.trainer.alpha},
                  {"beta", cfg.trainer.beta},
                  {"gamma", cfg.trainer.gamma},
                  {"k_clusters", resolve_k_clusters(cfg.trainer, task_count(cfg))},
                  {"shifts_per_task", cfg.trainer.shifts_per_task},
                  {"const_threshold", cfg.trainer.const_threshold},
                  {"cast_enabled", cfg.trainer.cast_enabled},
                  {"ic_enabled", cfg.trainer.ic_enabled},
                  {"dynamic_threshold_enabled", cfg.trainer.dynamic_threshold_enabled}};
  j["scenario"] = {{"kind", stream_kind_name(cfg.scenario.kind)},
                   {"classes_per_task", cfg.scenario.classes_per_task},
                   {"seed", cfg.scenario.seed}};
  j["run"] = {{"seeds", cfg.run.seeds},
              {"out_dir", cfg.run.out_dir},
              {"emit_shift_pool", cfg.run.emit_shift_pool},
              {"emit_node_report", cfg.run.emit_node_report}};
  return j;
}

DatasetIndex build_dataset(const RunConfig& cfg) {
  if (cfg.dataset.source == "csv")
    return DatasetIndex::build(load_csv(cfg.dataset.csv_path, cfg.dataset.feature_dim));
  SynthConfig sc;
  sc.num_classes = cfg.dataset.num_classes;
  sc.num_domains = cfg.dataset.num_domains;
  sc.feature_dim = cfg.dataset.feature_dim;
  sc.per_cell = cfg.dataset.per_cell;
  sc.shift_strength = cfg.dataset.shift_strength;
  sc.noise_sigma = cfg.dataset.noise_sigma;
  sc.test_fraction = cfg.dataset.test_fraction;
  Rng rng = Rng(cfg.scenario.seed).fork("dataset");
  return DatasetIndex::build(synth_dataset(sc, rng));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

std::string render_acc_matrix(const EvalMatrix& m) {
  std::string out;
  for (const std::vector<double>& row : m.rows()) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

std::string render_node_report(const ExperimentResult& res) {
  // Thresholds are gathered per class across every task that evaluated one.
  std::map<int, std::vector<double>> deltas;
  for (const TaskResult& t : res.tasks)
    for (const auto& [c, d] : t.thresholds) deltas[c].push_back(d);

  std::string out = "class_id,node_count,node_id,created_task,created_domain,thresholds\n";
  for (const auto& [c, group] : res.classifier.groups()) {
    std::string joined;
    if (const auto it = deltas.find(c); it != deltas.end()) {
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        if (i) joined += ';';
        joined += format_double(it->second[i]);
      }
    }
    for (const NodeInfo& n : group.nodes) {
      out += std::to_string(c) + ',' + std::to_string(group.nodes.size()) + ',' +
             std::to_string(n.node_id) + ',' + std::to_string(n.created_task) + ',' +
             std::to_string(n.created_domain) + ',' + joined + '\n';
    }
  }
  return out;
}

std::string render_shift_pool(const ShiftPool& pool) {
  std::string out = "pool size " + std::to_string(pool.shifts.size()) + " k " +
                    std::to_string(pool.k_effective()) + "\n";
  for (std::size_t i = 0; i < pool.shifts.size(); ++i) {
    const ShiftVector& s = pool.shifts[i];
    out += "shift task=" + std::to_string(s.task_id) +
           " snapshot=" + std::to_string(s.snapshot_idx) +
           " assignment=" + std::to_string(pool.assignments.at(i)) +
           " norm=" + format_double(norm(s.values)) +
           " zero=" + (s.zero_shift ? "1" : "0") + "\n";
    out += "values";
    for (const double v : s.values) out += ' ' + format_double(v);
    out += '\n';
  }
  return out;
}

json summary_to_json(const RunConfig& cfg, std::uint64_t seed,
                     const ExperimentResult& res) {
  json j;
  j["seed"] = seed;
  j["num_tasks"] = res.matrix.tasks();
  j["average_accuracy"] = res.summary.average_accuracy;
  j["forgetting"] = res.summary.forgetting;
  j["total_nodes"] = res.summary.total_nodes;
  j["total_expansions"] = res.summary.total_expansions;
  j["pool_size"] = res.summary.pool_size;
  j["k_effective"] = res.summary.k_effective;
  j["config"] = config_to_json(cfg);
  json tasks = json::array();
  for (const TaskResult& t : res.tasks) {
    json tj;
    tj["task"] = t.task_index;
    tj["expanded_classes"] = t.expanded_classes;
    tj["final_shift_norm"] = t.final_shift_norm;
    tj["steps"] = t.steps;
    json accs = json::object();
    for (const auto& [c, a] : t.train_accuracy) accs[std::to_string(c)] = a;
    tj["train_accuracy"] = accs;
    tasks.push_back(tj);
  }
  j["tasks"] = tasks;
  return j;
}

ExperimentResult run_one_seed(const RunConfig& cfg, const DatasetIndex& data,
                              std::uint64_t seed) {
  Rng stream_rng = Rng(seed).fork("stream");
  const TaskStream stream =
      generate_stream(cfg.scenario.kind, cfg.dataset.num_classes,
                      cfg.dataset.num_domains, cfg.scenario.classes_per_task, stream_rng);
  ModelConfig mc = cfg.model;
  mc.adapter_layer_count = resolved_adapter_layers(cfg);
  return run_experiment(stream, data, mc, cfg.trainer, seed);
}

void write_seed_outputs(const RunConfig& cfg, std::uint64_t seed,
                        const ExperimentResult& res) {
  const fs::path dir = fs::path(cfg.run.out_dir) / ("seed_" + std::to_string(seed));
  fs::create_directories(dir);
  write_text(dir / "summary.json", summary_to_json(cfg, seed, res).dump(2) + "\n");
  write_text(dir / "acc_matrix.csv", render_acc_matrix(res.matrix));
  if (cfg.run.emit_node_report)
    write_text(dir / "node_report.csv", render_node_report(res));
  if (cfg.run.emit_shift_pool)
    write_text(dir / "shift_pool.txt", render_shift_pool(res.pool));
}

int worker_count() {
  const char* env = std::getenv("ICON_WORKERS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n > 0 ? n : 1;
}

struct AggregateStats {
  double acc_mean = 0.0, acc_std = 0.0;
  double forget_mean = 0.0, forget_std = 0.0;
};

// Mean and sample standard deviation (n - 1); zero spread for one seed.
AggregateStats aggregate(const std::vector<SeedOutcome>& outcomes) {
  AggregateStats st;
  const double n = double(outcomes.size());
  for (const SeedOutcome& o : outcomes) {
    st.acc_mean += o.average_accuracy;
    st.forget_mean += o.forgetting;
  }
  st.acc_mean /= n;
  st.forget_mean /= n;
  if (outcomes.size() > 1) {
    double va = 0.0, vf = 0.0;
    for (const SeedOutcome& o : outcomes) {
      va += (o.average_accuracy - st.acc_mean) * (o.average_accuracy - st.acc_mean);
      vf += (o.forgetting - st.forget_mean) * (o.forgetting - st.forget_mean);
    }
    st.acc_std = std::sqrt(va / (n - 1.0));
    st.forget_std = std::sqrt(vf / (n - 1.0));
  }
  return st;
}

}  // namespace

std::vector<SeedOutcome> cmd_run(const RunConfig& cfg) {
  validate_config(cfg);
  const DatasetIndex data = build_dataset(cfg);

  std::vector<SeedOutcome> outcomes(cfg.run.seeds.size());
  const int workers =
      std::min<int>(worker_count(), int(cfg.run.seeds.size()));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string error_text;
  std::mutex error_mutex;

  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.run.seeds.size() || failed.load()) return;
      try {
        const std::uint64_t seed = cfg.run.seeds[i];
        const ExperimentResult res = run_one_seed(cfg, data, seed);
        write_seed_outputs(cfg, seed, res);
        outcomes[i] = {seed, res.summary.average_accuracy, res.summary.forgetting};
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        failed.store(true);
        try {
          throw;
        } catch (const std::exception& e) {
          error_text = e.what();
        }
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw DataCoverageError(error_text);

  const AggregateStats st = aggregate(outcomes);
  json agg;
  agg["num_seeds"] = outcomes.size();
  agg["average_accuracy"] = {{"mean", st.acc_mean}, {"stddev", st.acc_std}};
  agg["forgetting"] = {{"mean", st.forget_mean}, {"stddev", st.forget_std}};
  json per_seed = json::array();
  for (const SeedOutcome& o : outcomes) {
    per_seed.push_back({{"seed", o.seed},
                        {"average_accuracy", o.average_accuracy},
                        {"forgetting", o.forgetting}});
  }
  agg["per_seed"] = per_seed;
  fs::create_directories(cfg.run.out_dir);
  write_text(fs::path(cfg.run.out_dir) / "aggregate.json", agg.dump(2) + "\n");
  return outcomes;
}

void cmd_ablation(const RunConfig& cfg) {
  validate_config(cfg);
  struct Variant {
    const char* label;
    bool cast, ic, dt;
  };
  const Variant variants[] = {
      {"baseline", false, false, true},
      {"cast", true, false, true},
      {"ic", false, true, true},
      {"icon", true, true, true},
      {"icon_no_dt", true, true, false},
  };

  std::string table = "config,avg_acc_mean,avg_acc_std,forgetting_mean,forgetting_std\n";
  for (const Variant& v : variants) {
    RunConfig vcfg = cfg;
    vcfg.trainer.cast_enabled = v.cast;
    vcfg.trainer.ic_enabled = v.ic;
    vcfg.trainer.dynamic_threshold_enabled = v.dt;
    vcfg.run.out_dir = (fs::path(cfg.run.out_dir) / v.label).string();
    const std::vector<SeedOutcome> outcomes = cmd_run(vcfg);
    const AggregateStats st = aggregate(outcomes);
    table += std::string(v.label) + ',' + format_double(st.acc_mean) + ',' +
             format_double(st.acc_std) + ',' + format_double(st.forget_mean) + ',' +
             format_double(st.forget_std) + '\n';
  }
  fs::create_directories(cfg.run.out_dir);
  write_text(fs::path(cfg.run.out_dir) / "ablation.csv", table);
  std::cout << table;
}

void cmd_validate(const RunConfig& cfg) {
  validate_config(cfg);
  std::cout << config_to_json(cfg).dump(2) << '\n';
  std::cout << "tasks: " << task_count(cfg) << '\n';
  std::cout << "node-bound: " << node_count_bound(cfg) << '\n';
  std::cout << "shift-length: " << shift_vector_length(cfg) << '\n';
  std::cout << "k-clusters: " << resolve_k_clusters(cfg.trainer, task_count(cfg)) << '\n';
}

}  // namespace icon
