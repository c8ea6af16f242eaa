#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "icon/cast.hpp"
#include "icon/classifier.hpp"
#include "icon/metrics.hpp"
#include "icon/model.hpp"
#include "icon/scenario.hpp"

namespace icon {

// ==== configuration =========================================================

struct TrainerConfig {
  int epochs_total = 5;
  int warmup_epochs = 3;
  double learning_rate = 0.0028125;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 24;
  double alpha = 1.0;  // distillation weight
  double beta = 0.05;  // shift-alignment weight
  double gamma = 2.0;  // threshold sharpness
  int k_clusters = 0;  // 0 = auto: 2 for streams up to 20 tasks, else 3
  int shifts_per_task = 1;
  double const_threshold = 0.5;  // used when dynamic thresholding is off
  bool cast_enabled = true;
  bool ic_enabled = true;
  bool dynamic_threshold_enabled = true;
};

// Throws ConfigError on out-of-range values.
void validate(const TrainerConfig& cfg);

int resolve_k_clusters(const TrainerConfig& cfg, int num_tasks);

// ==== optimizer =============================================================

// Adam over one flat parameter vector. The vector may grow between steps
// (appended head rows); new slots start with zero moments.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps, std::size_t size);

  void grow(std::size_t size);
  void step(Vec& params, const Vec& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  Vec m_, v_;
};

// ==== training ==============================================================

struct TeacherSnapshot {
  AdapterSet adapters;
  ClassifierHead head;
};

// Everything train_task mutates across a stream.
struct TrainState {
  Model model;
  IncrementalClassifier classifier;
  ShiftPool pool;
  std::optional<TeacherSnapshot> teacher;
};

struct TaskResult {
  int task_index = 0;
  std::map<int, double> train_accuracy;  // per class, end of task
  std::vector<int> expanded_classes;
  std::map<int, double> thresholds;      // per revisited class
  double final_shift_norm = 0.0;
  std::vector<double> warmup_loss;       // per-epoch mean cross-entropy
  std::vector<double> joint_loss;        // per-epoch mean total objective
  int steps = 0;
};

// Two-phase protocol. Warmup: adapters frozen, cross-entropy over existing
// nodes only. Boundary: warmup accuracies drive node expansion. Joint: Adam
// over adapters + head on beta * shift-alignment + classifier loss, EMA
// updated after every step. Task end: accuracies recorded, teacher
// snapshotted, adapter shift pooled and reclustered. Optimizer state is
// fresh for every task.
TaskResult train_task(TrainState& state, const TaskSpec& task,
                      const DatasetIndex& data, const TrainerConfig& cfg,
                      Rng& train_rng, Rng& cluster_rng);

// ==== experiments ===========================================================

struct RunSummary {
  double average_accuracy = 0.0;
  double forgetting = 0.0;
  int total_nodes = 0;
  int total_expansions = 0;
  int pool_size = 0;
  int k_effective = 0;
};

struct ExperimentResult {
  EvalMatrix matrix;
  std::vector<TaskResult> tasks;
  RunSummary summary;
  IncrementalClassifier classifier;  // final state, for reports
  ShiftPool pool;
};

// Trains the whole stream from a fresh model and fills the lower-triangular
// accuracy matrix; row t is measured with the EMA ensemble right after task
// t. Fully determined by (inputs, seed).
ExperimentResult run_experiment(const TaskStream& stream, const DatasetIndex& data,
                                const ModelConfig& model_cfg,
                                const TrainerConfig& cfg, std::uint64_t seed);

}  // namespace icon
