#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "icon/numerics.hpp"
#include "icon/rng.hpp"

namespace icon {

// Domain id used for tasks that pool samples over every domain (class-
// incremental streams). Never a valid per-sample domain id.
inline constexpr int kAllDomains = -1;

struct Sample {
  Vec features;
  int class_id = 0;
  int domain_id = 0;
};

// All samples of one (class, domain) pair, already split.
struct DatasetCell {
  int class_id = 0;
  int domain_id = 0;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct TaskSpec {
  int task_index = 0;
  int domain_id = 0;  // kAllDomains when the task pools every domain
  std::vector<int> class_ids;
};

enum class StreamKind { CIL, DIL, VIL, CDIL };

struct TaskStream {
  StreamKind kind = StreamKind::VIL;
  std::vector<TaskSpec> tasks;
};

// ==== synthetic data ========================================================

struct SynthConfig {
  int num_classes = 10;
  int num_domains = 4;
  int feature_dim = 16;
  int per_cell = 60;
  double shift_strength = 0.6;
  double noise_sigma = 0.35;
  double test_fraction = 0.25;
};

// A domain is a fixed orthogonal rotation plus a translation. At strength 0
// the transform is the exact identity; strength interpolates the rotation
// along a geodesic in SO(n) and scales the translation length.
struct DomainTransform {
  Matrix rotation;
  Vec translation;
  bool is_identity = false;
};

std::vector<DomainTransform> make_domain_transforms(int num_domains, int dim,
                                                    double shift_strength, Rng& rng);

// Gaussian class prototypes pushed through per-domain transforms:
//   x = R_d (mu_c + eps) + t_d,  eps ~ N(0, noise_sigma^2 I).
// Produces one cell per (class, domain) pair with disjoint train/test splits.
std::vector<DatasetCell> synth_dataset(const SynthConfig& cfg, Rng& rng);

// ==== task streams ==========================================================

// Classes are partitioned into groups of `classes_per_task` consecutive ids.
//   CIL : one task per class group, domains pooled.
//   DIL : one task per domain, all classes.
//   VIL : every (group, domain) cell, visited in a seeded random order.
//   CDIL: min(groups, domains) tasks, group i paired with domain i.
// Only VIL consumes the rng.
TaskStream generate_stream(StreamKind kind, int num_classes, int num_domains,
                           int classes_per_task, Rng& rng);

// ==== csv import ============================================================

// Rows: class_id,domain_id,split,f_0,...,f_{dim-1} with split in
// {train, test}. A first line whose leading field is not an integer is
// treated as a header. Cells are emitted sorted by (class_id, domain_id).
std::vector<DatasetCell> load_csv(const std::string& path, int dim);

// ==== dataset index =========================================================

// Cells plus lookup tables; the handle the trainer works against.
class DatasetIndex {
 public:
  static DatasetIndex build(std::vector<DatasetCell> cells);

  int feature_dim() const { return feature_dim_; }
  const std::vector<DatasetCell>& cells() const { return cells_; }
  const std::set<int>& class_ids() const { return class_ids_; }
  const std::set<int>& domain_ids() const { return domain_ids_; }

  // Gathers the task's samples. For a pooled task every available domain of
  // each class contributes; for a fixed domain the exact cell must exist.
  // Throws DataCoverageError when a required cell is missing or empty.
  std::vector<const Sample*> train_samples(const TaskSpec& task) const;
  std::vector<const Sample*> test_samples(const TaskSpec& task) const;

 private:
  std::vector<const Sample*> gather(const TaskSpec& task, bool train) const;

  std::vector<DatasetCell> cells_;
  std::map<std::pair<int, int>, int> by_key_;
  std::set<int> class_ids_;
  std::set<int> domain_ids_;
  int feature_dim_ = 0;
};

}  // namespace icon
