#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "icon/model.hpp"
#include "icon/numerics.hpp"
#include "icon/scenario.hpp"

namespace icon {

// ==== dynamic threshold =====================================================

struct ThresholdResult {
  double p = 0.0;      // gamma * (mean_prev - acc_new) / mean_prev
  double delta = 0.0;  // tanh(p)
};

// Gap between a class's historical accuracy and its warmup accuracy in the
// incoming domain, squashed to (-1, 1). Throws ZeroHistoryMean when there is
// no usable history (empty or zero-mean prev_accs).
ThresholdResult compute_threshold(const std::vector<double>& prev_accs,
                                  double acc_new, double gamma);

// ==== node bookkeeping ======================================================

struct NodeInfo {
  int node_id = 0;  // head row id
  int created_task = 0;
  int created_domain = 0;  // kAllDomains for pooled tasks
};

struct NodeGroup {
  int class_id = 0;
  std::vector<NodeInfo> nodes;  // in creation order
};

// End-of-task training accuracy per (class, domain); pooled tasks record
// under kAllDomains.
struct AccuracyHistory {
  std::map<std::pair<int, int>, double> table;

  void record(int class_id, int domain_id, double acc);
  // Every recorded accuracy of the class outside the given domain.
  std::vector<double> accs_excluding_domain(int class_id, int domain_id) const;
};

// What the current task changed: classes it introduced and nodes it added
// by expansion. Drives node selection until the task ends.
struct TaskContext {
  int task_index = 0;
  int domain_id = 0;
  std::vector<int> class_ids;
  std::set<int> fresh_classes;        // first seen in this task
  std::map<int, int> expanded_node;   // class -> node id added this task
};

// Per-sample node choice for the current task's classes.
struct SelectionPlan {
  std::vector<int> class_ids;   // task order
  std::vector<int> chosen;      // node id per class
  std::vector<bool> expanded;   // class expanded in this task
  std::vector<int> frozen;      // existing nodes of expanded classes

  int index_of(int class_id) const;
};

// ==== incremental classifier ================================================

struct ExpansionReport {
  std::map<int, double> delta;     // thresholds computed per revisited class
  std::vector<int> expanded;       // classes that received a new node
};

class IncrementalClassifier {
 public:
  bool has_class(int class_id) const { return groups_.count(class_id) > 0; }
  const std::map<int, NodeGroup>& groups() const { return groups_; }
  AccuracyHistory& history() { return history_; }
  const AccuracyHistory& history() const { return history_; }
  int total_nodes() const;

  // Appends a zero row for a class never seen before.
  int add_fresh_node(ClassifierHead& head, int class_id, int task_index, int domain_id);

  // Post-warmup expansion pass. A revisited class expands when its warmup
  // accuracy falls below the threshold (dynamic tanh gap, or a constant when
  // dynamic thresholding is off). Classes first seen this task and classes
  // without usable history are skipped. Appends head rows and records the
  // additions in `ctx.expanded_node`.
  ExpansionReport decide_expansions(ClassifierHead& head, TaskContext& ctx,
                                    const std::map<int, double>& warmup_accs,
                                    double gamma, bool dynamic_threshold,
                                    double const_threshold);

 private:
  std::map<int, NodeGroup> groups_;
  AccuracyHistory history_;
};

// ==== selection, loss, prediction ===========================================

// One logit per current-task class. For a class expanded this task the new
// node is chosen and its older nodes are frozen out of the cross-entropy;
// otherwise the node with the largest raw logit wins (ties to the oldest).
std::pair<Vec, SelectionPlan> select_logits(const Vec& raw_logits,
                                            const IncrementalClassifier& clf,
                                            const TaskContext& ctx);

struct IcLossResult {
  double loss = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  Vec grad_raw_logits;
};

// Cross-entropy over the plan's chosen logits plus alpha-weighted
// distillation toward the previous-task teacher. The distilled set D holds
// the teacher-era nodes the plan did not choose; with `distill_all` set it
// holds every teacher-era node (used by the plain fine-tuning baseline).
// Frozen rows receive no cross-entropy gradient.
IcLossResult ic_loss(const Vec& raw_logits, const SelectionPlan& plan,
                     const std::optional<Vec>& teacher_logits, int label_class,
                     double alpha, bool distill_all = false);

// Group-max per class on both logit vectors, elementwise-max ensemble,
// argmax over classes (ties to the lowest class id).
int predict(const Vec& raw_online, const Vec& raw_ema,
            const IncrementalClassifier& clf);

// Same decision from a single logit vector (no ensemble).
int predict_single(const Vec& raw_logits, const IncrementalClassifier& clf);

// Writes the task's end-of-task per-class accuracies into the history under
// the task's domain (kAllDomains for pooled tasks).
void record_task_accuracies(AccuracyHistory& history, const TaskSpec& task,
                            const std::map<int, double>& accs);

}  // namespace icon
