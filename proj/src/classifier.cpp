#include "icon/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace icon {

// ==== dynamic threshold =====================================================

ThresholdResult compute_threshold(const std::vector<double>& prev_accs,
                                  double acc_new, double gamma) {
  if (prev_accs.empty())
    throw ZeroHistoryMean("compute_threshold: no previous accuracies");
  double mean = 0.0;
  for (const double a : prev_accs) mean += a;
  mean /= double(prev_accs.size());
  if (mean <= 0.0)
    throw ZeroHistoryMean("compute_threshold: history mean is zero");
  ThresholdResult out;
  out.p = gamma * (mean - acc_new) / mean;
  out.delta = std::tanh(out.p);
  return out;
}

// ==== node bookkeeping ======================================================

void AccuracyHistory::record(int class_id, int domain_id, double acc) {
  table[{class_id, domain_id}] = acc;
}

std::vector<double> AccuracyHistory::accs_excluding_domain(int class_id,
                                                           int domain_id) const {
  std::vector<double> out;
  for (const auto& [key, acc] : table) {
    if (key.first == class_id && key.second != domain_id) out.push_back(acc);
  }
  return out;
}

int SelectionPlan::index_of(int class_id) const {
  for (int i = 0; i < int(class_ids.size()); ++i)
    if (class_ids[i] == class_id) return i;
  return -1;
}

// ==== incremental classifier ================================================

int IncrementalClassifier::total_nodes() const {
  int n = 0;
  for (const auto& [c, g] : groups_) n += int(g.nodes.size());
  return n;
}

int IncrementalClassifier::add_fresh_node(ClassifierHead& head, int class_id,
                                          int task_index, int domain_id) {
  const int node = head.append_row();
  NodeGroup& g = groups_[class_id];
  g.class_id = class_id;
  g.nodes.push_back({node, task_index, domain_id});
  return node;
}

ExpansionReport IncrementalClassifier::decide_expansions(
    ClassifierHead& head, TaskContext& ctx,
    const std::map<int, double>& warmup_accs, double gamma,
    bool dynamic_threshold, double const_threshold) {
  ExpansionReport report;
  for (const int c : ctx.class_ids) {
    if (ctx.fresh_classes.count(c)) continue;  // fresh node already in place
    const auto git = groups_.find(c);
    if (git == groups_.end())
      throw MissingGroup("decide_expansions: class has no node group");
    const auto ait = warmup_accs.find(c);
    if (ait == warmup_accs.end())
      throw MissingGroup("decide_expansions: class missing warmup accuracy");
    const double acc_new = ait->second;

    double threshold;
    if (dynamic_threshold) {
      const std::vector<double> prev =
          history_.accs_excluding_domain(c, ctx.domain_id);
      double mean = 0.0;
      for (const double a : prev) mean += a;
      if (!prev.empty()) mean /= double(prev.size());
      if (prev.empty() || mean <= 0.0) continue;  // no usable history
      threshold = compute_threshold(prev, acc_new, gamma).delta;
      report.delta[c] = threshold;
    } else {
      threshold = const_threshold;
      report.delta[c] = threshold;
    }
    if (acc_new < threshold) {
      const int node = head.append_row();
      NodeGroup& g = git->second;
      g.nodes.push_back({node, ctx.task_index, ctx.domain_id});
      ctx.expanded_node[c] = node;
      report.expanded.push_back(c);
    }
  }
  return report;
}

// ==== selection, loss, prediction ===========================================

std::pair<Vec, SelectionPlan> select_logits(const Vec& raw_logits,
                                            const IncrementalClassifier& clf,
                                            const TaskContext& ctx) {
  Vec class_logits;
  SelectionPlan plan;
  for (const int c : ctx.class_ids) {
    const auto git = clf.groups().find(c);
    if (git == clf.groups().end())
      throw MissingGroup("select_logits: class has no node group");
    const NodeGroup& g = git->second;
    const auto eit = ctx.expanded_node.find(c);
    int chosen;
    bool expanded = false;
    if (eit != ctx.expanded_node.end()) {
      // Expanded this task: the new node is trained, the older ones are kept
      // out of the cross-entropy.
      chosen = eit->second;
      expanded = true;
      for (const NodeInfo& n : g.nodes)
        if (n.node_id != chosen) plan.frozen.push_back(n.node_id);
    } else {
      chosen = g.nodes.front().node_id;
      double best = raw_logits.at(chosen);
      for (const NodeInfo& n : g.nodes) {
        if (raw_logits.at(n.node_id) > best) {
          best = raw_logits.at(n.node_id);
          chosen = n.node_id;
        }
      }
    }
    plan.class_ids.push_back(c);
    plan.chosen.push_back(chosen);
    plan.expanded.push_back(expanded);
    class_logits.push_back(raw_logits.at(chosen));
  }
  return {std::move(class_logits), std::move(plan)};
}

IcLossResult ic_loss(const Vec& raw_logits, const SelectionPlan& plan,
                     const std::optional<Vec>& teacher_logits, int label_class,
                     double alpha, bool distill_all) {
  const int pos = plan.index_of(label_class);
  if (pos < 0) throw BadLabel("ic_loss: label is not a current-task class");

  IcLossResult out;
  out.grad_raw_logits.assign(raw_logits.size(), 0.0);

  Vec class_logits(plan.chosen.size());
  for (std::size_t i = 0; i < plan.chosen.size(); ++i)
    class_logits[i] = raw_logits.at(plan.chosen[i]);
  const LossResult ce = softmax_cross_entropy(class_logits, pos);
  out.ce = ce.loss;
  for (std::size_t i = 0; i < plan.chosen.size(); ++i)
    out.grad_raw_logits[plan.chosen[i]] += ce.grad[i];

  if (teacher_logits) {
    const int teacher_rows = int(teacher_logits->size());
    std::vector<int> distilled;
    for (int r = 0; r < teacher_rows; ++r) {
      const bool chosen =
          std::find(plan.chosen.begin(), plan.chosen.end(), r) != plan.chosen.end();
      if (distill_all || !chosen) distilled.push_back(r);
    }
    if (!distilled.empty()) {
      Vec t(distilled.size()), s(distilled.size());
      for (std::size_t i = 0; i < distilled.size(); ++i) {
        t[i] = (*teacher_logits)[distilled[i]];
        s[i] = raw_logits.at(distilled[i]);
      }
      const LossResult kl = kl_divergence(t, s);
      out.kl = kl.loss;
      for (std::size_t i = 0; i < distilled.size(); ++i)
        out.grad_raw_logits[distilled[i]] += alpha * kl.grad[i];
    }
  }
  out.loss = out.ce + alpha * out.kl;
  return out;
}

namespace {

// Largest node logit per class, classes in ascending id order.
std::vector<std::pair<int, double>> group_max(const Vec& raw,
                                              const IncrementalClassifier& clf) {
  std::vector<std::pair<int, double>> out;
  for (const auto& [c, g] : clf.groups()) {
    double best = raw.at(g.nodes.front().node_id);
    for (const NodeInfo& n : g.nodes) best = std::max(best, raw.at(n.node_id));
    out.push_back({c, best});
  }
  return out;
}

int argmax_class(const std::vector<std::pair<int, double>>& class_logits) {
  if (class_logits.empty()) throw EmptyInput("predict: no classes");
  int best_class = class_logits[0].first;
  double best = class_logits[0].second;
  for (const auto& [c, v] : class_logits) {
    if (v > best) {
      best = v;
      best_class = c;
    }
  }
  return best_class;
}

}  // namespace

int predict(const Vec& raw_online, const Vec& raw_ema,
            const IncrementalClassifier& clf) {
  const auto online = group_max(raw_online, clf);
  const auto ema = group_max(raw_ema, clf);
  std::vector<std::pair<int, double>> merged(online.size());
  for (std::size_t i = 0; i < online.size(); ++i)
    merged[i] = {online[i].first, std::max(online[i].second, ema[i].second)};
  return argmax_class(merged);
}

int predict_single(const Vec& raw_logits, const IncrementalClassifier& clf) {
  return argmax_class(group_max(raw_logits, clf));
}

void record_task_accuracies(AccuracyHistory& history, const TaskSpec& task,
                            const std::map<int, double>& accs) {
  for (const int c : task.class_ids) {
    const auto it = accs.find(c);
    if (it == accs.end())
      throw MissingGroup("record_task_accuracies: class missing accuracy");
    history.record(c, task.domain_id, it->second);
  }
}

}  // namespace icon
