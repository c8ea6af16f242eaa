#include "icon/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icon {

// ==== configuration =========================================================

void validate(const TrainerConfig& cfg) {
  if (cfg.epochs_total < 1) throw ConfigError("trainer.epochs_total must be >= 1");
  if (cfg.warmup_epochs < 0 || cfg.warmup_epochs >= cfg.epochs_total)
    throw ConfigError("trainer.warmup_epochs must lie in [0, epochs_total)");
  if (cfg.learning_rate <= 0.0) throw ConfigError("trainer.learning_rate must be > 0");
  if (cfg.adam_beta1 < 0.0 || cfg.adam_beta1 >= 1.0 || cfg.adam_beta2 < 0.0 ||
      cfg.adam_beta2 >= 1.0)
    throw ConfigError("trainer.adam betas must lie in [0, 1)");
  if (cfg.adam_eps <= 0.0) throw ConfigError("trainer.adam_eps must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("trainer.batch_size must be >= 1");
  if (cfg.alpha < 0.0) throw ConfigError("trainer.alpha must be >= 0");
  if (cfg.beta < 0.0) throw ConfigError("trainer.beta must be >= 0");
  if (cfg.gamma <= 0.0) throw ConfigError("trainer.gamma must be > 0");
  if (cfg.k_clusters < 0) throw ConfigError("trainer.k_clusters must be >= 0");
  if (cfg.shifts_per_task < 1) throw ConfigError("trainer.shifts_per_task must be >= 1");
}

int resolve_k_clusters(const TrainerConfig& cfg, int num_tasks) {
  if (cfg.k_clusters > 0) return cfg.k_clusters;
  return num_tasks <= 20 ? 2 : 3;
}

// ==== optimizer =============================================================

Adam::Adam(double lr, double beta1, double beta2, double eps, std::size_t size)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::grow(std::size_t size) {
  if (size < m_.size()) throw ConfigError("Adam::grow: parameter count shrank");
  m_.resize(size, 0.0);
  v_.resize(size, 0.0);
}

void Adam::step(Vec& params, const Vec& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw ShapeMismatch("Adam::step: size mismatch");
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, double(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, double(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

// ==== flat parameter view ===================================================

namespace {

// Canonical trainable layout: [adapter flat | head row 0 w,b | row 1 w,b ...].
Vec gather_params(const Model& m) {
  Vec flat = m.adapters.flatten();
  flat.reserve(flat.size() + std::size_t(m.head.rows()) * (m.head.feature_dim + 1));
  for (int r = 0; r < m.head.rows(); ++r) {
    flat.insert(flat.end(), m.head.row_w[r].begin(), m.head.row_w[r].end());
    flat.push_back(m.head.row_b[r]);
  }
  return flat;
}

void scatter_params(const Vec& flat, Model& m) {
  const std::size_t asz = m.adapters.flat_size();
  m.adapters.unflatten(Vec(flat.begin(), flat.begin() + asz));
  std::size_t pos = asz;
  for (int r = 0; r < m.head.rows(); ++r) {
    std::copy_n(flat.begin() + pos, m.head.feature_dim, m.head.row_w[r].begin());
    pos += m.head.feature_dim;
    m.head.row_b[r] = flat[pos++];
  }
}

void accumulate_head_grad(Vec& flat, std::size_t head_offset, int feature_dim,
                          const HeadGrad& hg) {
  std::size_t pos = head_offset;
  for (std::size_t r = 0; r < hg.w.size(); ++r) {
    for (int c = 0; c < feature_dim; ++c) flat[pos + c] += hg.w[r][c];
    pos += feature_dim;
    flat[pos++] += hg.b[r];
  }
}

std::map<int, double> per_class_accuracy(const TrainState& state,
                                         const std::vector<const Sample*>& samples,
                                         const std::vector<int>& class_ids) {
  std::map<int, int> correct, total;
  for (const int c : class_ids) {
    correct[c] = 0;
    total[c] = 0;
  }
  for (const Sample* s : samples) {
    const auto it = total.find(s->class_id);
    if (it == total.end()) continue;
    const ForwardResult fr =
        forward(state.model.backbone, state.model.adapters, state.model.head, s->features);
    if (predict_single(fr.logits, state.classifier) == s->class_id)
      ++correct[s->class_id];
    ++it->second;
  }
  std::map<int, double> accs;
  for (const int c : class_ids)
    accs[c] = total[c] > 0 ? double(correct[c]) / double(total[c]) : 0.0;
  return accs;
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

}  // namespace

// ==== training ==============================================================

TaskResult train_task(TrainState& state, const TaskSpec& task,
                      const DatasetIndex& data, const TrainerConfig& cfg,
                      Rng& train_rng, Rng& cluster_rng) {
  validate(cfg);
  Model& model = state.model;
  const std::vector<const Sample*> train_set = data.train_samples(task);

  TaskContext ctx;
  ctx.task_index = task.task_index;
  ctx.domain_id = task.domain_id;
  ctx.class_ids = task.class_ids;
  for (const int c : task.class_ids) {
    if (!state.classifier.has_class(c)) {
      state.classifier.add_fresh_node(model.head, c, task.task_index, task.domain_id);
      ctx.fresh_classes.insert(c);
    }
  }

  const std::size_t adapter_size = model.adapters.flat_size();
  Adam opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
           gather_params(model).size());

  TaskResult result;
  result.task_index = task.task_index;

  // -- warmup: head only, cross-entropy over the nodes that already exist --
  const int n = int(train_set.size());
  for (int epoch = 0; epoch < cfg.warmup_epochs; ++epoch) {
    double epoch_loss = 0.0;
    int epoch_samples = 0;
    for (const std::vector<int>& batch : make_batches(n, cfg.batch_size, train_rng)) {
      Vec params = gather_params(model);
      Vec grad(params.size(), 0.0);
      for (const int si : batch) {
        const Sample& s = *train_set[si];
        const ForwardResult fr = forward(model.backbone, model.adapters, model.head, s.features);
        const auto [class_logits, plan] = select_logits(fr.logits, state.classifier, ctx);
        const int pos = plan.index_of(s.class_id);
        const LossResult ce = softmax_cross_entropy(class_logits, pos);
        Vec grad_raw(fr.logits.size(), 0.0);
        for (std::size_t i = 0; i < plan.chosen.size(); ++i)
          grad_raw[plan.chosen[i]] += ce.grad[i];
        const BackwardResult back =
            backward(model.backbone, model.adapters, model.head, fr.cache, grad_raw);
        accumulate_head_grad(grad, adapter_size, model.head.feature_dim, back.head_grad);
        epoch_loss += ce.loss;
      }
      epoch_samples += int(batch.size());
      for (double& g : grad) g /= double(batch.size());
      // Adapters stay frozen through warmup: their grad block is still zero.
      opt.step(params, grad);
      scatter_params(params, model);
    }
    result.warmup_loss.push_back(epoch_samples ? epoch_loss / epoch_samples : 0.0);
  }

  // -- phase boundary: expansion decisions from warmup accuracies --
  const std::map<int, double> warmup_accs =
      per_class_accuracy(state, train_set, task.class_ids);
  if (cfg.ic_enabled) {
    const ExpansionReport report = state.classifier.decide_expansions(
        model.head, ctx, warmup_accs, cfg.gamma, cfg.dynamic_threshold_enabled,
        cfg.const_threshold);
    result.expanded_classes = report.expanded;
    result.thresholds = report.delta;
    opt.grow(gather_params(model).size());
  }

  // -- joint phase: adapters + head --
  const Vec shift_base = model.adapters.flatten();
  const int joint_epochs = cfg.epochs_total - cfg.warmup_epochs;
  const int batches_per_epoch = n > 0 ? (n + cfg.batch_size - 1) / cfg.batch_size : 0;
  const std::vector<int> milestones =
      milestone_steps(joint_epochs * batches_per_epoch, cfg.shifts_per_task);
  std::vector<Vec> milestone_states;
  int step = 0;

  for (int epoch = 0; epoch < joint_epochs; ++epoch) {
    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (const std::vector<int>& batch : make_batches(n, cfg.batch_size, train_rng)) {
      Vec params = gather_params(model);
      Vec grad(params.size(), 0.0);

      CastResult cast;
      if (cfg.cast_enabled) {
        const Vec v_cur = compute_shift(model.adapters.flatten(), shift_base);
        cast = cast_loss(v_cur, state.pool);
      }

      double batch_ic = 0.0;
      for (const int si : batch) {
        const Sample& s = *train_set[si];
        const ForwardResult fr = forward(model.backbone, model.adapters, model.head, s.features);
        const auto [class_logits, plan] = select_logits(fr.logits, state.classifier, ctx);
        std::optional<Vec> teacher_logits;
        if (state.teacher) {
          teacher_logits =
              forward(model.backbone, state.teacher->adapters, state.teacher->head, s.features)
                  .logits;
        }
        const IcLossResult ic = ic_loss(fr.logits, plan, teacher_logits, s.class_id,
                                        cfg.alpha, /*distill_all=*/!cfg.ic_enabled);
        const BackwardResult back =
            backward(model.backbone, model.adapters, model.head, fr.cache, ic.grad_raw_logits);
        for (std::size_t i = 0; i < adapter_size; ++i) grad[i] += back.adapter_grad[i];
        accumulate_head_grad(grad, adapter_size, model.head.feature_dim, back.head_grad);
        batch_ic += ic.loss;
      }
      for (double& g : grad) g /= double(batch.size());
      if (cfg.cast_enabled)
        for (std::size_t i = 0; i < adapter_size; ++i) grad[i] += cfg.beta * cast.grad[i];

      opt.step(params, grad);
      scatter_params(params, model);
      ema_update(model.ema, model.adapters);

      ++step;
      for (const int m : milestones)
        if (m == step) milestone_states.push_back(model.adapters.flatten());

      epoch_loss += cfg.beta * cast.loss + batch_ic / double(batch.size());
      ++epoch_batches;
    }
    result.joint_loss.push_back(epoch_batches ? epoch_loss / epoch_batches : 0.0);
  }
  result.steps = step;

  // -- task end: history, teacher, shift pool --
  result.train_accuracy = per_class_accuracy(state, train_set, task.class_ids);
  record_task_accuracies(state.classifier.history(), task, result.train_accuracy);
  state.teacher = TeacherSnapshot{model.adapters, model.head};

  while (int(milestone_states.size()) < cfg.shifts_per_task)
    milestone_states.push_back(model.adapters.flatten());
  snapshot_task_shifts(state.pool, shift_base, milestone_states, task.task_index,
                       cluster_rng);
  result.final_shift_norm =
      norm(compute_shift(model.adapters.flatten(), shift_base));
  return result;
}

// ==== experiments ===========================================================

ExperimentResult run_experiment(const TaskStream& stream, const DatasetIndex& data,
                                const ModelConfig& model_cfg,
                                const TrainerConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (stream.tasks.empty()) throw ConfigError("run_experiment: empty task stream");

  Rng root(seed);
  Rng model_rng = root.fork("model-init");
  Rng train_rng = root.fork("batch-order");
  Rng cluster_rng = root.fork("clustering");

  TrainState state;
  state.model = make_model(model_cfg, data.feature_dim(), model_rng);
  state.pool.k_configured = resolve_k_clusters(cfg, int(stream.tasks.size()));
  state.pool.shifts_per_task = cfg.shifts_per_task;

  ExperimentResult out;
  for (int t = 0; t < int(stream.tasks.size()); ++t) {
    const TaskSpec& task = stream.tasks[t];
    out.tasks.push_back(train_task(state, task, data, cfg, train_rng, cluster_rng));

    std::vector<double> row;
    for (int i = 0; i <= t; ++i) {
      const std::vector<const Sample*> test_set = data.test_samples(stream.tasks[i]);
      int correct = 0;
      for (const Sample* s : test_set) {
        const ForwardResult online =
            forward(state.model.backbone, state.model.adapters, state.model.head, s->features);
        const ForwardResult ema =
            forward(state.model.backbone, state.model.ema.params, state.model.head, s->features);
        if (predict(online.logits, ema.logits, state.classifier) == s->class_id) ++correct;
      }
      row.push_back(test_set.empty() ? 0.0 : double(correct) / double(test_set.size()));
    }
    out.matrix.append_row(std::move(row));
  }

  const int num_tasks = int(stream.tasks.size());
  out.summary.average_accuracy = average_accuracy(out.matrix, num_tasks);
  out.summary.forgetting = forgetting(out.matrix, num_tasks);
  out.summary.total_nodes = state.classifier.total_nodes();
  for (const TaskResult& t : out.tasks)
    out.summary.total_expansions += int(t.expanded_classes.size());
  out.summary.pool_size = int(state.pool.shifts.size());
  out.summary.k_effective = state.pool.k_effective();
  out.classifier = state.classifier;
  out.pool = std::move(state.pool);
  return out;
}

}  // namespace icon
