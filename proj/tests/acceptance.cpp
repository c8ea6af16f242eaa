// Release gate for the continual-learning stack. Each check prints one
// PASS/FAIL line; the process exits with the number of failed checks.
//
// Numeric tolerances are pinned next to each check on purpose: loosening
// them is a visible diff, not a config tweak.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "icon/cast.hpp"
#include "icon/classifier.hpp"
#include "icon/config.hpp"
#include "icon/metrics.hpp"
#include "icon/model.hpp"
#include "icon/numerics.hpp"
#include "icon/rng.hpp"
#include "icon/runner.hpp"
#include "icon/scenario.hpp"
#include "icon/trainer.hpp"

namespace fs = std::filesystem;
using namespace icon;

namespace {

struct CheckResult {
  bool pass = false;
  std::string note;
};

// ==== 1. analytic gradient of the full training objective ==================
//
// Builds a randomized miniature of the joint phase: a frozen backbone with
// adapters, an expanded classifier, a teacher snapshot, and a clustered
// shift pool. The analytic gradient (reverse pass + distillation + the
// shift-alignment term with its weights and cluster membership held fixed)
// must match central finite differences over every trainable coordinate.
CheckResult check_total_objective_gradient() {
  constexpr double kRelTol = 1e-4;
  constexpr double kAbsFloor = 1e-7;  // errors below this count as zero
  constexpr int kConfigs = 20;

  Rng rng(20260814);
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  const auto started = std::chrono::steady_clock::now();

  for (int trial = 0; trial < kConfigs; ++trial) {
    const int input_dim = 2 + int(rng.next_below(7));   // <= 8
    const int hidden = 2 + int(rng.next_below(7));      // <= 8
    const int layers = 1 + int(rng.next_below(3));      // <= 3
    const int rank = 1 + int(rng.next_below(2));        // <= 2
    const int classes = 2 + int(rng.next_below(3));     // <= 4
    const double alpha = 0.3 + rng.next_double();
    const double beta = 0.1 + 0.4 * rng.next_double();

    Backbone backbone = make_backbone(input_dim, hidden, layers, rng);
    AdapterSet adapters = make_adapters(backbone, layers, rank, rng);
    ClassifierHead head;
    head.feature_dim = hidden;

    IncrementalClassifier clf;
    for (int c = 0; c < classes; ++c) clf.add_fresh_node(head, c, 0, 0);
    for (int c = 0; c < classes; ++c) clf.history().record(c, 0, 0.9);

    // Give every row and the adapters some life before snapshotting the
    // teacher, so distillation targets are non-trivial.
    for (Vec& w : head.row_w)
      for (double& x : w) x = 0.3 * rng.next_gaussian();
    for (double& b : head.row_b) b = 0.1 * rng.next_gaussian();
    {
      Vec flat = adapters.flatten();
      for (double& x : flat) x += 0.05 * rng.next_gaussian();
      adapters.unflatten(flat);
    }
    const AdapterSet teacher_adapters = adapters;
    const ClassifierHead teacher_head = head;

    // Task 1 revisits classes 0 and 1 in a new domain; class 0 collapses in
    // warmup and receives a fresh node, class 1 keeps its old node.
    TaskContext ctx;
    ctx.task_index = 1;
    ctx.domain_id = 1;
    ctx.class_ids = {0, 1};
    std::map<int, double> warmup_accs = {{0, 0.05}, {1, 0.89}};
    clf.decide_expansions(head, ctx, warmup_accs, 2.0, true, 0.5);
    if (ctx.expanded_node.count(0) == 0)
      return {false, "setup: expected class 0 to expand"};

    const Vec start_flat = adapters.flatten();  // joint-phase starting point
    {
      Vec flat = adapters.flatten();
      for (double& x : flat) x += 0.05 * rng.next_gaussian();
      adapters.unflatten(flat);
    }
    for (Vec& w : head.row_w)
      for (double& x : w) x += 0.1 * rng.next_gaussian();
    for (double& b : head.row_b) b += 0.1 * rng.next_gaussian();

    // Clustered pool of recorded movements in the adapter parameter space.
    ShiftPool pool;
    pool.k_configured = 2;
    const int pool_size = 4 + int(rng.next_below(4));
    for (int i = 0; i < pool_size; ++i) {
      ShiftVector sv;
      sv.values.resize(start_flat.size());
      for (double& x : sv.values) x = rng.next_gaussian();
      sv.task_id = i;
      pool.shifts.push_back(std::move(sv));
    }
    recluster(pool, rng);

    // Fixed batch: two samples per task class.
    std::vector<Vec> xs;
    std::vector<int> labels;
    for (int rep = 0; rep < 2; ++rep)
      for (int c : ctx.class_ids) {
        Vec x(input_dim);
        for (double& v : x) v = rng.next_gaussian();
        xs.push_back(std::move(x));
        labels.push_back(c);
      }
    const int batch = int(xs.size());

    std::vector<Vec> teacher_logits;
    for (const Vec& x : xs)
      teacher_logits.push_back(
          forward(backbone, teacher_adapters, teacher_head, x).logits);

    const SelectionPlan plan =
        select_logits(forward(backbone, adapters, head, xs[0]).logits, clf, ctx)
            .second;

    // Flat trainable vector: adapters first, then (w, b) per head row.
    const std::size_t adapter_len = adapters.flat_size();
    const int rows = head.rows();
    const std::size_t total_len =
        adapter_len + std::size_t(rows) * std::size_t(hidden + 1);

    const auto apply = [&](const Vec& z, AdapterSet& a, ClassifierHead& h) {
      a = adapters;
      h = head;
      a.unflatten(Vec(z.begin(), z.begin() + adapter_len));
      std::size_t pos = adapter_len;
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < hidden; ++j) h.row_w[r][j] = z[pos++];
        h.row_b[r] = z[pos++];
      }
    };

    Vec z0(total_len);
    {
      const Vec aflat = adapters.flatten();
      std::copy(aflat.begin(), aflat.end(), z0.begin());
      std::size_t pos = adapter_len;
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < hidden; ++j) z0[pos++] = head.row_w[r][j];
        z0[pos++] = head.row_b[r];
      }
    }

    // Freeze the alignment term's contributing shifts and weights at the
    // evaluation point; the finite-difference objective reuses them so both
    // sides differentiate the same function.
    const Vec v0 = compute_shift(adapters.flatten(), start_flat);
    const CastDetail frozen = cast_loss(v0, pool).detail;

    const auto objective = [&](const Vec& z) {
      AdapterSet a;
      ClassifierHead h;
      apply(z, a, h);
      double total = 0.0;
      for (int s = 0; s < batch; ++s) {
        const ForwardResult fw = forward(backbone, a, h, xs[s]);
        total += ic_loss(fw.logits, plan, teacher_logits[s], labels[s], alpha)
                     .loss;
      }
      total /= batch;
      const Vec v = compute_shift(a.flatten(), start_flat);
      double align = 0.0;
      for (std::size_t j = 0; j < frozen.shift_index.size(); ++j)
        align += frozen.weights[j] *
                 cosine_similarity(v, pool.shifts[frozen.shift_index[j]].values);
      return total + beta * align;
    };

    Vec analytic(total_len, 0.0);
    for (int s = 0; s < batch; ++s) {
      const ForwardResult fw = forward(backbone, adapters, head, xs[s]);
      const IcLossResult ic =
          ic_loss(fw.logits, plan, teacher_logits[s], labels[s], alpha);
      const BackwardResult bw =
          backward(backbone, adapters, head, fw.cache, ic.grad_raw_logits);
      for (std::size_t i = 0; i < adapter_len; ++i)
        analytic[i] += bw.adapter_grad[i] / batch;
      std::size_t pos = adapter_len;
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < hidden; ++j)
          analytic[pos++] += bw.head_grad.w[r][j] / batch;
        analytic[pos++] += bw.head_grad.b[r] / batch;
      }
    }
    const CastResult cr = cast_loss(v0, pool);
    for (std::size_t i = 0; i < adapter_len; ++i)
      analytic[i] += beta * cr.grad[i];

    // A degenerate all-zero gradient would match finite differences for the
    // wrong reason; the objective must actually depend on the parameters.
    if (norm(analytic) <= 1e-3)
      return {false, "trial " + std::to_string(trial) + ": gradient ~ 0"};

    const Vec fd = finite_difference_gradient(objective, z0);
    for (std::size_t i = 0; i < total_len; ++i) {
      const double err = std::abs(fd[i] - analytic[i]);
      worst_abs = std::max(worst_abs, err);
      if (err < kAbsFloor) continue;
      const double rel = err / std::max(std::abs(fd[i]), std::abs(analytic[i]));
      worst_rel = std::max(worst_rel, rel);
      if (rel >= kRelTol) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "trial %d coord %zu: analytic %.3e vs fd %.3e (rel %.2e)",
                      trial, i, analytic[i], fd[i], rel);
        return {false, buf};
      }
    }
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  char buf[112];
  std::snprintf(buf, sizeof buf,
                "max err %.2e abs / %.2e rel over %d configs, %.1f s",
                worst_abs, worst_rel, kConfigs, secs);
  if (secs >= 30.0) return {false, std::string(buf) + " (budget 30 s)"};
  return {true, buf};
}

// ==== 2. shift-alignment loss fixtures ======================================
CheckResult check_alignment_fixtures() {
  constexpr double kFixtureTol = 1e-5;
  constexpr double kWeightTol = 1e-9;
  constexpr double kScaleTol = 1e-12;

  // Hand-derived two-cluster pool: the probe vector (1,0) lands in the
  // empty-side cluster so both stored shifts contribute.
  //   cos with (1,1) = 1/sqrt(2) at distance 1; cos with (-1,0) = -1 at
  //   distance 2  =>  loss = (1/3)/sqrt(2) - 2/3 = -0.4309644062711508.
  ShiftPool fixture;
  fixture.shifts.push_back({{1.0, 1.0}, 0, 0, false});
  fixture.shifts.push_back({{-1.0, 0.0}, 1, 0, false});
  fixture.assignments = {1, 1};
  fixture.centers = {{2.0, 0.0}, {0.0, 0.5}};
  const CastResult hand = cast_loss({1.0, 0.0}, fixture);
  if (std::abs(hand.loss - (-0.4309644062711508)) >= kFixtureTol)
    return {false, "hand fixture loss " + std::to_string(hand.loss)};

  // Empty pool (first task): exactly zero.
  ShiftPool empty;
  if (cast_loss({1.0, 0.0}, empty).loss != 0.0)
    return {false, "empty pool must give exactly 0"};

  // Random pools: weights sum to 1, loss stays in [-1, 1], and the per-term
  // cosines ignore the probe vector's length.
  Rng rng(555);
  int collected = 0;
  for (int attempt = 0; attempt < 1000 && collected < 100; ++attempt) {
    const int dim = 2 + int(rng.next_below(5));
    const int count = 3 + int(rng.next_below(6));
    ShiftPool pool;
    pool.k_configured = 2;
    for (int i = 0; i < count; ++i) {
      ShiftVector sv;
      sv.values.resize(dim);
      for (double& x : sv.values) x = rng.next_gaussian();
      sv.task_id = i;
      pool.shifts.push_back(std::move(sv));
    }
    recluster(pool, rng);
    Vec v(dim);
    for (double& x : v) x = rng.next_gaussian();

    const CastResult res = cast_loss(v, pool);
    if (res.loss < -1.0 || res.loss > 1.0)
      return {false, "loss outside [-1,1]: " + std::to_string(res.loss)};
    if (res.detail.weights.empty()) continue;

    double sum = 0.0;
    for (const double w : res.detail.weights) sum += w;
    if (std::abs(sum - 1.0) >= kWeightTol)
      return {false, "weight sum " + std::to_string(sum)};

    // Scaling the probe vector may move it into another cluster, which
    // changes which shifts contribute; the cosine of every shift that
    // contributes to both evaluations must be untouched by the scaling.
    Vec scaled = v;
    for (double& x : scaled) x *= 37.5;
    const CastResult res2 = cast_loss(scaled, pool);
    std::map<int, double> by_shift;
    for (std::size_t j = 0; j < res.detail.shift_index.size(); ++j)
      by_shift[res.detail.shift_index[j]] = res.detail.cosines[j];
    for (std::size_t j = 0; j < res2.detail.shift_index.size(); ++j) {
      const auto it = by_shift.find(res2.detail.shift_index[j]);
      if (it == by_shift.end()) continue;
      if (std::abs(it->second - res2.detail.cosines[j]) >= kScaleTol)
        return {false, "per-term cosine not scale-invariant"};
    }
    ++collected;
  }
  if (collected < 100)
    return {false, "only " + std::to_string(collected) + " usable pools"};
  return {true, "hand fixture, 100 random pools, scale invariance"};
}

// ==== 3. clustering properties ==============================================
CheckResult check_clustering() {
  constexpr double kMeanTol = 1e-12;
  Rng rng(777);

  // Objective trace of every restart must be non-increasing.
  std::vector<Vec> points;
  for (int i = 0; i < 24; ++i) {
    Vec p(3);
    for (double& x : p) x = rng.next_gaussian();
    points.push_back(std::move(p));
  }
  std::vector<std::vector<double>> trace;
  kmeans(points, 3, rng, 10, 100, &trace);
  if (trace.size() != 10) return {false, "expected one trace per restart"};
  for (const auto& seq : trace)
    for (std::size_t i = 1; i < seq.size(); ++i)
      if (seq[i] > seq[i - 1] + 0.0)
        return {false, "objective increased within a restart"};

  // k = 1: the single center is the sample mean.
  const ClusterResult one = kmeans(points, 1, rng);
  Vec mean(3, 0.0);
  for (const Vec& p : points) axpy(1.0, p, mean);
  for (double& x : mean) x /= double(points.size());
  for (int j = 0; j < 3; ++j)
    if (std::abs(one.centers[0][j] - mean[j]) >= kMeanTol)
      return {false, "k=1 center differs from the mean"};

  // Well-separated four-point set: the returned partition must equal the
  // optimum found by trying every two-cluster split.
  const std::vector<Vec> quad = {
      {0.0, 0.0}, {0.1, 0.0}, {10.0, 10.0}, {10.2, 10.0}};
  const ClusterResult got = kmeans(quad, 2, rng, 10);
  double best_obj = 1e300;
  std::vector<int> best_assign;
  for (int mask = 1; mask < 15; ++mask) {  // skip all-0 / all-1
    Vec c0(2, 0.0), c1(2, 0.0);
    int n0 = 0, n1 = 0;
    for (int i = 0; i < 4; ++i)
      if (mask & (1 << i)) {
        axpy(1.0, quad[i], c1);
        ++n1;
      } else {
        axpy(1.0, quad[i], c0);
        ++n0;
      }
    for (double& x : c0) x /= n0;
    for (double& x : c1) x /= n1;
    double obj = 0.0;
    for (int i = 0; i < 4; ++i) {
      const Vec& c = (mask & (1 << i)) ? c1 : c0;
      for (int j = 0; j < 2; ++j)
        obj += (quad[i][j] - c[j]) * (quad[i][j] - c[j]);
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_assign.clear();
      for (int i = 0; i < 4; ++i) best_assign.push_back((mask >> i) & 1);
    }
  }
  for (int i = 1; i < 4; ++i) {
    const bool same_got = got.assignments[i] == got.assignments[0];
    const bool same_best = best_assign[i] == best_assign[0];
    if (same_got != same_best)
      return {false, "partition differs from the exhaustive optimum"};
  }
  return {true, "monotone restarts, k=1 mean, optimal 4-point split"};
}

// ==== 4. expansion-threshold oracle =========================================
CheckResult check_threshold_oracle() {
  constexpr double kTol = 1e-12;
  Rng rng(4242);

  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + int(rng.next_below(6));
    std::vector<double> prev(n);
    for (double& a : prev) a = 0.05 + 0.95 * rng.next_double();
    const double acc_new = rng.next_double();
    const double gamma = (i % 3 == 0) ? 2.0 : 0.5 + 3.5 * rng.next_double();

    double mean = 0.0;
    for (const double a : prev) mean += a;
    mean /= n;
    const double p = gamma * (mean - acc_new) / mean;
    const double delta = std::tanh(p);

    const ThresholdResult got = compute_threshold(prev, acc_new, gamma);
    if (std::abs(got.p - p) >= kTol || std::abs(got.delta - delta) >= kTol)
      return {false, "triple " + std::to_string(i) + " mismatch"};
  }

  // With dynamic thresholding off the gate is the constant 0.5, exactly.
  for (const double warmup_acc : {0.499, 0.501}) {
    IncrementalClassifier clf;
    ClassifierHead head;
    head.feature_dim = 2;
    clf.add_fresh_node(head, 0, 0, 0);
    clf.history().record(0, 0, 0.9);
    TaskContext ctx;
    ctx.task_index = 1;
    ctx.domain_id = 1;
    ctx.class_ids = {0};
    const ExpansionReport rep = clf.decide_expansions(
        head, ctx, {{0, warmup_acc}}, 2.0, false, 0.5);
    if (rep.delta.at(0) != 0.5) return {false, "constant gate is not 0.5"};
    const bool expanded = !rep.expanded.empty();
    if (expanded != (warmup_acc < 0.5))
      return {false, "constant gate decision wrong"};
  }
  return {true, "1000 random triples, constant gate exact"};
}

// ==== 5. evaluation-metric oracle ===========================================
CheckResult check_metrics_oracle() {
  Rng rng(9090);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 1 + int(rng.next_below(10));
    EvalMatrix m;
    for (int r = 0; r < t; ++r) {
      std::vector<double> row(r + 1);
      for (double& x : row) x = rng.next_double();
      m.append_row(row);
    }

    double avg = 0.0;
    for (int i = 0; i < t; ++i) avg += m.at(t - 1, i);
    avg /= t;

    double forg = 0.0;
    if (t > 1) {
      for (int i = 0; i < t - 1; ++i) {
        double best = -1.0;
        for (int k = i; k <= t - 2; ++k) best = std::max(best, m.at(k, i));
        forg += best - m.at(t - 1, i);
      }
      forg /= (t - 1);
    }

    if (average_accuracy(m, t) != avg)
      return {false, "average mismatch at trial " + std::to_string(trial)};
    if (forgetting(m, t) != forg)
      return {false, "forgetting mismatch at trial " + std::to_string(trial)};
  }

  EvalMatrix single;
  single.append_row({0.7});
  if (forgetting(single, 1) != 0.0)
    return {false, "single-task forgetting must be 0"};
  return {true, "200 random matrices exact, single task 0"};
}

// ==== 6 + 7: reference-fixture runs =========================================

struct VariantStats {
  double avg = 0.0;
  double forg = 0.0;
  std::vector<int> nodes;
  std::vector<int> expansions;
};

VariantStats run_variant(const RunConfig& cfg, const DatasetIndex& data,
                         bool cast_on, bool ic_on) {
  RunConfig vcfg = cfg;
  vcfg.trainer.cast_enabled = cast_on;
  vcfg.trainer.ic_enabled = ic_on;
  ModelConfig mc = vcfg.model;
  mc.adapter_layer_count = resolved_adapter_layers(vcfg);

  VariantStats out;
  for (const std::uint64_t seed : cfg.run.seeds) {
    Rng stream_rng = Rng(seed).fork("stream");
    const TaskStream stream = generate_stream(
        vcfg.scenario.kind, vcfg.dataset.num_classes, vcfg.dataset.num_domains,
        vcfg.scenario.classes_per_task, stream_rng);
    const ExperimentResult res =
        run_experiment(stream, data, mc, vcfg.trainer, seed);
    out.avg += res.summary.average_accuracy;
    out.forg += res.summary.forgetting;
    out.nodes.push_back(res.summary.total_nodes);
    out.expansions.push_back(res.summary.total_expansions);
  }
  out.avg /= double(cfg.run.seeds.size());
  out.forg /= double(cfg.run.seeds.size());
  return out;
}

DatasetIndex dataset_for(const RunConfig& cfg, double shift_strength) {
  SynthConfig sc;
  sc.num_classes = cfg.dataset.num_classes;
  sc.num_domains = cfg.dataset.num_domains;
  sc.feature_dim = cfg.dataset.feature_dim;
  sc.per_cell = cfg.dataset.per_cell;
  sc.shift_strength = shift_strength;
  sc.noise_sigma = cfg.dataset.noise_sigma;
  sc.test_fraction = cfg.dataset.test_fraction;
  Rng rng = Rng(cfg.scenario.seed).fork("dataset");
  return DatasetIndex::build(synth_dataset(sc, rng));
}

// Component margins on the reference fixture, mean over its seeds:
//   (a) full method beats the all-off baseline by at least 0.03 accuracy,
//   (b) full method forgets strictly less than the baseline,
//   (c) each single component at least matches the baseline accuracy,
// all within a 25-minute budget.
CheckResult check_component_margins(const RunConfig& cfg,
                                    const DatasetIndex& data,
                                    std::vector<int>& node_counts_out,
                                    std::vector<int>& full_expansions_out) {
  constexpr double kAccuracyMargin = 0.03;
  constexpr double kBudgetSeconds = 1500.0;
  const auto started = std::chrono::steady_clock::now();

  const VariantStats base = run_variant(cfg, data, false, false);
  const VariantStats cast_only = run_variant(cfg, data, true, false);
  const VariantStats ic_only = run_variant(cfg, data, false, true);
  const VariantStats full = run_variant(cfg, data, true, true);

  for (const VariantStats* v : {&base, &cast_only, &ic_only, &full})
    node_counts_out.insert(node_counts_out.end(), v->nodes.begin(),
                           v->nodes.end());
  full_expansions_out = full.expansions;

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();

  char buf[240];
  std::snprintf(buf, sizeof buf,
                "base %.3f/%.3f cast %.3f/%.3f ic %.3f/%.3f full %.3f/%.3f "
                "(avg/forget), %.0f s",
                base.avg, base.forg, cast_only.avg, cast_only.forg, ic_only.avg,
                ic_only.forg, full.avg, full.forg, secs);

  if (secs >= kBudgetSeconds)
    return {false, std::string(buf) + " — over the 25 min budget"};
  if (!(full.avg >= base.avg + kAccuracyMargin))
    return {false, std::string(buf) + " — accuracy margin not met"};
  if (!(full.forg < base.forg))
    return {false, std::string(buf) + " — forgetting not reduced"};
  if (!(cast_only.avg >= base.avg))
    return {false, std::string(buf) + " — alignment-only below baseline"};
  if (!(ic_only.avg >= base.avg))
    return {false, std::string(buf) + " — expansion-only below baseline"};
  return {true, buf};
}

// Node totals stay within [classes, classes * domains] on every run, and a
// shift-free dataset triggers at most as many expansions (mean over seeds)
// as a strongly shifted one.
CheckResult check_node_growth(const RunConfig& cfg,
                              const std::vector<int>& node_counts,
                              const std::vector<int>& full_expansions) {
  const int lo = cfg.dataset.num_classes;
  const int hi = cfg.dataset.num_classes * cfg.dataset.num_domains;

  std::vector<int> all_nodes = node_counts;
  double mean_none = 0.0, mean_strong = 0.0;
  for (const double strength : {0.0, 0.9}) {
    const DatasetIndex data = dataset_for(cfg, strength);
    const VariantStats full = run_variant(cfg, data, true, true);
    all_nodes.insert(all_nodes.end(), full.nodes.begin(), full.nodes.end());
    double mean = 0.0;
    for (const int e : full.expansions) mean += e;
    mean /= double(full.expansions.size());
    (strength == 0.0 ? mean_none : mean_strong) = mean;
  }
  for (const int e : full_expansions) {
    if (e < 0) return {false, "negative expansion count"};
  }
  for (const int n : all_nodes)
    if (n < lo || n > hi)
      return {false, "node total " + std::to_string(n) + " outside [" +
                         std::to_string(lo) + ", " + std::to_string(hi) + "]"};

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%zu runs within [%d, %d]; mean expansions %.2f (no shift) vs "
                "%.2f (strong)",
                all_nodes.size(), lo, hi, mean_none, mean_strong);
  if (mean_none > mean_strong)
    return {false, std::string(buf) + " — ordering violated"};
  return {true, buf};
}

// ==== 8. byte-identical reruns ==============================================
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CheckResult check_rerun_determinism() {
  RunConfig cfg = load_config(std::string(ICON_CONFIG_DIR) + "/smoke.json");
  cfg.run.emit_node_report = true;
  cfg.run.emit_shift_pool = true;

  // Both executions use the exact same config, including the output
  // directory; the first run's bytes are captured before the directory is
  // wiped for the second run.
  const fs::path root = fs::temp_directory_path() / "icon_acceptance_rerun";
  cfg.run.out_dir = root.string();
  std::vector<fs::path> files;
  for (const std::uint64_t seed : cfg.run.seeds) {
    const std::string sub = "seed_" + std::to_string(seed);
    for (const char* file :
         {"summary.json", "acc_matrix.csv", "node_report.csv",
          "shift_pool.txt"})
      files.push_back(root / sub / file);
  }
  files.push_back(root / "aggregate.json");

  std::map<fs::path, std::string> first;
  for (const char* leg : {"first", "second"}) {
    fs::remove_all(root);
    cmd_run(cfg);
    for (const fs::path& f : files) {
      if (!fs::exists(f))
        return {false, "missing output " + f.filename().string()};
      if (leg[0] == 'f')
        first[f] = slurp(f);
      else if (first.at(f) != slurp(f))
        return {false, f.filename().string() + " differs between reruns"};
    }
  }
  fs::remove_all(root);
  return {true, std::to_string(files.size()) + " files byte-identical"};
}

// ==== 9. accumulated-gradient identity ======================================
//
// For plain gradient descent the end-minus-start movement of the parameters
// equals minus the learning rate times the sum of the per-step gradients.
CheckResult check_shift_identity() {
  constexpr double kTol = 1e-10;
  constexpr double kEta = 0.05;

  Vec theta = {0.0, 0.0};
  const Vec start = theta;
  Vec grad_sum(2, 0.0);
  for (int step = 0; step < 50; ++step) {
    const Vec g = {2.0 * (theta[0] - 3.0), 4.0 * (theta[1] + 1.0)};
    axpy(1.0, g, grad_sum);
    axpy(-kEta, g, theta);
  }
  const Vec shift = compute_shift(theta, start);
  for (int j = 0; j < 2; ++j)
    if (std::abs(shift[j] - (-kEta * grad_sum[j])) >= kTol)
      return {false, "movement does not equal -lr * summed gradients"};
  return {true, "50 descent steps, identity to 1e-10"};
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const char* name, const CheckResult& r) {
    std::printf("%s  criterion %d: %s — %s\n", r.pass ? "PASS" : "FAIL", id,
                name, r.note.c_str());
    std::fflush(stdout);
    if (!r.pass) ++failures;
  };
  const auto guarded = [](const std::function<CheckResult()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return CheckResult{false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "total-objective gradient matches finite differences",
         guarded(check_total_objective_gradient));
  report(2, "shift-alignment loss fixtures",
         guarded(check_alignment_fixtures));
  report(3, "clustering properties", guarded(check_clustering));
  report(4, "expansion-threshold oracle", guarded(check_threshold_oracle));
  report(5, "evaluation-metric oracle", guarded(check_metrics_oracle));

  std::vector<int> node_counts;
  std::vector<int> full_expansions;
  try {
    const RunConfig cfg =
        load_config(std::string(ICON_CONFIG_DIR) + "/vil_reference.json");
    const DatasetIndex data = dataset_for(cfg, cfg.dataset.shift_strength);
    report(6, "component margins on the reference fixture",
           guarded([&] {
             return check_component_margins(cfg, data, node_counts,
                                            full_expansions);
           }));
    report(7, "classifier node growth stays bounded and shift-driven",
           guarded([&] {
             return check_node_growth(cfg, node_counts, full_expansions);
           }));
  } catch (const std::exception& e) {
    report(6, "component margins on the reference fixture",
           {false, std::string("exception: ") + e.what()});
    report(7, "classifier node growth stays bounded and shift-driven",
           {false, "skipped: fixture unavailable"});
  }

  report(8, "identical reruns emit identical bytes",
         guarded(check_rerun_determinism));
  report(9, "adapter movement equals accumulated gradient",
         guarded(check_shift_identity));

  if (failures == 0)
    std::printf("all 9 acceptance checks passed\n");
  else
    std::printf("%d acceptance check(s) failed\n", failures);
  return failures;
}
