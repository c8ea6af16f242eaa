#include "icon/cast.hpp"

#include <algorithm>
#include <cmath>

namespace icon {

Vec compute_shift(const Vec& after, const Vec& prev) {
  if (after.size() != prev.size())
    throw LengthMismatch("compute_shift: vector lengths differ");
  Vec out(after.size());
  for (std::size_t i = 0; i < after.size(); ++i) out[i] = after[i] - prev[i];
  return out;
}

void recluster(ShiftPool& pool, Rng& rng) {
  if (pool.shifts.empty()) {
    pool.centers.clear();
    pool.assignments.clear();
    return;
  }
  std::vector<Vec> points;
  points.reserve(pool.shifts.size());
  for (const ShiftVector& s : pool.shifts) points.push_back(s.values);
  const int k = std::min<int>(pool.k_configured, int(points.size()));
  ClusterResult res = kmeans(points, k, rng);
  pool.centers = std::move(res.centers);
  pool.assignments = std::move(res.assignments);
}

int assign_cluster(const Vec& v, const ShiftPool& pool) {
  if (pool.centers.empty()) throw NoCenters("assign_cluster: pool has no centers");
  int best = 0;
  double best_d = -1.0;
  for (int c = 0; c < int(pool.centers.size()); ++c) {
    if (v.size() != pool.centers[c].size())
      throw LengthMismatch("assign_cluster: vector length != center length");
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double t = v[i] - pool.centers[c][i];
      d += t * t;
    }
    if (best_d < 0.0 || d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

CastResult cast_loss(const Vec& v_cur, const ShiftPool& pool) {
  CastResult out;
  out.grad.assign(v_cur.size(), 0.0);
  if (pool.shifts.empty() || pool.centers.empty()) return out;

  const double v_norm = norm(v_cur);
  if (v_norm < kNormEpsilon) return out;

  const int own = assign_cluster(v_cur, pool);
  out.detail.cluster = own;

  // Usable shifts: outside the probe's cluster and not degenerate.
  std::vector<int> idx;
  std::vector<double> dist;
  std::vector<double> shift_norm;
  double denom = 0.0;
  for (int j = 0; j < int(pool.shifts.size()); ++j) {
    if (pool.assignments[j] == own) continue;
    const Vec& s = pool.shifts[j].values;
    if (s.size() != v_cur.size())
      throw LengthMismatch("cast_loss: shift length != probe length");
    const double sn = norm(s);
    if (sn < kNormEpsilon) continue;
    double d2 = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double t = v_cur[i] - s[i];
      d2 += t * t;
    }
    idx.push_back(j);
    dist.push_back(std::sqrt(d2));
    shift_norm.push_back(sn);
    denom += dist.back();
  }
  if (idx.empty() || denom < kNormEpsilon) return out;

  for (std::size_t t = 0; t < idx.size(); ++t) {
    const Vec& s = pool.shifts[idx[t]].values;
    const double w = dist[t] / denom;
    const double cos_t = dot(v_cur, s) / (v_norm * shift_norm[t]);
    out.loss += w * cos_t;
    out.detail.shift_index.push_back(idx[t]);
    out.detail.weights.push_back(w);
    out.detail.cosines.push_back(cos_t);
    // d cos(v, s)/dv = s / (|v||s|) - cos * v / |v|^2, with w held fixed.
    for (std::size_t i = 0; i < v_cur.size(); ++i) {
      out.grad[i] += w * (s[i] / (v_norm * shift_norm[t]) -
                          cos_t * v_cur[i] / (v_norm * v_norm));
    }
  }
  return out;
}

std::vector<int> milestone_steps(int total_steps, int shifts_per_task) {
  std::vector<int> out;
  for (int i = 1; i <= shifts_per_task; ++i) {
    out.push_back(int(std::ceil(double(total_steps) * i / shifts_per_task)));
  }
  return out;
}

void snapshot_task_shifts(ShiftPool& pool, const Vec& prev,
                          const std::vector<Vec>& milestone_states, int task_id,
                          Rng& rng) {
  const int take = std::min<int>(int(milestone_states.size()), pool.shifts_per_task);
  for (int snapshot_idx = 0; snapshot_idx < take; ++snapshot_idx) {
    const Vec& state = milestone_states[snapshot_idx];
    ShiftVector sv;
    sv.values = compute_shift(state, prev);
    sv.task_id = task_id;
    sv.snapshot_idx = snapshot_idx;
    sv.zero_shift = norm(sv.values) < 1e-12;
    pool.shifts.push_back(std::move(sv));
  }
  recluster(pool, rng);
}

}  // namespace icon
