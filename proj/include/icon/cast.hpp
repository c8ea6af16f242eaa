#pragma once

#include <vector>

#include "icon/numerics.hpp"
#include "icon/rng.hpp"

namespace icon {

// ==== adaptation shifts =====================================================

// One recorded adapter movement: the flat difference between an adapter
// state and the state at the start of that task's joint phase.
struct ShiftVector {
  Vec values;
  int task_id = 0;
  int snapshot_idx = 0;    // position within the task when taken
  bool zero_shift = false; // flagged when the task moved the adapters nowhere
};

// All shifts recorded so far plus their current clustering. `assignments`
// always indexes the nearest center of the shift at the same position.
struct ShiftPool {
  std::vector<ShiftVector> shifts;
  int k_configured = 2;
  int shifts_per_task = 1;
  std::vector<Vec> centers;
  std::vector<int> assignments;

  int k_effective() const { return int(centers.size()); }
};

// after - prev, elementwise. Throws LengthMismatch.
Vec compute_shift(const Vec& after, const Vec& prev);

// K-Means over the pooled shifts with k = min(k_configured, pool size).
// An empty pool clears the clustering and returns.
void recluster(ShiftPool& pool, Rng& rng);

// Index of the nearest center (ties to the lowest index). Throws NoCenters
// when the pool has never been clustered.
int assign_cluster(const Vec& v, const ShiftPool& pool);

// ==== similarity control loss ===============================================

struct CastDetail {
  int cluster = -1;               // cluster the probe vector fell into
  std::vector<int> shift_index;   // pool positions of the contributing shifts
  Vec weights;                    // distance-normalized, sum to 1
  Vec cosines;                    // per-term cos(v, V_j)
};

struct CastResult {
  double loss = 0.0;
  Vec grad;  // d loss / d v; weights and cluster membership held fixed
  CastDetail detail;
};

// Weighted cosine alignment of `v_cur` against every pooled shift outside
// its own cluster:
//   loss = sum_j w_j cos(v, V_j),  w_j = |v - V_j| / sum_k |v - V_k|.
// The weights and the cluster assignment are treated as constants by the
// gradient. Degenerate cases (empty pool, |v| < eps, no other-cluster
// shifts, every usable distance zero) give loss 0 and a zero gradient;
// individual shifts with |V_j| < eps are skipped.
CastResult cast_loss(const Vec& v_cur, const ShiftPool& pool);

// Optimizer step counts (1-based) after which a shift snapshot is taken:
// evenly spaced, the last one at total_steps.
std::vector<int> milestone_steps(int total_steps, int shifts_per_task);

// Appends one shift per recorded milestone state (at most shifts_per_task,
// zero-length movements flagged), then reclusters.
void snapshot_task_shifts(ShiftPool& pool, const Vec& prev,
                          const std::vector<Vec>& milestone_states, int task_id,
                          Rng& rng);

}  // namespace icon
