#pragma once

#include <string>
#include <vector>

#include "icon/config.hpp"
#include "icon/trainer.hpp"

namespace icon {

// Shortest round-trip decimal form; the one formatter every emitted file
// goes through, so identical runs emit identical bytes.
std::string format_double(double v);

struct SeedOutcome {
  std::uint64_t seed = 0;
  double average_accuracy = 0.0;
  double forgetting = 0.0;
};

// Trains every seed (optionally in parallel, see ICON_WORKERS), writes
// out_dir/seed_<s>/{summary.json, acc_matrix.csv[, node_report.csv]
// [, shift_pool.txt]} plus out_dir/aggregate.json.
std::vector<SeedOutcome> cmd_run(const RunConfig& cfg);

// Component grid: baseline, each single component, the full method, and the
// full method with the constant threshold. Writes per-variant run outputs
// and out_dir/ablation.csv; prints the same table to stdout.
void cmd_ablation(const RunConfig& cfg);

// Prints the resolved config and derived quantities.
void cmd_validate(const RunConfig& cfg);

}  // namespace icon
