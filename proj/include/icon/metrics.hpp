#pragma once

#include <vector>

#include "icon/errors.hpp"

namespace icon {

// Lower-triangular accuracy record: row t holds the accuracy on the test
// split of every task i <= t, measured right after training task t.
// Indices are 0-based; row t has exactly t + 1 entries.
class EvalMatrix {
 public:
  // Next row must have (current rows + 1) entries, each in [0, 1].
  void append_row(std::vector<double> row);

  int tasks() const { return int(rows_.size()); }
  double at(int after_task, int eval_task) const;
  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<std::vector<double>> rows_;
};

// Mean accuracy over all tasks after the last of `num_tasks` tasks.
double average_accuracy(const EvalMatrix& m, int num_tasks);

// Mean over earlier tasks of the drop from their best historical accuracy:
//   f_i = max_{k < T-1} a[k][i] - a[T-1][i], averaged over i < T-1.
// Defined as 0 for a single task.
double forgetting(const EvalMatrix& m, int num_tasks);

// Plain mean; throws EmptyList.
double scenario_average(const std::vector<double>& values);

}  // namespace icon
