#include "icon/metrics.hpp"

#include <algorithm>

namespace icon {

void EvalMatrix::append_row(std::vector<double> row) {
  if (int(row.size()) != tasks() + 1)
    throw IncompleteMatrix("EvalMatrix: row length must equal task count + 1");
  for (const double v : row)
    if (!(v >= 0.0 && v <= 1.0))
      throw IncompleteMatrix("EvalMatrix: accuracy outside [0, 1]");
  rows_.push_back(std::move(row));
}

double EvalMatrix::at(int after_task, int eval_task) const {
  if (after_task < 0 || after_task >= tasks() || eval_task < 0 ||
      eval_task > after_task)
    throw IncompleteMatrix("EvalMatrix: index outside the lower triangle");
  return rows_[after_task][eval_task];
}

double average_accuracy(const EvalMatrix& m, int num_tasks) {
  if (num_tasks < 1 || num_tasks > m.tasks())
    throw IncompleteMatrix("average_accuracy: num_tasks outside recorded range");
  double sum = 0.0;
  for (int i = 0; i < num_tasks; ++i) sum += m.at(num_tasks - 1, i);
  return sum / double(num_tasks);
}

double forgetting(const EvalMatrix& m, int num_tasks) {
  if (num_tasks < 1 || num_tasks > m.tasks())
    throw IncompleteMatrix("forgetting: num_tasks outside recorded range");
  if (num_tasks == 1) return 0.0;
  double sum = 0.0;
  for (int i = 0; i < num_tasks - 1; ++i) {
    double best = m.at(i, i);
    for (int k = i; k < num_tasks - 1; ++k) best = std::max(best, m.at(k, i));
    sum += best - m.at(num_tasks - 1, i);
  }
  return sum / double(num_tasks - 1);
}

double scenario_average(const std::vector<double>& values) {
  if (values.empty()) throw EmptyList("scenario_average: empty input");
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / double(values.size());
}

}  // namespace icon
