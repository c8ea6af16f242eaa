#include "icon/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace icon {

// ==== synthetic data ========================================================

std::vector<DomainTransform> make_domain_transforms(int num_domains, int dim,
                                                    double shift_strength, Rng& rng) {
  if (num_domains < 1 || dim < 1)
    throw BadConfig("make_domain_transforms: dimensions must be positive");
  if (shift_strength < 0.0 || shift_strength > 1.0)
    throw BadConfig("make_domain_transforms: shift_strength outside [0, 1]");

  std::vector<DomainTransform> out;
  out.reserve(num_domains);
  for (int d = 0; d < num_domains; ++d) {
    DomainTransform tf;
    if (shift_strength == 0.0) {
      tf.rotation = Matrix::identity(dim);
      tf.translation.assign(dim, 0.0);
      tf.is_identity = true;
      out.push_back(std::move(tf));
      continue;
    }
    // Random rotation written in its planar form P * B * P^T; scaling every
    // plane angle by the strength traces a geodesic from the identity to the
    // full rotation.
    const Matrix basis = orthonormal_columns(Matrix::gaussian(dim, dim, 1.0, rng));
    const int planes = dim / 2;
    Matrix block = Matrix::identity(dim);
    for (int p = 0; p < planes; ++p) {
      const double base_angle = (0.25 + 0.75 * rng.next_double()) * 3.14159265358979323846;
      const double a = shift_strength * base_angle;
      block.at(2 * p, 2 * p) = std::cos(a);
      block.at(2 * p, 2 * p + 1) = -std::sin(a);
      block.at(2 * p + 1, 2 * p) = std::sin(a);
      block.at(2 * p + 1, 2 * p + 1) = std::cos(a);
    }
    tf.rotation = matmul(matmul(basis, block), transpose(basis));
    Vec dir(dim);
    for (double& v : dir) v = rng.next_gaussian();
    const double len = norm(dir);
    tf.translation.assign(dim, 0.0);
    if (len > 0.0) {
      const double mag = shift_strength * 0.5 * std::sqrt(double(dim));
      for (int i = 0; i < dim; ++i) tf.translation[i] = mag * dir[i] / len;
    }
    out.push_back(std::move(tf));
  }
  return out;
}

std::vector<DatasetCell> synth_dataset(const SynthConfig& cfg, Rng& rng) {
  if (cfg.num_classes < 1 || cfg.num_domains < 1 || cfg.feature_dim < 1)
    throw BadConfig("synth_dataset: counts must be positive");
  if (cfg.per_cell < 4)
    throw BadConfig("synth_dataset: per_cell must be at least 4");
  if (cfg.test_fraction <= 0.0 || cfg.test_fraction >= 1.0)
    throw BadConfig("synth_dataset: test_fraction outside (0, 1)");
  if (cfg.noise_sigma <= 0.0)
    throw BadConfig("synth_dataset: noise_sigma must be positive");

  std::vector<Vec> prototypes(cfg.num_classes);
  for (Vec& mu : prototypes) {
    mu.resize(cfg.feature_dim);
    for (double& v : mu) v = rng.next_gaussian();
  }
  const std::vector<DomainTransform> transforms =
      make_domain_transforms(cfg.num_domains, cfg.feature_dim, cfg.shift_strength, rng);

  int test_n = int(std::lround(cfg.per_cell * cfg.test_fraction));
  test_n = std::clamp(test_n, 1, cfg.per_cell - 1);

  std::vector<DatasetCell> cells;
  cells.reserve(std::size_t(cfg.num_classes) * cfg.num_domains);
  for (int c = 0; c < cfg.num_classes; ++c) {
    for (int d = 0; d < cfg.num_domains; ++d) {
      DatasetCell cell;
      cell.class_id = c;
      cell.domain_id = d;
      const DomainTransform& tf = transforms[d];
      for (int i = 0; i < cfg.per_cell; ++i) {
        Vec x(cfg.feature_dim);
        for (int j = 0; j < cfg.feature_dim; ++j)
          x[j] = prototypes[c][j] + cfg.noise_sigma * rng.next_gaussian();
        if (!tf.is_identity) {
          x = matvec(tf.rotation, x);
          axpy(1.0, tf.translation, x);
        }
        Sample s{std::move(x), c, d};
        if (i < cfg.per_cell - test_n)
          cell.train.push_back(std::move(s));
        else
          cell.test.push_back(std::move(s));
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// ==== task streams ==========================================================

TaskStream generate_stream(StreamKind kind, int num_classes, int num_domains,
                           int classes_per_task, Rng& rng) {
  if (num_classes < 1 || num_domains < 1)
    throw BadConfig("generate_stream: counts must be positive");
  if (classes_per_task < 1 || num_classes % classes_per_task != 0)
    throw BadConfig("generate_stream: classes_per_task must divide num_classes");

  const int num_groups = num_classes / classes_per_task;
  auto group_classes = [&](int g) {
    std::vector<int> ids(classes_per_task);
    std::iota(ids.begin(), ids.end(), g * classes_per_task);
    return ids;
  };

  TaskStream stream;
  stream.kind = kind;
  switch (kind) {
    case StreamKind::CIL:
      for (int g = 0; g < num_groups; ++g)
        stream.tasks.push_back({g, kAllDomains, group_classes(g)});
      break;
    case StreamKind::DIL: {
      std::vector<int> all(num_classes);
      std::iota(all.begin(), all.end(), 0);
      for (int d = 0; d < num_domains; ++d) stream.tasks.push_back({d, d, all});
      break;
    }
    case StreamKind::VIL: {
      std::vector<std::pair<int, int>> cells;
      for (int g = 0; g < num_groups; ++g)
        for (int d = 0; d < num_domains; ++d) cells.push_back({g, d});
      rng.shuffle(cells);
      for (int t = 0; t < int(cells.size()); ++t)
        stream.tasks.push_back({t, cells[t].second, group_classes(cells[t].first)});
      break;
    }
    case StreamKind::CDIL: {
      const int n = std::min(num_groups, num_domains);
      for (int t = 0; t < n; ++t) stream.tasks.push_back({t, t, group_classes(t)});
      break;
    }
    default:
      throw BadKind("generate_stream: unknown stream kind");
  }
  return stream;
}

// ==== csv import ============================================================

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  out = int(v);
  return true;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

}  // namespace

std::vector<DatasetCell> load_csv(const std::string& path, int dim) {
  if (dim < 1) throw BadConfig("load_csv: dim must be positive");
  std::ifstream in(path);
  if (!in) throw ParseError("load_csv: cannot open " + path);

  std::map<std::pair<int, int>, DatasetCell> cells;
  std::string line;
  int line_no = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    int class_id = 0;
    if (first_content_line && !parse_int(fields[0], class_id)) {
      first_content_line = false;  // header
      continue;
    }
    first_content_line = false;
    const std::string where = " at line " + std::to_string(line_no);
    if (int(fields.size()) != 3 + dim)
      throw DimMismatch("load_csv: expected " + std::to_string(3 + dim) +
                        " fields, got " + std::to_string(fields.size()) + where);
    int domain_id = 0;
    if (!parse_int(fields[0], class_id) || class_id < 0)
      throw ParseError("load_csv: bad class_id" + where);
    if (!parse_int(fields[1], domain_id) || domain_id < 0)
      throw ParseError("load_csv: bad domain_id" + where);
    const std::string& split = fields[2];
    if (split != "train" && split != "test")
      throw ParseError("load_csv: split must be train or test" + where);
    Sample s;
    s.class_id = class_id;
    s.domain_id = domain_id;
    s.features.resize(dim);
    for (int j = 0; j < dim; ++j) {
      if (!parse_double(fields[3 + j], s.features[j]) || !std::isfinite(s.features[j]))
        throw ParseError("load_csv: bad feature value" + where);
    }
    DatasetCell& cell = cells[{class_id, domain_id}];
    cell.class_id = class_id;
    cell.domain_id = domain_id;
    (split == "train" ? cell.train : cell.test).push_back(std::move(s));
  }
  std::vector<DatasetCell> out;
  out.reserve(cells.size());
  for (auto& [key, cell] : cells) out.push_back(std::move(cell));
  return out;
}

// ==== dataset index =========================================================

DatasetIndex DatasetIndex::build(std::vector<DatasetCell> cells) {
  DatasetIndex idx;
  idx.cells_ = std::move(cells);
  for (int i = 0; i < int(idx.cells_.size()); ++i) {
    const DatasetCell& cell = idx.cells_[i];
    idx.by_key_[{cell.class_id, cell.domain_id}] = i;
    idx.class_ids_.insert(cell.class_id);
    idx.domain_ids_.insert(cell.domain_id);
    for (const std::vector<Sample>* part : {&cell.train, &cell.test}) {
      for (const Sample& s : *part) {
        if (idx.feature_dim_ == 0) idx.feature_dim_ = int(s.features.size());
        if (int(s.features.size()) != idx.feature_dim_)
          throw DimMismatch("DatasetIndex: inconsistent feature dimensions");
      }
    }
  }
  return idx;
}

std::vector<const Sample*> DatasetIndex::gather(const TaskSpec& task, bool train) const {
  std::vector<const Sample*> out;
  for (const int c : task.class_ids) {
    bool found = false;
    if (task.domain_id == kAllDomains) {
      for (const int d : domain_ids_) {
        const auto it = by_key_.find({c, d});
        if (it == by_key_.end()) continue;
        const DatasetCell& cell = cells_[it->second];
        const std::vector<Sample>& part = train ? cell.train : cell.test;
        for (const Sample& s : part) out.push_back(&s);
        found = found || !part.empty();
      }
    } else {
      const auto it = by_key_.find({c, task.domain_id});
      if (it != by_key_.end()) {
        const DatasetCell& cell = cells_[it->second];
        const std::vector<Sample>& part = train ? cell.train : cell.test;
        for (const Sample& s : part) out.push_back(&s);
        found = !part.empty();
      }
    }
    if (!found)
      throw DataCoverageError("task " + std::to_string(task.task_index) +
                              ": no " + (train ? std::string("train") : std::string("test")) +
                              " samples for class " + std::to_string(c));
  }
  return out;
}

std::vector<const Sample*> DatasetIndex::train_samples(const TaskSpec& task) const {
  return gather(task, true);
}

std::vector<const Sample*> DatasetIndex::test_samples(const TaskSpec& task) const {
  return gather(task, false);
}

}  // namespace icon
