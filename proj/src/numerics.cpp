#include "icon/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace icon {

// ==== dense matrix ==========================================================

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix Matrix::gaussian(int r, int c, double stddev, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = stddev * rng.next_gaussian();
  return m;
}

Vec matvec(const Matrix& a, const Vec& x) {
  if (int(x.size()) != a.cols) throw DimMismatch("matvec: vector length != cols");
  Vec y(a.rows, 0.0);
  for (int r = 0; r < a.rows; ++r) {
    double s = 0.0;
    const double* row = a.data.data() + std::size_t(r) * a.cols;
    for (int c = 0; c < a.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

Vec matvec_t(const Matrix& a, const Vec& x) {
  if (int(x.size()) != a.rows) throw DimMismatch("matvec_t: vector length != rows");
  Vec y(a.cols, 0.0);
  for (int r = 0; r < a.rows; ++r) {
    const double* row = a.data.data() + std::size_t(r) * a.cols;
    for (int c = 0; c < a.cols; ++c) y[c] += row[c] * x[r];
  }
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw DimMismatch("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (int r = 0; r < a.rows; ++r)
    for (int c = 0; c < a.cols; ++c) out.at(c, r) = a.at(r, c);
  return out;
}

Matrix orthonormal_columns(const Matrix& a) {
  if (a.rows != a.cols) throw DimMismatch("orthonormal_columns: square input required");
  const int n = a.rows;
  Matrix q = a;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < j; ++i) {
      double proj = 0.0;
      for (int r = 0; r < n; ++r) proj += q.at(r, i) * q.at(r, j);
      for (int r = 0; r < n; ++r) q.at(r, j) -= proj * q.at(r, i);
    }
    double nrm = 0.0;
    for (int r = 0; r < n; ++r) nrm += q.at(r, j) * q.at(r, j);
    nrm = std::sqrt(nrm);
    if (nrm < 1e-12) throw DegenerateVector("orthonormal_columns: rank-deficient input");
    for (int r = 0; r < n; ++r) q.at(r, j) /= nrm;
  }
  return q;
}

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimMismatch("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw DimMismatch("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(const Vec& v) {
  for (const double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// ==== similarity ============================================================

double cosine_similarity(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimMismatch("cosine_similarity: length mismatch");
  const double na = norm(a);
  const double nb = norm(b);
  if (na < kNormEpsilon || nb < kNormEpsilon)
    throw DegenerateVector("cosine_similarity: vector norm below epsilon");
  return dot(a, b) / (na * nb);
}

// ==== clustering ============================================================

namespace {

double squared_distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

int nearest_center(const Vec& p, const std::vector<Vec>& centers) {
  int best = 0;
  double best_d = squared_distance(p, centers[0]);
  for (int c = 1; c < int(centers.size()); ++c) {
    const double d = squared_distance(p, centers[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Vec> seed_centers(const std::vector<Vec>& points, int k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Vec> centers;
  centers.reserve(k);
  centers.push_back(points[rng.next_below(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centers[0]);
  while (int(centers.size()) < k) {
    double total = 0.0;
    for (const double d : d2) total += d;
    std::size_t pick;
    if (total <= 0.0) {
      pick = rng.next_below(n);
    } else {
      const double target = rng.next_double() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (target < acc) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
  }
  return centers;
}

}  // namespace

ClusterResult kmeans(const std::vector<Vec>& points, int k, Rng& rng,
                     int restarts, int max_iters,
                     std::vector<std::vector<double>>* trace) {
  const std::size_t n = points.size();
  if (n == 0) throw EmptyInput("kmeans: no points");
  if (k < 1 || std::size_t(k) > n) throw BadK("kmeans: k out of range [1, n]");
  const std::size_t dim = points[0].size();
  for (const Vec& p : points)
    if (p.size() != dim) throw DimMismatch("kmeans: ragged point dimensions");

  std::optional<ClusterResult> best;
  for (int r = 0; r < restarts; ++r) {
    std::vector<Vec> centers = seed_centers(points, k, rng);
    std::vector<int> assign(n, -1);
    std::vector<double> objs;
    for (int it = 0; it < max_iters; ++it) {
      bool changed = false;
      double obj = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const int c = nearest_center(points[i], centers);
        obj += squared_distance(points[i], centers[c]);
        if (c != assign[i]) {
          assign[i] = c;
          changed = true;
        }
      }
      objs.push_back(obj);
      if (!changed && it > 0) break;
      // Mean update; an emptied cluster keeps its previous center.
      std::vector<Vec> sums(k, Vec(dim, 0.0));
      std::vector<int> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        axpy(1.0, points[i], sums[assign[i]]);
        ++counts[assign[i]];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t d = 0; d < dim; ++d) centers[c][d] = sums[c][d] / counts[c];
      }
    }
    // Final pass restores the nearest-center invariant after the last update.
    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest_center(points[i], centers);
      obj += squared_distance(points[i], centers[assign[i]]);
    }
    if (trace) trace->push_back(objs);
    if (!best || obj < best->objective) {
      best = ClusterResult{std::move(centers), std::move(assign), obj};
    }
  }
  return *best;
}

// ==== losses ================================================================

namespace {

// Returns log-softmax of `logits` computed with max subtraction.
Vec log_softmax(const Vec& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (const double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace

LossResult softmax_cross_entropy(const Vec& logits, int label) {
  if (logits.empty()) throw EmptyInput("softmax_cross_entropy: empty logits");
  if (label < 0 || label >= int(logits.size()))
    throw BadLabel("softmax_cross_entropy: label out of range");
  const Vec ls = log_softmax(logits);
  LossResult out;
  out.loss = -ls[label];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(ls[i]);
  out.grad[label] -= 1.0;
  return out;
}

LossResult kl_divergence(const Vec& p_logits, const Vec& q_logits) {
  if (p_logits.size() != q_logits.size())
    throw DimMismatch("kl_divergence: length mismatch");
  if (p_logits.empty()) throw EmptyInput("kl_divergence: empty logits");
  const Vec lp = log_softmax(p_logits);
  const Vec lq = log_softmax(q_logits);
  LossResult out;
  out.grad.resize(q_logits.size());
  for (std::size_t i = 0; i < p_logits.size(); ++i) {
    const double p = std::exp(lp[i]);
    out.loss += p * (lp[i] - lq[i]);
    out.grad[i] = std::exp(lq[i]) - p;
  }
  return out;
}

// ==== derivative checking ===================================================

Vec finite_difference_gradient(const std::function<double(const Vec&)>& f,
                               const Vec& x, double h) {
  Vec g(x.size(), 0.0);
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace icon
