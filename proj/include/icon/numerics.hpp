#pragma once

#include <functional>
#include <vector>

#include "icon/errors.hpp"
#include "icon/rng.hpp"

namespace icon {

using Vec = std::vector<double>;

// ==== dense matrix ==========================================================

// Row-major dense matrix of doubles. Small and explicit on purpose; the
// whole pipeline runs at desk scale in double precision.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(std::size_t(r) * std::size_t(c), 0.0) {}

  double& at(int r, int c) { return data[std::size_t(r) * cols + c]; }
  const double& at(int r, int c) const { return data[std::size_t(r) * cols + c]; }

  static Matrix identity(int n);
  static Matrix gaussian(int r, int c, double stddev, Rng& rng);
};

Vec matvec(const Matrix& a, const Vec& x);    // a * x
Vec matvec_t(const Matrix& a, const Vec& x);  // a^T * x
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Orthonormalizes the columns of a square matrix (modified Gram-Schmidt).
// The result has positive diagonal in the implied QR factorization.
Matrix orthonormal_columns(const Matrix& a);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
void axpy(double alpha, const Vec& x, Vec& y);  // y += alpha * x
bool all_finite(const Vec& v);

// ==== similarity ============================================================

inline constexpr double kNormEpsilon = 1e-8;

// cos(a, b); throws DegenerateVector if either norm is below kNormEpsilon.
double cosine_similarity(const Vec& a, const Vec& b);

// ==== clustering ============================================================

struct ClusterResult {
  std::vector<Vec> centers;
  std::vector<int> assignments;  // per point, index of nearest center
  double objective = 0.0;        // sum of squared distances to assigned centers
};

// Lloyd iterations with k-means++ seeding. Restarts share the caller's rng,
// so a fixed seed reproduces the result bit for bit. Ties (equal distances,
// equal objectives) resolve to the lowest index. When `trace` is given, it
// receives the per-iteration objective sequence of every restart; each
// sequence is non-increasing.
ClusterResult kmeans(const std::vector<Vec>& points, int k, Rng& rng,
                     int restarts = 10, int max_iters = 100,
                     std::vector<std::vector<double>>* trace = nullptr);

// ==== losses ================================================================

struct LossResult {
  double loss = 0.0;
  Vec grad;
};

// Cross-entropy of softmax(logits) against `label`; log-sum-exp is computed
// with max subtraction. grad = softmax - onehot.
LossResult softmax_cross_entropy(const Vec& logits, int label);

// KL(softmax(p_logits) || softmax(q_logits)); gradient is with respect to
// q_logits only (p is a frozen target).
LossResult kl_divergence(const Vec& p_logits, const Vec& q_logits);

// ==== derivative checking ===================================================

inline constexpr double kFiniteDiffStep = 1e-5;

// Central differences: g_i = (f(x + h e_i) - f(x - h e_i)) / (2h).
Vec finite_difference_gradient(const std::function<double(const Vec&)>& f,
                               const Vec& x, double h = kFiniteDiffStep);

}  // namespace icon
