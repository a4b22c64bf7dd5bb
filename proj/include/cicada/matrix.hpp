#pragma once

#include <initializer_list>
#include <vector>

#include "cicada/errors.hpp"

namespace cicada {

// Dense row-major matrix of doubles.  All numeric state in the project (data
// windows, parameters, gradients) lives in these.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}
  Matrix(int r, int c, std::initializer_list<double> vals);

  static Matrix eye(int n);
  static Matrix scalar(double v) { return Matrix(1, 1, {v}); }

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

  int size() const { return rows * cols; }
  bool empty() const { return rows == 0 || cols == 0; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
};

// When false, kernels that normally use OpenMP take the serial path.  Results
// are bit-identical either way (fixed per-element reduction order); the switch
// exists for the benchmark target.
void set_parallel_kernels(bool on);
bool parallel_kernels();

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix relu(const Matrix& a);
Matrix tanh_mat(const Matrix& a);
double frob_sq(const Matrix& a);
double trace_of(const Matrix& a);
double l1_norm(const Matrix& a);
double dot(const Matrix& a, const Matrix& b);  // Frobenius inner product
void axpy(Matrix& y, double alpha, const Matrix& x);

// Softmax along a row (each row sums to 1) or down a column (each column sums
// to 1); max-subtracted for stability.
Matrix softmax_rows(const Matrix& a);
Matrix softmax_cols(const Matrix& a);

// C = A + b * ones(1, cols); b is rows x 1.
Matrix add_bias(const Matrix& a, const Matrix& b);
// 1 x n row of per-column dot products of two equal-shaped matrices.
Matrix colwise_dot(const Matrix& a, const Matrix& b);
// Scales column j of a by s(0, j); s is 1 x cols.
Matrix scale_cols(const Matrix& a, const Matrix& s);
Matrix concat_rows(const std::vector<Matrix>& parts);
Matrix concat_cols(const std::vector<Matrix>& parts);
Matrix slice_rows(const Matrix& a, int r0, int r1);
Matrix reshape(const Matrix& a, int r, int c);

// Column-orthonormal basis of a (rows >= cols) via twice-iterated modified
// Gram-Schmidt.  Throws RankDeficient when a column's residual norm falls
// below 1e-12 of its original.
Matrix qr_orthonormalize(const Matrix& a);

// (AtA + ridge*I)^-1 At.  With ridge = 0, throws Singular when the condition
// estimate of AtA exceeds 1e12.
Matrix pseudo_inverse(const Matrix& a, double ridge);

// Solves (S) X = B for symmetric positive definite S via Cholesky.
Matrix solve_spd(const Matrix& s, const Matrix& b);

// Serial reference implementations kept for kernel tests and the benchmark.
namespace ref {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix tanh_mat(const Matrix& a);
Matrix relu(const Matrix& a);
Matrix softmax_cols(const Matrix& a);
}  // namespace ref

}  // namespace cicada
