#include "cicada/matrix.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace cicada {

namespace {

std::atomic<bool> g_parallel{true};

// Work thresholds below which the OpenMP paths are not worth spawning.
constexpr long long kMatmulFlopCutoff = 1LL << 18;
constexpr int kElemwiseCutoff = 1 << 14;

void check_same_shape(const Matrix& a, const Matrix& b, const char* who) {
  require(a.same_shape(b), Err::ShapeMismatch, std::string(who) + ": operand shapes differ");
}

}  // namespace

Matrix::Matrix(int r, int c, std::initializer_list<double> vals) : rows(r), cols(c), a(vals) {
  require(static_cast<int>(vals.size()) == r * c, Err::ShapeMismatch,
          "Matrix: initializer size does not match shape");
}

Matrix Matrix::eye(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

void set_parallel_kernels(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_kernels() { return g_parallel.load(std::memory_order_relaxed); }

namespace ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, Err::ShapeMismatch, "matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix tanh_mat(const Matrix& a) {
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) c.a[i] = std::tanh(a.a[i]);
  return c;
}

Matrix relu(const Matrix& a) {
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) c.a[i] = a.a[i] > 0.0 ? a.a[i] : 0.0;
  return c;
}

Matrix softmax_cols(const Matrix& a) {
  Matrix c(a.rows, a.cols);
  for (int j = 0; j < a.cols; ++j) {
    double mx = a(0, j);
    for (int i = 1; i < a.rows; ++i) mx = std::max(mx, a(i, j));
    double sum = 0.0;
    for (int i = 0; i < a.rows; ++i) {
      c(i, j) = std::exp(a(i, j) - mx);
      sum += c(i, j);
    }
    for (int i = 0; i < a.rows; ++i) c(i, j) /= sum;
  }
  return c;
}

}  // namespace ref

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, Err::ShapeMismatch, "matmul: inner dimensions differ");
  const long long flops = 1LL * a.rows * a.cols * b.cols;
  if (!parallel_kernels() || flops < kMatmulFlopCutoff) return ref::matmul(a, b);
  Matrix c(a.rows, b.cols);
  // Each output row is produced by one thread with the same ascending-k
  // accumulation order as the serial path, so results are bit-identical.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix c(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) c(j, i) = a(i, j);
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "add");
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) c.a[i] = a.a[i] + b.a[i];
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "sub");
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) c.a[i] = a.a[i] - b.a[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) c.a[i] = a.a[i] * s;
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "hadamard");
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.size(); ++i) c.a[i] = a.a[i] * b.a[i];
  return c;
}

Matrix relu(const Matrix& a) { return ref::relu(a); }

Matrix tanh_mat(const Matrix& a) {
  if (!parallel_kernels() || a.size() < kElemwiseCutoff) return ref::tanh_mat(a);
  Matrix c(a.rows, a.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.size(); ++i) c.a[i] = std::tanh(a.a[i]);
  return c;
}

double frob_sq(const Matrix& a) {
  double s = 0.0;
  for (double v : a.a) s += v * v;
  return s;
}

double trace_of(const Matrix& a) {
  require(a.rows == a.cols, Err::ShapeMismatch, "trace: matrix not square");
  double s = 0.0;
  for (int i = 0; i < a.rows; ++i) s += a(i, i);
  return s;
}

double l1_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.a) s += std::abs(v);
  return s;
}

double dot(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "dot");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a.a[i] * b.a[i];
  return s;
}

void axpy(Matrix& y, double alpha, const Matrix& x) {
  check_same_shape(y, x, "axpy");
  for (int i = 0; i < y.size(); ++i) y.a[i] += alpha * x.a[i];
}

Matrix softmax_rows(const Matrix& a) {
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    double mx = ai[0];
    for (int j = 1; j < a.cols; ++j) mx = std::max(mx, ai[j]);
    double sum = 0.0;
    for (int j = 0; j < a.cols; ++j) {
      ci[j] = std::exp(ai[j] - mx);
      sum += ci[j];
    }
    for (int j = 0; j < a.cols; ++j) ci[j] /= sum;
  }
  return c;
}

Matrix softmax_cols(const Matrix& a) {
  if (!parallel_kernels() || a.size() < kElemwiseCutoff) return ref::softmax_cols(a);
  Matrix c(a.rows, a.cols);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < a.cols; ++j) {
    double mx = a(0, j);
    for (int i = 1; i < a.rows; ++i) mx = std::max(mx, a(i, j));
    double sum = 0.0;
    for (int i = 0; i < a.rows; ++i) {
      c(i, j) = std::exp(a(i, j) - mx);
      sum += c(i, j);
    }
    for (int i = 0; i < a.rows; ++i) c(i, j) /= sum;
  }
  return c;
}

Matrix add_bias(const Matrix& a, const Matrix& b) {
  require(b.cols == 1 && b.rows == a.rows, Err::ShapeMismatch,
          "add_bias: bias must be rows x 1");
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double bi = b(i, 0);
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < a.cols; ++j) ci[j] = ai[j] + bi;
  }
  return c;
}

Matrix colwise_dot(const Matrix& a, const Matrix& b) {
  check_same_shape(a, b, "colwise_dot");
  Matrix c(1, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    const double* bi = b.row(i);
    for (int j = 0; j < a.cols; ++j) c.a[j] += ai[j] * bi[j];
  }
  return c;
}

Matrix scale_cols(const Matrix& a, const Matrix& s) {
  require(s.rows == 1 && s.cols == a.cols, Err::ShapeMismatch,
          "scale_cols: scale must be 1 x cols");
  Matrix c(a.rows, a.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (int j = 0; j < a.cols; ++j) ci[j] = ai[j] * s.a[j];
  }
  return c;
}

Matrix concat_rows(const std::vector<Matrix>& parts) {
  require(!parts.empty(), Err::ShapeMismatch, "concat_rows: no parts");
  int rows = 0;
  for (const Matrix& p : parts) {
    require(p.cols == parts[0].cols, Err::ShapeMismatch, "concat_rows: column counts differ");
    rows += p.rows;
  }
  Matrix c(rows, parts[0].cols);
  int at = 0;
  for (const Matrix& p : parts) {
    std::memcpy(c.row(at), p.a.data(), p.a.size() * sizeof(double));
    at += p.rows;
  }
  return c;
}

Matrix concat_cols(const std::vector<Matrix>& parts) {
  require(!parts.empty(), Err::ShapeMismatch, "concat_cols: no parts");
  int cols = 0;
  for (const Matrix& p : parts) {
    require(p.rows == parts[0].rows, Err::ShapeMismatch, "concat_cols: row counts differ");
    cols += p.cols;
  }
  Matrix c(parts[0].rows, cols);
  int at = 0;
  for (const Matrix& p : parts) {
    for (int i = 0; i < p.rows; ++i)
      std::memcpy(c.row(i) + at, p.row(i), static_cast<size_t>(p.cols) * sizeof(double));
    at += p.cols;
  }
  return c;
}

Matrix slice_rows(const Matrix& a, int r0, int r1) {
  require(0 <= r0 && r0 < r1 && r1 <= a.rows, Err::ShapeMismatch, "slice_rows: bad range");
  Matrix c(r1 - r0, a.cols);
  std::memcpy(c.a.data(), a.row(r0), c.a.size() * sizeof(double));
  return c;
}

Matrix reshape(const Matrix& a, int r, int c) {
  require(r * c == a.size(), Err::ShapeMismatch, "reshape: element count differs");
  Matrix m = a;
  m.rows = r;
  m.cols = c;
  return m;
}

Matrix qr_orthonormalize(const Matrix& a) {
  require(a.rows >= a.cols && a.cols >= 1, Err::ShapeMismatch,
          "qr_orthonormalize: need rows >= cols >= 1");
  Matrix q = a;
  std::vector<double> orig_norm(a.cols);
  for (int j = 0; j < a.cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < a.rows; ++i) s += a(i, j) * a(i, j);
    orig_norm[j] = std::sqrt(s);
  }
  // Modified Gram-Schmidt, applied twice for orthonormality near machine
  // precision.
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < q.cols; ++j) {
      for (int p = 0; p < j; ++p) {
        double proj = 0.0;
        for (int i = 0; i < q.rows; ++i) proj += q(i, p) * q(i, j);
        for (int i = 0; i < q.rows; ++i) q(i, j) -= proj * q(i, p);
      }
      double s = 0.0;
      for (int i = 0; i < q.rows; ++i) s += q(i, j) * q(i, j);
      const double nrm = std::sqrt(s);
      require(nrm > 1e-12 * (orig_norm[j] > 0.0 ? orig_norm[j] : 1.0), Err::RankDeficient,
              "qr_orthonormalize: column " + std::to_string(j) + " is linearly dependent");
      for (int i = 0; i < q.rows; ++i) q(i, j) /= nrm;
    }
  }
  return q;
}

namespace {

// Cholesky factor of s (lower triangular, in place copy).  Returns false on a
// non-positive pivot.
bool cholesky(const Matrix& s, Matrix& l) {
  const int n = s.rows;
  l = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = s(i, j);
      for (int k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(sum > 0.0)) return false;
        l(i, i) = std::sqrt(sum);
      } else {
        l(i, j) = sum / l(j, j);
      }
    }
  }
  return true;
}

}  // namespace

Matrix solve_spd(const Matrix& s, const Matrix& b) {
  require(s.rows == s.cols, Err::ShapeMismatch, "solve_spd: matrix not square");
  require(s.rows == b.rows, Err::ShapeMismatch, "solve_spd: rhs rows differ");
  Matrix l;
  require(cholesky(s, l), Err::Singular, "solve_spd: matrix not positive definite");
  const int n = s.rows;
  Matrix x = b;
  // Forward substitution L y = b, then back substitution L^T x = y, column-wise.
  for (int j = 0; j < b.cols; ++j) {
    for (int i = 0; i < n; ++i) {
      double sum = x(i, j);
      for (int k = 0; k < i; ++k) sum -= l(i, k) * x(k, j);
      x(i, j) = sum / l(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
      double sum = x(i, j);
      for (int k = i + 1; k < n; ++k) sum -= l(k, i) * x(k, j);
      x(i, j) = sum / l(i, i);
    }
  }
  return x;
}

Matrix pseudo_inverse(const Matrix& a, double ridge) {
  require(ridge >= 0.0, Err::BadConfig, "pseudo_inverse: ridge must be >= 0");
  Matrix at = transpose(a);
  Matrix g = matmul(at, a);
  for (int i = 0; i < g.rows; ++i) g(i, i) += ridge;
  Matrix l;
  if (!cholesky(g, l)) {
    fail(Err::Singular, "pseudo_inverse: gram matrix not positive definite");
  }
  if (ridge == 0.0) {
    double dmax = l(0, 0), dmin = l(0, 0);
    for (int i = 1; i < l.rows; ++i) {
      dmax = std::max(dmax, l(i, i));
      dmin = std::min(dmin, l(i, i));
    }
    const double cond = (dmax / dmin) * (dmax / dmin);
    require(cond <= 1e12, Err::Singular, "pseudo_inverse: condition estimate exceeds 1e12");
  }
  return solve_spd(g, at);
}

const char* err_name(Err e) {
  switch (e) {
    case Err::BadConfig: return "BadConfig";
    case Err::IoError: return "IoError";
    case Err::CorruptFile: return "CorruptFile";
    case Err::VersionMismatch: return "VersionMismatch";
    case Err::MissingLabels: return "MissingLabels";
    case Err::EmptyScores: return "EmptyScores";
    case Err::RankDeficient: return "RankDeficient";
    case Err::Singular: return "Singular";
    case Err::NonFiniteLoss: return "NonFiniteLoss";
    case Err::NonFiniteGradient: return "NonFiniteGradient";
    case Err::SingleClass: return "SingleClass";
    case Err::NoPositives: return "NoPositives";
    case Err::MissingStats: return "MissingStats";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::NonScalarRoot: return "NonScalarRoot";
    case Err::SeriesTooShort: return "SeriesTooShort";
    case Err::TooFewWindows: return "TooFewWindows";
    case Err::EmptySegment: return "EmptySegment";
    case Err::EmptyBatch: return "EmptyBatch";
  }
  return "UnknownError";
}

int err_exit_code(Err e) {
  switch (e) {
    case Err::BadConfig:
    case Err::MissingLabels:
      return 2;
    case Err::IoError:
    case Err::CorruptFile:
    case Err::VersionMismatch:
    case Err::EmptyScores:
      return 3;
    case Err::RankDeficient:
    case Err::Singular:
    case Err::NonFiniteLoss:
    case Err::NonFiniteGradient:
    case Err::SingleClass:
    case Err::NoPositives:
    case Err::MissingStats:
      return 4;
    default:
      return 5;
  }
}

}  // namespace cicada
