#include "tcl/kernels.hpp"

#include <cmath>

#include <omp.h>

namespace tcl {

bool all_finite(std::span<const double> v) noexcept {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr long kParallelWork = 1L << 15;

void check_inner(std::size_t lhs, std::size_t rhs, const char* op) {
  if (lhs != rhs) throw ArgumentError(std::string(op) + ": inner dimensions disagree");
}

}  // namespace

int thread_count() { return omp_get_max_threads(); }
void set_thread_count(int n) { omp_set_num_threads(n > 0 ? n : 1); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  const long n = static_cast<long>(a.rows());
  const std::size_t m = a.cols(), p = b.cols();
  Matrix c(a.rows(), p);
  const long work = n * static_cast<long>(m * p);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < n; ++i) {
    double* crow = c.row(i).data();
    const double* arow = a.row(i).data();
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k).data();
      for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  const std::size_t n = a.rows(), p = b.cols();
  const long m = static_cast<long>(a.cols());
  Matrix c(a.cols(), p);
  const long work = m * static_cast<long>(n * p);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < m; ++i) {
    double* crow = c.row(i).data();
    for (std::size_t r = 0; r < n; ++r) {
      const double ari = a(r, i);
      const double* brow = b.row(r).data();
      for (std::size_t j = 0; j < p; ++j) crow[j] += ari * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  const long n = static_cast<long>(a.rows());
  const std::size_t m = a.cols(), p = b.rows();
  Matrix c(a.rows(), p);
  const long work = n * static_cast<long>(m * p);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < n; ++i) {
    const double* arow = a.row(i).data();
    for (std::size_t j = 0; j < p; ++j) {
      const double* brow = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix add_bias(Matrix m, std::span<const double> bias) {
  if (bias.size() != m.cols()) throw ArgumentError("add_bias: bias length != cols");
  const long n = static_cast<long>(m.rows());
  const std::size_t p = m.cols();
#pragma omp parallel for schedule(static) if (n * static_cast<long>(p) > kParallelWork)
  for (long i = 0; i < n; ++i) {
    double* row = m.row(i).data();
    for (std::size_t j = 0; j < p; ++j) row[j] += bias[j];
  }
  return m;
}

Vector column_sums(const Matrix& m) {
  const long p = static_cast<long>(m.cols());
  const std::size_t n = m.rows();
  Vector s(m.cols(), 0.0);
#pragma omp parallel for schedule(static) if (static_cast<long>(n) * p > kParallelWork)
  for (long j = 0; j < p; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += m(i, j);
    s[j] = acc;
  }
  return s;
}

Vector row_dots(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ArgumentError("row_dots: shape mismatch");
  const long n = static_cast<long>(a.rows());
  const std::size_t p = a.cols();
  Vector out(a.rows(), 0.0);
#pragma omp parallel for schedule(static) if (n * static_cast<long>(p) > kParallelWork)
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += a(i, j) * b(i, j);
    out[i] = s;
  }
  return out;
}

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), "matmul_tn");
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, i) * b(r, j);
      c(i, j) = s;
    }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), "matmul_nt");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
  return c;
}

Matrix add_bias(Matrix m, std::span<const double> bias) {
  if (bias.size() != m.cols()) throw ArgumentError("add_bias: bias length != cols");
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += bias[j];
  return m;
}

Vector column_sums(const Matrix& m) {
  Vector s(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) s[j] += m(i, j);
  return s;
}

Vector row_dots(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ArgumentError("row_dots: shape mismatch");
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[i] += a(i, j) * b(i, j);
  return out;
}

}  // namespace reference
}  // namespace kernels
}  // namespace tcl
