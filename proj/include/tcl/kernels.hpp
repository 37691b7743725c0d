#pragma once

#include <span>

#include "tcl/matrix.hpp"

// Dense kernels used by every model in the library.
//
// tcl::kernels holds the OpenMP versions; tcl::kernels::reference holds plain
// serial loops that are kept as the test oracle. Each output cell is produced
// by exactly one thread and accumulated in ascending index order, so both
// versions return bit-identical results regardless of thread count.
namespace tcl::kernels {

// a (n x m) * b (m x p)
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) (m x n) * b (n x p)
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a (n x m) * transpose(b) (m x p)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// m + 1 * bias^T
Matrix add_bias(Matrix m, std::span<const double> bias);
Vector column_sums(const Matrix& m);
// Per-row inner products of two equally shaped matrices.
Vector row_dots(const Matrix& a, const Matrix& b);

template <class F>
Matrix elementwise_apply(Matrix m, F&& f) {
  auto& d = m.data();
  const long n = static_cast<long>(d.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (long i = 0; i < n; ++i) d[i] = f(d[i]);
  return m;
}

// Thread count used by the parallel kernels (OpenMP max threads).
int thread_count();
void set_thread_count(int n);

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix add_bias(Matrix m, std::span<const double> bias);
Vector column_sums(const Matrix& m);
Vector row_dots(const Matrix& a, const Matrix& b);

template <class F>
Matrix elementwise_apply(Matrix m, F&& f) {
  for (double& x : m.data()) x = f(x);
  return m;
}

}  // namespace reference
}  // namespace tcl::kernels
