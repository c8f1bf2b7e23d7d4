#pragma once

// Thin row-major GEMM front end over CBLAS.

namespace poolnet::detail {

/// C = alpha * op(A) * op(B) + beta * C, all row-major.
/// op(A) is m x k, op(B) is k x n.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float *a, int lda, const float *b, int ldb,
          float beta, float *c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double *a, int lda, const double *b,
          int ldb, double beta, double *c, int ldc);

/// Pin the BLAS backend to one thread so summation order is reproducible.
void set_blas_single_threaded();

} // namespace poolnet::detail
