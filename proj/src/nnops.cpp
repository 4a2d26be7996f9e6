#include "ldmr/nnops.hpp"

#include <cblas.h>

namespace ldmr::nn {

namespace {
struct BlasInit {
  BlasInit() {
#ifdef OPENBLAS_VERSION
    openblas_set_num_threads(1);
#endif
  }
};
const BlasInit blas_init;

inline CBLAS_TRANSPOSE tr(bool t) { return t ? CblasTrans : CblasNoTrans; }
}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, tr(trans_a), tr(trans_b), m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, tr(trans_a), tr(trans_b), m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

}  // namespace ldmr::nn
