#include "a3d2/conv.hpp"

#ifdef A3D2_USE_CBLAS
#include <cblas.h>
#endif

namespace a3d2::detail {

void sgemm_rm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
              const float* b, int ldb, float beta, float* c, int ldc) {
#ifdef A3D2_USE_CBLAS
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#else
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (int p = 0; p < k; ++p) {
                const float av = trans_a ? a[static_cast<size_t>(p) * lda + i]
                                         : a[static_cast<size_t>(i) * lda + p];
                const float bv = trans_b ? b[static_cast<size_t>(j) * ldb + p]
                                         : b[static_cast<size_t>(p) * ldb + j];
                acc += av * bv;
            }
            float* dst = &c[static_cast<size_t>(i) * ldc + j];
            *dst = alpha * acc + beta * (*dst);
        }
    }
#endif
}

}  // namespace a3d2::detail
