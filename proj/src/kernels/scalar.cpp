// Scalar reference kernels. Accumulation uses std::fma in ascending
// reduction order, which is exactly what the AVX2 gemm variants do per lane.

#include "m2t/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace m2t::kernels::scalar {

namespace {

// Shared driver: element (i,k) of A is a[i*ars + k*acs], (k,j) of B is b[k*brs + j*bcs].
template <typename T>
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t ars,
                  std::size_t acs, const T* b, std::size_t brs, std::size_t bcs, T* c,
                  std::size_t ldc, bool accumulate)
{
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * ldc;
        if (!accumulate)
            std::fill(crow, crow + n, T(0));
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * ars + p * acs];
            const T* bp = b + p * brs;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] = std::fma(av, bp[j * bcs], crow[j]);
        }
    }
}

} // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    gemm_strided(m, n, k, a.data, a.ld, 1, b.data, b.ld, 1, c, ldc, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    gemm_strided(m, n, k, a.data, a.ld, 1, b.data, 1, b.ld, c, ldc, accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    gemm_strided(m, n, k, a.data, 1, a.ld, b.data, b.ld, 1, c, ldc, accumulate);
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y)
{
    for (std::size_t i = 0; i < n; ++i)
        y[i] = std::fma(alpha, x[i], y[i]);
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y)
{
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i)
        acc = std::fma(x[i], y[i], acc);
    return acc;
}

#define M2T_INSTANTIATE(T)                                                                     \
    template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, MatView<T>, MatView<T>,   \
                             T*, std::size_t, bool);                                          \
    template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, MatView<T>, MatView<T>,   \
                             T*, std::size_t, bool);                                          \
    template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, MatView<T>, MatView<T>,   \
                             T*, std::size_t, bool);                                          \
    template void axpy<T>(std::size_t, T, const T*, T*);                                      \
    template T dot<T>(std::size_t, const T*, const T*);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t::kernels::scalar
