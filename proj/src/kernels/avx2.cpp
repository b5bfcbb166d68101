// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma;
// nothing here may be called unless the dispatcher has confirmed CPU support.
//
// gemm: B is packed into a K x NR panel (NR = two vector widths), then a
// 4 x NR register tile is swept down the rows of A. Each C element is a
// single FMA chain over k = 0..K-1, matching the scalar reference bitwise.

#include "m2t/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#if defined(__x86_64__) || defined(_M_X64)
#define M2T_HAVE_AVX2_TU 1
#include <immintrin.h>
#else
#define M2T_HAVE_AVX2_TU 0
#endif

namespace m2t::kernels::avx2 {

#if M2T_HAVE_AVX2_TU

namespace {

template <typename T>
struct Simd;

template <>
struct Simd<float> {
    using reg = __m256;
    static constexpr std::size_t lanes = 8;
    static reg zero() { return _mm256_setzero_ps(); }
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg splat(float v) { return _mm256_set1_ps(v); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static float hsum(reg v)
    {
        const __m128 lo = _mm256_castps256_ps128(v);
        const __m128 hi = _mm256_extractf128_ps(v, 1);
        __m128 s = _mm_add_ps(lo, hi);
        s = _mm_add_ps(s, _mm_movehl_ps(s, s));
        s = _mm_add_ss(s, _mm_movehdup_ps(s));
        return _mm_cvtss_f32(s);
    }
};

template <>
struct Simd<double> {
    using reg = __m256d;
    static constexpr std::size_t lanes = 4;
    static reg zero() { return _mm256_setzero_pd(); }
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg splat(double v) { return _mm256_set1_pd(v); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static double hsum(reg v)
    {
        const __m128d lo = _mm256_castpd256_pd128(v);
        const __m128d hi = _mm256_extractf128_pd(v, 1);
        const __m128d s = _mm_add_pd(lo, hi);
        return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
    }
};

template <typename T, std::size_t Rows>
void micro_tile(std::size_t k, const T* a, std::size_t ars, std::size_t acs, const T* panel,
                T* c, std::size_t ldc, std::size_t cols, bool accumulate)
{
    using S = Simd<T>;
    constexpr std::size_t nr = 2 * S::lanes;
    typename S::reg acc[Rows][2];

    alignas(32) T tile[Rows][nr];
    const bool full = cols == nr;
    for (std::size_t r = 0; r < Rows; ++r) {
        if (!accumulate) {
            acc[r][0] = S::zero();
            acc[r][1] = S::zero();
        } else if (full) {
            acc[r][0] = S::load(c + r * ldc);
            acc[r][1] = S::load(c + r * ldc + S::lanes);
        } else {
            std::fill(tile[r], tile[r] + nr, T(0));
            std::copy(c + r * ldc, c + r * ldc + cols, tile[r]);
            acc[r][0] = S::load(tile[r]);
            acc[r][1] = S::load(tile[r] + S::lanes);
        }
    }

    for (std::size_t p = 0; p < k; ++p) {
        const auto b0 = S::load(panel + p * nr);
        const auto b1 = S::load(panel + p * nr + S::lanes);
        for (std::size_t r = 0; r < Rows; ++r) {
            const auto av = S::splat(a[r * ars + p * acs]);
            acc[r][0] = S::fmadd(av, b0, acc[r][0]);
            acc[r][1] = S::fmadd(av, b1, acc[r][1]);
        }
    }

    for (std::size_t r = 0; r < Rows; ++r) {
        if (full) {
            S::store(c + r * ldc, acc[r][0]);
            S::store(c + r * ldc + S::lanes, acc[r][1]);
        } else {
            S::store(tile[r], acc[r][0]);
            S::store(tile[r] + S::lanes, acc[r][1]);
            std::copy(tile[r], tile[r] + cols, c + r * ldc);
        }
    }
}

template <typename T>
void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t ars,
                  std::size_t acs, const T* b, std::size_t brs, std::size_t bcs, T* c,
                  std::size_t ldc, bool accumulate)
{
    using S = Simd<T>;
    constexpr std::size_t nr = 2 * S::lanes;
    constexpr std::size_t mr = 4;

    if (k == 0) {
        if (!accumulate)
            for (std::size_t i = 0; i < m; ++i)
                std::fill(c + i * ldc, c + i * ldc + n, T(0));
        return;
    }

    thread_local std::vector<T> panel;
    panel.resize(k * nr);

    for (std::size_t j0 = 0; j0 < n; j0 += nr) {
        const std::size_t cols = std::min(nr, n - j0);
        for (std::size_t p = 0; p < k; ++p) {
            T* dst = panel.data() + p * nr;
            const T* src = b + p * brs + j0 * bcs;
            std::size_t jj = 0;
            if (bcs == 1)
                for (; jj < cols; ++jj)
                    dst[jj] = src[jj];
            else
                for (; jj < cols; ++jj)
                    dst[jj] = src[jj * bcs];
            for (; jj < nr; ++jj)
                dst[jj] = T(0);
        }

        std::size_t i0 = 0;
        for (; i0 + mr <= m; i0 += mr)
            micro_tile<T, 4>(k, a + i0 * ars, ars, acs, panel.data(), c + i0 * ldc + j0, ldc,
                             cols, accumulate);
        const T* arest = a + i0 * ars;
        T* crest = c + i0 * ldc + j0;
        switch (m - i0) {
        case 3:
            micro_tile<T, 3>(k, arest, ars, acs, panel.data(), crest, ldc, cols, accumulate);
            break;
        case 2:
            micro_tile<T, 2>(k, arest, ars, acs, panel.data(), crest, ldc, cols, accumulate);
            break;
        case 1:
            micro_tile<T, 1>(k, arest, ars, acs, panel.data(), crest, ldc, cols, accumulate);
            break;
        default:
            break;
        }
    }
}

} // namespace

bool compiled() noexcept { return true; }

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
    using S = Simd<T>;
    const auto av = S::splat(alpha);
    std::size_t i = 0;
    for (; i + S::lanes <= n; i += S::lanes)
        S::store(y + i, S::fmadd(av, S::load(x + i), S::load(y + i)));
    for (; i < n; ++i)
        y[i] = std::fma(alpha, x[i], y[i]);
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y)
{
    using S = Simd<T>;
    auto acc = S::zero();
    std::size_t i = 0;
    for (; i + S::lanes <= n; i += S::lanes)
        acc = S::fmadd(S::load(x + i), S::load(y + i), acc);
    T total = S::hsum(acc);
    for (; i < n; ++i)
        total = std::fma(x[i], y[i], total);
    return total;
}

#else // !M2T_HAVE_AVX2_TU

bool compiled() noexcept { return false; }

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    scalar::gemm_nn(m, n, k, a, b, c, ldc, accumulate);
}
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    scalar::gemm_nt(m, n, k, a, b, c, ldc, accumulate);
}
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    scalar::gemm_tn(m, n, k, a, b, c, ldc, accumulate);
}
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y)
{
    scalar::axpy(n, alpha, x, y);
}
template <typename T>
T dot(std::size_t n, const T* x, const T* y)
{
    return scalar::dot(n, x, y);
}

#endif

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

} // namespace m2t::kernels::avx2
