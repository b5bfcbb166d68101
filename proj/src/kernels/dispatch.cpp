#include "m2t/kernels/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace m2t::kernels {

namespace {

Isa probe() noexcept
{
#if defined(__x86_64__) || defined(_M_X64)
    if (avx2::compiled()) {
        __builtin_cpu_init();
        if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
            return Isa::avx2;
    }
#endif
    return Isa::scalar;
}

Isa initial() noexcept
{
    const Isa best = probe();
    // M2T_ISA=scalar forces the reference path (used to cross-check runs).
    if (const char* env = std::getenv("M2T_ISA"); env && std::string(env) == "scalar")
        return Isa::scalar;
    return best;
}

std::atomic<Isa>& current()
{
    static std::atomic<Isa> isa{initial()};
    return isa;
}

std::atomic<int> g_threads{1};

constexpr std::size_t kColumnAlign = 16;

// Splits output columns [0, n) across workers. `run(j0, j1)` must touch only
// columns j0..j1-1 of C.
template <typename Fn>
void split_columns(std::size_t n, std::size_t work, Fn&& run)
{
    const int nt = g_threads.load(std::memory_order_relaxed);
    const std::size_t blocks = (n + kColumnAlign - 1) / kColumnAlign;
    if (nt <= 1 || blocks < 2 || work < (std::size_t(1) << 18)) {
        run(std::size_t(0), n);
        return;
    }
    const std::size_t parts = std::min<std::size_t>(static_cast<std::size_t>(nt), blocks);
    const std::size_t per = (blocks + parts - 1) / parts;
    std::vector<std::thread> pool;
    pool.reserve(parts - 1);
    for (std::size_t t = 1; t < parts; ++t) {
        const std::size_t j0 = std::min(n, t * per * kColumnAlign);
        const std::size_t j1 = std::min(n, (t + 1) * per * kColumnAlign);
        if (j0 < j1)
            pool.emplace_back([&run, j0, j1] { run(j0, j1); });
    }
    run(std::size_t(0), std::min(n, per * kColumnAlign));
    for (auto& th : pool)
        th.join();
}

} // namespace

Isa detected_isa() noexcept
{
    static const Isa best = probe();
    return best;
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

Isa select_isa(Isa isa) noexcept
{
    const Isa chosen = (isa == Isa::avx2 && detected_isa() != Isa::avx2) ? Isa::scalar : isa;
    current().store(chosen, std::memory_order_relaxed);
    return chosen;
}

std::string_view isa_name(Isa isa) noexcept
{
    switch (isa) {
    case Isa::avx2:
        return "avx2";
    case Isa::scalar:
        break;
    }
    return "scalar";
}

void set_threads(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }

int threads() noexcept { return g_threads.load(std::memory_order_relaxed); }

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    const bool simd = active_isa() == Isa::avx2;
    split_columns(n, m * n * k, [&](std::size_t j0, std::size_t j1) {
        const MatView<T> bs{b.data + j0, b.ld};
        if (simd)
            avx2::gemm_nn(m, j1 - j0, k, a, bs, c + j0, ldc, accumulate);
        else
            scalar::gemm_nn(m, j1 - j0, k, a, bs, c + j0, ldc, accumulate);
    });
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    const bool simd = active_isa() == Isa::avx2;
    split_columns(n, m * n * k, [&](std::size_t j0, std::size_t j1) {
        const MatView<T> bs{b.data + j0 * b.ld, b.ld};
        if (simd)
            avx2::gemm_nt(m, j1 - j0, k, a, bs, c + j0, ldc, accumulate);
        else
            scalar::gemm_nt(m, j1 - j0, k, a, bs, c + j0, ldc, accumulate);
    });
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b, T* c,
             std::size_t ldc, bool accumulate)
{
    const bool simd = active_isa() == Isa::avx2;
    split_columns(n, m * n * k, [&](std::size_t j0, std::size_t j1) {
        const MatView<T> bs{b.data + j0, b.ld};
        if (simd)
            avx2::gemm_tn(m, j1 - j0, k, a, bs, c + j0, ldc, accumulate);
        else
            scalar::gemm_tn(m, j1 - j0, k, a, bs, c + j0, ldc, accumulate);
    });
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y)
{
    if (active_isa() == Isa::avx2)
        avx2::axpy(n, alpha, x, y);
    else
        scalar::axpy(n, alpha, x, y);
}

template <typename T>
T dot(std::size_t n, const T* x, const T* y)
{
    return active_isa() == Isa::avx2 ? avx2::dot(n, x, y) : scalar::dot(n, x, y);
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

} // namespace m2t::kernels
