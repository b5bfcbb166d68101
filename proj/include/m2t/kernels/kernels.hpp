#pragma once

// Dense arithmetic kernels behind the tensor engine.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant chosen at runtime from CPUID. Both variants accumulate
// each output element over the reduction axis in ascending order, so a
// given ISA is bit-reproducible; scalar and AVX2 agree to rounding.
//
// All matrices are row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>

namespace m2t::kernels {

enum class Isa { scalar, avx2 };

/// ISA currently used by the dispatching entry points.
Isa active_isa() noexcept;

/// Best ISA the host supports.
Isa detected_isa() noexcept;

/// Pin dispatch to `isa`. Requests the host cannot run fall back to scalar.
/// Returns the ISA actually selected.
Isa select_isa(Isa isa) noexcept;

std::string_view isa_name(Isa isa) noexcept;

/// Worker threads used by gemm_*. Results do not depend on this value:
/// work is split over output columns, never over the reduction axis.
void set_threads(int n);
int threads() noexcept;

template <typename T>
struct MatView {
    const T* data;
    std::size_t ld;
};

/// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);

/// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);

/// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);

/// y += alpha * x
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);

template <typename T>
T dot(std::size_t n, const T* x, const T* y);

// Per-ISA entry points. Exposed for equivalence tests; production code
// calls the dispatching functions above.
namespace scalar {
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <typename T>
T dot(std::size_t n, const T* x, const T* y);
} // namespace scalar

namespace avx2 {
bool compiled() noexcept;
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, MatView<T> a, MatView<T> b,
             T* c, std::size_t ldc, bool accumulate);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <typename T>
T dot(std::size_t n, const T* x, const T* y);
} // namespace avx2

} // namespace m2t::kernels
