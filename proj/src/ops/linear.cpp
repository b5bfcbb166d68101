#include "m2t/kernels/kernels.hpp"
#include "m2t/ops.hpp"

#include <algorithm>

namespace m2t {

namespace kn = kernels;

namespace {

struct MatmulDims {
    Index batch;
    Index m, n, k;
    bool shared_b;
};

template <typename T>
MatmulDims matmul_dims(const BasicTensor<T>& a, const BasicTensor<T>& b, bool ta, bool tb)
{
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul needs rank >= 2 operands");
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    const Index ar = a.rank();
    const Index br = b.rank();
    const Index m = ta ? as[ar - 1] : as[ar - 2];
    const Index ka = ta ? as[ar - 2] : as[ar - 1];
    const Index kb = tb ? bs[br - 1] : bs[br - 2];
    const Index n = tb ? bs[br - 2] : bs[br - 1];
    if (ka != kb)
        throw ShapeError("matmul inner extents differ: " + shape_str(as) + " x " + shape_str(bs));
    Index batch = 1;
    for (Index i = 0; i < ar - 2; ++i)
        batch *= as[static_cast<std::size_t>(i)];
    const bool shared = br == 2;
    if (!shared) {
        if (ar != br || !std::equal(as.begin(), as.end() - 2, bs.begin()))
            throw ShapeError("matmul batch extents differ: " + shape_str(as) + " x " +
                             shape_str(bs));
    }
    return {batch, m, n, ka, shared};
}

// C[m,n] (+)= op(A) op(B) for a single batch item.
template <typename T>
void product(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool acc)
{
    if (!ta && !tb) {
        kn::gemm_nn<T>(m, n, k, {a, k}, {b, n}, c, n, acc);
    } else if (!ta && tb) {
        kn::gemm_nt<T>(m, n, k, {a, k}, {b, k}, c, n, acc);
    } else if (ta && !tb) {
        kn::gemm_tn<T>(m, n, k, {a, m}, {b, n}, c, n, acc);
    } else {
        std::vector<T> at(m * k);
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i)
                at[i * k + p] = a[p * m + i];
        kn::gemm_nt<T>(m, n, k, {at.data(), k}, {b, k}, c, n, acc);
    }
}

} // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool trans_a,
                      bool trans_b)
{
    const MatmulDims d = matmul_dims(a, b, trans_a, trans_b);
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(d.m);
    out_shape.push_back(d.n);

    const auto m = static_cast<std::size_t>(d.m);
    const auto n = static_cast<std::size_t>(d.n);
    const auto k = static_cast<std::size_t>(d.k);
    std::vector<T> out(static_cast<std::size_t>(d.batch) * m * n);
    const T* ap = a.data().data();
    const T* bp = b.data().data();
    for (Index bi = 0; bi < d.batch; ++bi) {
        const auto ub = static_cast<std::size_t>(bi);
        product(trans_a, trans_b, m, n, k, ap + ub * m * k, d.shared_b ? bp : bp + ub * k * n,
                out.data() + ub * m * n, false);
    }
    BasicTensor<T> y(std::move(out_shape), std::move(out));
    detail::check_finite(y, "matmul");

    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        detail::mark_tracked(y);
        tape->record("matmul", [an = a.node(), bn = b.node(), yn = y.node(), d, trans_a,
                                trans_b] {
            if (yn->grad.empty())
                return;
            const auto m = static_cast<std::size_t>(d.m);
            const auto n = static_cast<std::size_t>(d.n);
            const auto k = static_cast<std::size_t>(d.k);
            const T* g = yn->grad.data();
            for (Index bi = 0; bi < d.batch; ++bi) {
                const auto ub = static_cast<std::size_t>(bi);
                const T* gc = g + ub * m * n;
                const T* ai = an->value.data() + ub * m * k;
                const T* bi_ = bn->value.data() + (d.shared_b ? 0 : ub * k * n);
                if (an->requires_grad) {
                    T* ga = detail::grad_buffer(*an).data() + ub * m * k;
                    if (!trans_a) // dA[m,k] = dC * op(B)^T
                        product(false, !trans_b, m, k, n, gc, bi_, ga, true);
                    else // dA[k,m] = op(B) * dC^T
                        product(trans_b, true, k, m, n, bi_, gc, ga, true);
                }
                if (bn->requires_grad) {
                    T* gb = detail::grad_buffer(*bn).data() + (d.shared_b ? 0 : ub * k * n);
                    if (!trans_b) // dB[k,n] = op(A)^T * dC
                        product(!trans_a, false, k, n, m, ai, gc, gb, true);
                    else // dB[n,k] = dC^T * op(A)
                        product(true, trans_a, n, k, m, gc, ai, gb, true);
                }
            }
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias)
{
    if (weight.rank() != 2 || x.rank() < 1 || x.dim(-1) != weight.dim(1))
        throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
    const Index in = weight.dim(1);
    const Index outf = weight.dim(0);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outf))
        throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
    const Index rows = x.numel() / in;

    Shape out_shape = x.shape();
    out_shape.back() = outf;
    const auto r = static_cast<std::size_t>(rows);
    const auto ni = static_cast<std::size_t>(in);
    const auto no = static_cast<std::size_t>(outf);
    std::vector<T> out(r * no);
    kn::gemm_nt<T>(r, no, ni, {x.data().data(), ni}, {weight.data().data(), ni}, out.data(), no,
                   false);
    if (bias.defined()) {
        const auto bv = bias.data();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < no; ++j)
                out[i * no + j] += bv[j];
    }
    BasicTensor<T> y(std::move(out_shape), std::move(out));
    detail::check_finite(y, "linear");

    if (auto* tape = detail::recording_tape<T>({&x, &weight, &bias})) {
        detail::mark_tracked(y);
        auto bn = bias.defined() ? bias.node() : nullptr;
        tape->record("linear", [xn = x.node(), wn = weight.node(), bn, yn = y.node(), r, ni, no] {
            if (yn->grad.empty())
                return;
            const T* g = yn->grad.data();
            if (xn->requires_grad)
                kn::gemm_nn<T>(r, ni, no, {g, no}, {wn->value.data(), ni},
                               detail::grad_buffer(*xn).data(), ni, true);
            if (wn->requires_grad)
                kn::gemm_tn<T>(no, ni, r, {g, no}, {xn->value.data(), ni},
                               detail::grad_buffer(*wn).data(), ni, true);
            if (bn && bn->requires_grad) {
                auto& gb = detail::grad_buffer(*bn);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < no; ++j)
                        gb[j] += g[i * no + j];
            }
        });
    }
    return y;
}

#define M2T_INSTANTIATE(T)                                                                     \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&, bool, bool);  \
    template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                   const BasicTensor<T>&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
