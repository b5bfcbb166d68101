#include "m2t/kernels/kernels.hpp"
#include "m2t/ops.hpp"

#include <algorithm>

namespace m2t {

namespace kn = kernels;

Index conv_output_extent(Index in, Index kernel, Index stride, Index padding, Index dilation)
{
    if (stride < 1 || dilation < 1 || padding < 0)
        throw ShapeError("conv3d: stride and dilation must be >= 1, padding >= 0");
    const Index span = in + 2 * padding - dilation * (kernel - 1) - 1;
    if (span < 0)
        throw ShapeError("conv3d: non-positive output extent (input " + std::to_string(in) +
                         ", kernel " + std::to_string(kernel) + ", dilation " +
                         std::to_string(dilation) + ", padding " + std::to_string(padding) + ")");
    return span / stride + 1;
}

namespace {

struct ConvGeom {
    Index batch, cin, cout;
    Vec3 in, kernel, out;
    Conv3dOptions opts;

    Index in_vol() const { return in[0] * in[1] * in[2]; }
    Index out_vol() const { return out[0] * out[1] * out[2]; }
    Index taps() const { return kernel[0] * kernel[1] * kernel[2]; }
    Index cols() const { return cin * taps(); }
    bool pointwise() const
    {
        return taps() == 1 && opts.stride == Vec3{1, 1, 1} && opts.padding == Vec3{0, 0, 0};
    }
};

// Output voxels are handled in slabs of whole (od, oh) rows so the column
// buffer stays cache resident. Row r = od * out[1] + oh.
constexpr std::size_t kColBudgetBytes = 512 * 1024;

template <typename T>
Index rows_per_chunk(const ConvGeom& g)
{
    const Index rows = g.out[0] * g.out[1];
    const auto per_row = static_cast<std::size_t>(g.cols() * g.out[2]) * sizeof(T);
    return std::clamp<Index>(static_cast<Index>(kColBudgetBytes / std::max<std::size_t>(per_row, 1)),
                             1, rows);
}

// Valid [lo, hi) output columns along W for tap kw, and the source offset.
struct WRun {
    Index lo, hi, src0;
};

WRun w_run(const ConvGeom& g, Index kw)
{
    const Index off = kw * g.opts.dilation[2] - g.opts.padding[2];
    const Index s = g.opts.stride[2];
    // ow*s + off in [0, in)
    Index lo = off >= 0 ? 0 : (-off + s - 1) / s;
    Index hi = g.in[2] - off <= 0 ? 0 : (g.in[2] - off + s - 1) / s;
    hi = std::min(hi, g.out[2]);
    lo = std::min(lo, hi);
    return {lo, hi, off};
}

// col[(c*taps + t), (r - r0) * out[2] + ow] = x[c, src(t, r, ow)] or 0.
template <typename T>
void im2col_rows(const ConvGeom& g, const T* x, Index r0, Index r1, T* col)
{
    const Index taps = g.taps();
    const Index ow_n = g.out[2];
    const Index ld = (r1 - r0) * ow_n;
    const Index s = g.opts.stride[2];
    for (Index c = 0; c < g.cin; ++c) {
        const T* xc = x + c * g.in_vol();
        for (Index kd = 0; kd < g.kernel[0]; ++kd)
            for (Index kh = 0; kh < g.kernel[1]; ++kh)
                for (Index kw = 0; kw < g.kernel[2]; ++kw) {
                    const Index t = (kd * g.kernel[1] + kh) * g.kernel[2] + kw;
                    const WRun run = w_run(g, kw);
                    T* row = col + (c * taps + t) * ld;
                    for (Index r = r0; r < r1; ++r) {
                        const Index od = r / g.out[1], oh = r % g.out[1];
                        const Index id = od * g.opts.stride[0] - g.opts.padding[0] + kd * g.opts.dilation[0];
                        const Index ih = oh * g.opts.stride[1] - g.opts.padding[1] + kh * g.opts.dilation[1];
                        T* dst = row + (r - r0) * ow_n;
                        if (id < 0 || id >= g.in[0] || ih < 0 || ih >= g.in[1]) {
                            std::fill(dst, dst + ow_n, T(0));
                            continue;
                        }
                        const T* src = xc + (id * g.in[1] + ih) * g.in[2] + run.src0;
                        std::fill(dst, dst + run.lo, T(0));
                        if (s == 1)
                            std::copy(src + run.lo, src + run.hi, dst + run.lo);
                        else
                            for (Index ow = run.lo; ow < run.hi; ++ow)
                                dst[ow] = src[ow * s];
                        std::fill(dst + run.hi, dst + ow_n, T(0));
                    }
                }
    }
}

// Adjoint of im2col_rows: dx[c, src(t, r, ow)] += dcol[...].
template <typename T>
void col2im_rows(const ConvGeom& g, const T* col, Index r0, Index r1, T* dx)
{
    const Index taps = g.taps();
    const Index ow_n = g.out[2];
    const Index ld = (r1 - r0) * ow_n;
    const Index s = g.opts.stride[2];
    for (Index c = 0; c < g.cin; ++c) {
        T* xc = dx + c * g.in_vol();
        for (Index kd = 0; kd < g.kernel[0]; ++kd)
            for (Index kh = 0; kh < g.kernel[1]; ++kh)
                for (Index kw = 0; kw < g.kernel[2]; ++kw) {
                    const Index t = (kd * g.kernel[1] + kh) * g.kernel[2] + kw;
                    const WRun run = w_run(g, kw);
                    const T* row = col + (c * taps + t) * ld;
                    for (Index r = r0; r < r1; ++r) {
                        const Index od = r / g.out[1], oh = r % g.out[1];
                        const Index id = od * g.opts.stride[0] - g.opts.padding[0] + kd * g.opts.dilation[0];
                        const Index ih = oh * g.opts.stride[1] - g.opts.padding[1] + kh * g.opts.dilation[1];
                        if (id < 0 || id >= g.in[0] || ih < 0 || ih >= g.in[1])
                            continue;
                        const T* src = row + (r - r0) * ow_n;
                        T* dst = xc + (id * g.in[1] + ih) * g.in[2] + run.src0;
                        if (s == 1)
                            for (Index ow = run.lo; ow < run.hi; ++ow)
                                dst[ow] += src[ow];
                        else
                            for (Index ow = run.lo; ow < run.hi; ++ow)
                                dst[ow * s] += src[ow];
                    }
                }
    }
}

template <typename T>
ConvGeom conv_geometry(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                       const Conv3dOptions& opts)
{
    if (x.rank() != 5)
        throw ShapeError("conv3d: input must be [B,C,D,H,W], got " + shape_str(x.shape()));
    if (w.rank() != 5)
        throw ShapeError("conv3d: weight must be [Cout,Cin,kd,kh,kw], got " + shape_str(w.shape()));
    if (w.dim(1) != x.dim(1))
        throw ShapeError("conv3d: weight expects " + std::to_string(w.dim(1)) +
                         " input channels, input has " + std::to_string(x.dim(1)));
    if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
        throw ShapeError("conv3d: bias shape " + shape_str(b.shape()));
    ConvGeom g{};
    g.batch = x.dim(0);
    g.cin = x.dim(1);
    g.cout = w.dim(0);
    g.opts = opts;
    for (int a = 0; a < 3; ++a) {
        g.in[a] = x.dim(2 + a);
        g.kernel[a] = w.dim(2 + a);
        if (g.kernel[a] % 2 == 0)
            throw ShapeError("conv3d: kernel extents must be odd, got " + shape_str(w.shape()));
        g.out[a] = conv_output_extent(g.in[a], g.kernel[a], opts.stride[a], opts.padding[a],
                                      opts.dilation[a]);
    }
    return g;
}

} // namespace

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, const Conv3dOptions& opts)
{
    const ConvGeom g = conv_geometry(x, weight, bias, opts);
    const auto ov = static_cast<std::size_t>(g.out_vol());
    const auto iv = static_cast<std::size_t>(g.in_vol());
    const auto kc = static_cast<std::size_t>(g.cols());
    const auto co = static_cast<std::size_t>(g.cout);
    const auto ci = static_cast<std::size_t>(g.cin);

    std::vector<T> out(static_cast<std::size_t>(g.batch) * co * ov);
    const Index chunk_rows = rows_per_chunk<T>(g);
    const Index rows = g.out[0] * g.out[1];
    std::vector<T> col(g.pointwise() ? 0 : kc * static_cast<std::size_t>(chunk_rows * g.out[2]));
    const T* xp = x.data().data();
    const T* wp = weight.data().data();
    for (Index b = 0; b < g.batch; ++b) {
        const T* xb = xp + static_cast<std::size_t>(b) * ci * iv;
        T* ob = out.data() + static_cast<std::size_t>(b) * co * ov;
        if (bias.defined()) {
            const auto bv = bias.data();
            for (std::size_t o = 0; o < co; ++o)
                std::fill(ob + o * ov, ob + (o + 1) * ov, bv[o]);
        }
        if (g.pointwise()) {
            kn::gemm_nn<T>(co, ov, kc, {wp, kc}, {xb, ov}, ob, ov, bias.defined());
            continue;
        }
        for (Index r0 = 0; r0 < rows; r0 += chunk_rows) {
            const Index r1 = std::min(rows, r0 + chunk_rows);
            const auto n = static_cast<std::size_t>((r1 - r0) * g.out[2]);
            im2col_rows(g, xb, r0, r1, col.data());
            kn::gemm_nn<T>(co, n, kc, {wp, kc}, {col.data(), n},
                           ob + static_cast<std::size_t>(r0 * g.out[2]), ov, bias.defined());
        }
    }

    Shape out_shape{g.batch, g.cout, g.out[0], g.out[1], g.out[2]};
    BasicTensor<T> y(std::move(out_shape), std::move(out));
    detail::check_finite(y, "conv3d");

    if (auto* tape = detail::recording_tape<T>({&x, &weight, &bias})) {
        detail::mark_tracked(y);
        auto bn = bias.defined() ? bias.node() : nullptr;
        tape->record("conv3d", [xn = x.node(), wn = weight.node(), bn, yn = y.node(), g] {
            if (yn->grad.empty())
                return;
            const auto ov = static_cast<std::size_t>(g.out_vol());
            const auto iv = static_cast<std::size_t>(g.in_vol());
            const auto kc = static_cast<std::size_t>(g.cols());
            const auto co = static_cast<std::size_t>(g.cout);
            const auto ci = static_cast<std::size_t>(g.cin);
            const Index chunk_rows = rows_per_chunk<T>(g);
            const Index rows = g.out[0] * g.out[1];
            const auto chunk_cols = static_cast<std::size_t>(chunk_rows * g.out[2]);
            std::vector<T> col(g.pointwise() || !wn->requires_grad ? 0 : kc * chunk_cols);
            std::vector<T> dcol(xn->requires_grad && !g.pointwise() ? kc * chunk_cols : 0);
            for (Index b = 0; b < g.batch; ++b) {
                const T* gy = yn->grad.data() + static_cast<std::size_t>(b) * co * ov;
                const T* xb = xn->value.data() + static_cast<std::size_t>(b) * ci * iv;
                if (bn && bn->requires_grad) {
                    auto& gb = detail::grad_buffer(*bn);
                    for (std::size_t o = 0; o < co; ++o) {
                        T acc = 0;
                        for (std::size_t p = 0; p < ov; ++p)
                            acc += gy[o * ov + p];
                        gb[o] += acc;
                    }
                }
                T* gx = xn->requires_grad
                            ? detail::grad_buffer(*xn).data() + static_cast<std::size_t>(b) * ci * iv
                            : nullptr;
                if (g.pointwise()) {
                    if (wn->requires_grad)
                        kn::gemm_nt<T>(co, kc, ov, {gy, ov}, {xb, ov}, detail::grad_buffer(*wn).data(),
                                       kc, true);
                    if (gx)
                        kn::gemm_tn<T>(kc, ov, co, {wn->value.data(), kc}, {gy, ov}, gx, ov, true);
                    continue;
                }
                for (Index r0 = 0; r0 < rows; r0 += chunk_rows) {
                    const Index r1 = std::min(rows, r0 + chunk_rows);
                    const auto n = static_cast<std::size_t>((r1 - r0) * g.out[2]);
                    const T* gyc = gy + static_cast<std::size_t>(r0 * g.out[2]);
                    if (wn->requires_grad) {
                        im2col_rows(g, xb, r0, r1, col.data());
                        // dW[co, kc] += dY[co, n] * col[kc, n]^T
                        kn::gemm_nt<T>(co, kc, n, {gyc, ov}, {col.data(), n},
                                       detail::grad_buffer(*wn).data(), kc, true);
                    }
                    if (gx) {
                        // dcol[kc, n] = W[co, kc]^T * dY[co, n]
                        kn::gemm_tn<T>(kc, n, co, {wn->value.data(), kc}, {gyc, ov}, dcol.data(), n,
                                       false);
                        col2im_rows(g, dcol.data(), r0, r1, gx);
                    }
                }
            }
        });
    }
    return y;
}

#define M2T_INSTANTIATE(T)                                                                     \
    template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicTensor<T>&,               \
                                   const BasicTensor<T>&, const Conv3dOptions&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
