#include "m2t/ops.hpp"

#include <algorithm>
#include <cmath>

namespace m2t {

namespace {

struct AxisTaps {
    std::vector<Index> lo, hi;
    std::vector<double> frac; // weight of `hi`
};

AxisTaps axis_taps(Index in, Index factor)
{
    AxisTaps t;
    const Index out = in * factor;
    t.lo.resize(static_cast<std::size_t>(out));
    t.hi.resize(static_cast<std::size_t>(out));
    t.frac.resize(static_cast<std::size_t>(out));
    for (Index o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        src = std::max(src, 0.0);
        Index i0 = static_cast<Index>(std::floor(src));
        i0 = std::min(i0, in - 1);
        const Index i1 = std::min(i0 + 1, in - 1);
        const auto u = static_cast<std::size_t>(o);
        t.lo[u] = i0;
        t.hi[u] = i1;
        t.frac[u] = i1 == i0 ? 0.0 : src - static_cast<double>(i0);
    }
    return t;
}

} // namespace

template <typename T>
BasicTensor<T> trilinear_upsample(const BasicTensor<T>& x, Index factor)
{
    if (factor < 2)
        throw ShapeError("trilinear_upsample: factor must be >= 2");
    if (x.rank() != 5)
        throw ShapeError("trilinear_upsample: expected [B,C,D,H,W], got " + shape_str(x.shape()));
    const Vec3 in{x.dim(2), x.dim(3), x.dim(4)};
    const Vec3 out{in[0] * factor, in[1] * factor, in[2] * factor};
    std::array<AxisTaps, 3> taps{axis_taps(in[0], factor), axis_taps(in[1], factor),
                                 axis_taps(in[2], factor)};
    const Index bc = x.dim(0) * x.dim(1);
    const Index iv = in[0] * in[1] * in[2];
    const Index ov = out[0] * out[1] * out[2];

    // Visits every output voxel with its 8 (source index, weight) pairs.
    auto sweep = [in, out, bc, iv, ov](const std::array<AxisTaps, 3>& tp, auto&& visit) {
        for (Index c = 0; c < bc; ++c)
            for (Index d = 0; d < out[0]; ++d) {
                const auto ud = static_cast<std::size_t>(d);
                const Index d0 = tp[0].lo[ud], d1 = tp[0].hi[ud];
                const double fd = tp[0].frac[ud];
                for (Index h = 0; h < out[1]; ++h) {
                    const auto uh = static_cast<std::size_t>(h);
                    const Index h0 = tp[1].lo[uh], h1 = tp[1].hi[uh];
                    const double fh = tp[1].frac[uh];
                    for (Index w = 0; w < out[2]; ++w) {
                        const auto uw = static_cast<std::size_t>(w);
                        const Index w0 = tp[2].lo[uw], w1 = tp[2].hi[uw];
                        const double fw = tp[2].frac[uw];
                        const Index o = c * ov + (d * out[1] + h) * out[2] + w;
                        const Index base = c * iv;
                        const auto at = [&](Index dd, Index hh, Index ww) {
                            return base + (dd * in[1] + hh) * in[2] + ww;
                        };
                        visit(o, at(d0, h0, w0), (1 - fd) * (1 - fh) * (1 - fw));
                        visit(o, at(d0, h0, w1), (1 - fd) * (1 - fh) * fw);
                        visit(o, at(d0, h1, w0), (1 - fd) * fh * (1 - fw));
                        visit(o, at(d0, h1, w1), (1 - fd) * fh * fw);
                        visit(o, at(d1, h0, w0), fd * (1 - fh) * (1 - fw));
                        visit(o, at(d1, h0, w1), fd * (1 - fh) * fw);
                        visit(o, at(d1, h1, w0), fd * fh * (1 - fw));
                        visit(o, at(d1, h1, w1), fd * fh * fw);
                    }
                }
            }
    };

    const auto xv = x.data();
    std::vector<double> acc(static_cast<std::size_t>(bc * ov), 0.0);
    sweep(taps, [&](Index o, Index s, double wgt) {
        acc[static_cast<std::size_t>(o)] += wgt * static_cast<double>(xv[static_cast<std::size_t>(s)]);
    });
    std::vector<T> res(acc.begin(), acc.end());
    BasicTensor<T> y(Shape{x.dim(0), x.dim(1), out[0], out[1], out[2]}, std::move(res));
    detail::check_finite(y, "trilinear_upsample");

    if (auto* tape = detail::recording_tape<T>({&x})) {
        detail::mark_tracked(y);
        tape->record("trilinear_upsample",
                     [xn = x.node(), yn = y.node(), taps = std::move(taps), sweep] {
                         if (yn->grad.empty())
                             return;
                         auto& gx = detail::grad_buffer(*xn);
                         const auto& gy = yn->grad;
                         sweep(taps, [&](Index o, Index s, double wgt) {
                             gx[static_cast<std::size_t>(s)] += static_cast<T>(
                                 wgt * static_cast<double>(gy[static_cast<std::size_t>(o)]));
                         });
                     });
    }
    return y;
}

#define M2T_INSTANTIATE(T) template BasicTensor<T> trilinear_upsample(const BasicTensor<T>&, Index);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
