#include "m2t/ops.hpp"

#include <bit>
#include <cmath>

namespace m2t {

namespace {

// Orthonormal 2x2x2 Haar basis: coefficient of subband s for corner v is
// (-1)^popcount(s & v) / (2*sqrt(2)). The 8x8 matrix is symmetric and its
// own inverse, so analysis, synthesis and both adjoints share one routine.
constexpr double kHaarScale = 0.35355339059327376220; // (1/sqrt(2))^3

struct HaarGeom {
    Index batch, channels;
    Vec3 half; // subband extents
};

// analysis: src holds voxels [B,C,2*half], dst receives subbands [B,8C,half].
// Otherwise the roles of src and dst are swapped.
template <typename T>
void haar_apply(const HaarGeom& g, const T* src, T* dst, bool analysis, bool accumulate)
{
    const Index hd = g.half[0], hh = g.half[1], hw = g.half[2];
    const Index full_h = 2 * hh, full_w = 2 * hw;
    const Index full_vol = 8 * hd * hh * hw;
    const Index half_vol = hd * hh * hw;
    const Index c8 = 8 * g.channels;
    for (Index b = 0; b < g.batch; ++b)
        for (Index c = 0; c < g.channels; ++c) {
            const Index vox_base = (b * g.channels + c) * full_vol;
            for (Index d = 0; d < hd; ++d)
                for (Index h = 0; h < hh; ++h)
                    for (Index w = 0; w < hw; ++w) {
                        Index vox[8];
                        Index sub[8];
                        for (int v = 0; v < 8; ++v) {
                            const Index dd = 2 * d + ((v >> 2) & 1);
                            const Index yy = 2 * h + ((v >> 1) & 1);
                            const Index xx = 2 * w + (v & 1);
                            vox[v] = vox_base + (dd * full_h + yy) * full_w + xx;
                            sub[v] = (b * c8 + v * g.channels + c) * half_vol + (d * hh + h) * hw + w;
                        }
                        const Index* in_idx = analysis ? vox : sub;
                        const Index* out_idx = analysis ? sub : vox;
                        double in[8];
                        for (int v = 0; v < 8; ++v)
                            in[v] = static_cast<double>(src[in_idx[v]]);
                        for (int s = 0; s < 8; ++s) {
                            double acc = 0.0;
                            for (int v = 0; v < 8; ++v)
                                acc += (std::popcount(static_cast<unsigned>(s & v)) & 1) ? -in[v] : in[v];
                            const T val = static_cast<T>(acc * kHaarScale);
                            if (accumulate)
                                dst[out_idx[s]] += val;
                            else
                                dst[out_idx[s]] = val;
                        }
                    }
        }
}

} // namespace

template <typename T>
BasicTensor<T> haar3d(const BasicTensor<T>& x)
{
    if (x.rank() != 5)
        throw ShapeError("haar3d: expected [B,C,D,H,W], got " + shape_str(x.shape()));
    for (int a = 0; a < 3; ++a)
        if (x.dim(2 + a) % 2 != 0 || x.dim(2 + a) < 2)
            throw ShapeError("haar3d: spatial extents must be even, got " + shape_str(x.shape()));
    const HaarGeom g{x.dim(0), x.dim(1), {x.dim(2) / 2, x.dim(3) / 2, x.dim(4) / 2}};
    std::vector<T> out(x.data().size());
    haar_apply(g, x.data().data(), out.data(), true, false);
    BasicTensor<T> y(Shape{g.batch, 8 * g.channels, g.half[0], g.half[1], g.half[2]},
                     std::move(out));
    detail::check_finite(y, "haar3d");
    if (auto* tape = detail::recording_tape<T>({&x})) {
        detail::mark_tracked(y);
        tape->record("haar3d", [xn = x.node(), yn = y.node(), g] {
            if (yn->grad.empty())
                return;
            haar_apply(g, yn->grad.data(), detail::grad_buffer(*xn).data(), false, true);
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> haar3d_inverse(const BasicTensor<T>& subbands)
{
    if (subbands.rank() != 5 || subbands.dim(1) % 8 != 0)
        throw ShapeError("haar3d_inverse: expected [B,8C,d,h,w], got " +
                         shape_str(subbands.shape()));
    const HaarGeom g{subbands.dim(0), subbands.dim(1) / 8,
                     {subbands.dim(2), subbands.dim(3), subbands.dim(4)}};
    std::vector<T> out(subbands.data().size());
    haar_apply(g, subbands.data().data(), out.data(), false, false);
    BasicTensor<T> y(Shape{g.batch, g.channels, 2 * g.half[0], 2 * g.half[1], 2 * g.half[2]},
                     std::move(out));
    detail::check_finite(y, "haar3d_inverse");
    if (auto* tape = detail::recording_tape<T>({&subbands})) {
        detail::mark_tracked(y);
        tape->record("haar3d_inverse", [sn = subbands.node(), yn = y.node(), g] {
            if (yn->grad.empty())
                return;
            haar_apply(g, yn->grad.data(), detail::grad_buffer(*sn).data(), true, true);
        });
    }
    return y;
}

#define M2T_INSTANTIATE(T)                                                                     \
    template BasicTensor<T> haar3d(const BasicTensor<T>&);                                     \
    template BasicTensor<T> haar3d_inverse(const BasicTensor<T>&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
