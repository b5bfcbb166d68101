#pragma once

// Differentiable operators. Unless noted, 5-D tensors use [B, C, D, H, W]
// order and every op is instantiated for float and double.

#include "m2t/tensor.hpp"

#include <memory>
#include <vector>

namespace m2t {

// ---- elementwise ----------------------------------------------------------

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

/// a + b where b's shape equals a trailing suffix of a's shape; b is
/// broadcast over the leading axes.
template <typename T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope);
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x);

// ---- reductions -----------------------------------------------------------

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

/// mean |a - b| over all elements.
template <typename T>
BasicTensor<T> l1_mean(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// mean over elements of BCE-with-logits against a constant target,
/// max(z,0) - z*t + log1p(exp(-|z|)).
template <typename T>
BasicTensor<T> bce_with_logits_mean(const BasicTensor<T>& logits, T target);

// ---- linear algebra -------------------------------------------------------

/// Batched product over the last two axes. Leading axes of `a` and `b` must
/// match, or `b` may be rank 2 and shared across the batch.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b, bool trans_a = false,
                      bool trans_b = false);

/// x[..., in] * weight[out, in]^T + bias[out]. `bias` may be undefined.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

// ---- convolution ----------------------------------------------------------

struct Conv3dOptions {
    Vec3 stride{1, 1, 1};
    Vec3 padding{0, 0, 0};
    Vec3 dilation{1, 1, 1};

    /// Stride-1 options that keep spatial extents for an odd cubic kernel.
    static Conv3dOptions same(Index kernel, Index dilation = 1)
    {
        const Index p = dilation * (kernel - 1) / 2;
        return Conv3dOptions{{1, 1, 1}, {p, p, p}, {dilation, dilation, dilation}};
    }
};

/// Output extent along one axis; throws ShapeError when non-positive.
Index conv_output_extent(Index in, Index kernel, Index stride, Index padding, Index dilation);

/// x[B,Cin,D,H,W] conv weight[Cout,Cin,kd,kh,kw] (+ bias[Cout]). Kernel
/// extents must be odd. `bias` may be undefined.
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, const Conv3dOptions& opts);

// ---- normalization --------------------------------------------------------

inline constexpr double kNormEps = 1e-5;

/// Per (batch, channel) standardization over D*H*W, then scale/shift per channel.
template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                             const BasicTensor<T>& shift, T eps = T(kNormEps));

/// Standardization over the last axis, then gamma/beta per feature.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps = T(kNormEps));

template <typename T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x);

// ---- layout ---------------------------------------------------------------

using IndexMap = std::shared_ptr<const std::vector<Index>>;

/// out[i] = x[map[i]], or 0 where map[i] < 0. Backward scatters-adds.
/// The building block for padding, cropping, permutations and shifts.
template <typename T>
BasicTensor<T> gather(const BasicTensor<T>& x, Shape out_shape, IndexMap map);

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, Index axis);

/// Spatial crop of a 5-D tensor: [origin, origin + extent) per axis.
template <typename T>
BasicTensor<T> crop3d(const BasicTensor<T>& x, const Vec3& origin, const Vec3& extent);

/// Zero padding of a 5-D tensor's spatial axes.
template <typename T>
BasicTensor<T> pad3d(const BasicTensor<T>& x, const Vec3& before, const Vec3& after);

/// Appends one mirrored voxel on every odd spatial axis so all become even.
template <typename T>
BasicTensor<T> reflect_pad_to_even(const BasicTensor<T>& x);

/// Axis permutation of an arbitrary-rank tensor: out axis i = in axis perm[i].
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<Index>& perm);

// ---- resampling & wavelets -----------------------------------------------

/// Trilinear upsampling by an integer factor, align_corners = false:
/// output index o samples source coordinate (o + 0.5) / factor - 0.5,
/// clamped to [0, extent - 1].
template <typename T>
BasicTensor<T> trilinear_upsample(const BasicTensor<T>& x, Index factor);

/// Single-level orthonormal 3-D Haar analysis. x[B,C,D,H,W] with even
/// spatial extents -> [B, 8C, D/2, H/2, W/2], subband-major channels
/// (channel s*C + c holds subband s of input channel c). Subband bits are
/// (depth, height, width) with 1 = high-pass, so s = 0 is LLL and 7 is HHH.
template <typename T>
BasicTensor<T> haar3d(const BasicTensor<T>& x);

/// Exact inverse of haar3d.
template <typename T>
BasicTensor<T> haar3d_inverse(const BasicTensor<T>& subbands);

} // namespace m2t
