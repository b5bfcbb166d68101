#pragma once

// 3-D shifted-window multi-head self-attention.

#include "m2t/params.hpp"

#include <string>
#include <vector>

namespace m2t {

struct WindowSpec {
    Vec3 size{4, 4, 4};
    Vec3 shift{0, 0, 0};

    static WindowSpec regular(const Vec3& size) { return WindowSpec{size, {0, 0, 0}}; }
    /// Shift of floor(w/2) on every axis.
    static WindowSpec shifted_half(const Vec3& size)
    {
        return WindowSpec{size, {size[0] / 2, size[1] / 2, size[2] / 2}};
    }

    bool shifted() const { return shift[0] != 0 || shift[1] != 0 || shift[2] != 0; }
    Index tokens() const { return size[0] * size[1] * size[2]; }

    /// Throws ConfigError unless sizes are positive and every shift is 0 or size/2.
    void validate() const;
};

/// The window actually used on a feature map: along axes where the extent
/// does not exceed the window, the window shrinks to the extent and the
/// shift is dropped.
WindowSpec effective_window(const WindowSpec& requested, const Vec3& extents);

/// Extents rounded up to multiples of the window.
Vec3 padded_extents(const Vec3& extents, const WindowSpec& spec);

Index window_count(const Vec3& extents, const WindowSpec& spec);

/// [B,C,D,H,W] -> [B*NW, T, C], window n = b*NW + linear window index.
template <typename T>
BasicTensor<T> window_partition(const BasicTensor<T>& x, const WindowSpec& spec);

/// Inverse of window_partition.
template <typename T>
BasicTensor<T> window_reverse(const BasicTensor<T>& windows, const WindowSpec& spec, Index batch,
                              Index channels, const Vec3& extents);

/// Torus roll by -shift (forward) or +shift (inverse).
template <typename T>
BasicTensor<T> cyclic_shift(const BasicTensor<T>& x, const WindowSpec& spec, bool inverse);

inline constexpr double kMaskValue = -1e9;

/// [NW, T, T] additive mask for shifted windows; 0 within a region, kMaskValue across.
template <typename T>
BasicTensor<T> attention_mask(const WindowSpec& spec, const Vec3& extents);

/// (2wd-1)(2wh-1)(2ww-1)
Index relative_table_size(const Vec3& table_window);

/// Table row for every token pair (i, j) of `window`, row-major [T*T], laid
/// out on a table built for `table_window` (which must be at least as large).
std::vector<Index> relative_position_index(const Vec3& window, const Vec3& table_window);

template <typename T>
struct SwinBlockParams {
    Index channels = 0;
    Index heads = 1;
    Vec3 table_window{1, 1, 1};
    NormParams<T> norm1, norm2;
    LinearLayer<T> qkv;     // C -> 3C
    LinearLayer<T> proj;    // C -> C
    LinearLayer<T> mlp_in;  // C -> 4C
    LinearLayer<T> mlp_out; // 4C -> C
    BasicTensor<T> bias_table; // [L, heads]
};

inline constexpr Index kMlpRatio = 4;

template <typename T>
SwinBlockParams<T> make_swin_block(ParameterSet<T>& ps, const std::string& name, Index channels,
                                   Index heads, const Vec3& window);

/// Truncated normal (sigma 0.02) on projection, MLP and bias-table weights.
template <typename T>
void init_swin_block(SwinBlockParams<T>& p, Rng& rng);

/// Multi-head attention inside windows. `tokens` is [B*NW, T, C] and already
/// normalized; `mask` is [NW, T, T] or undefined. Returns the projected output.
template <typename T>
BasicTensor<T> window_attention(const BasicTensor<T>& tokens, const SwinBlockParams<T>& p,
                                const Vec3& window, const BasicTensor<T>& mask);

/// x + WMSA(LN(x)), then + MLP(LN(.)). Extents not divisible by the window
/// are zero-padded for the block and cropped afterwards.
template <typename T>
BasicTensor<T> swin_block(const BasicTensor<T>& x, const SwinBlockParams<T>& p,
                          const WindowSpec& spec);

} // namespace m2t
