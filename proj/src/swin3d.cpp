#include "m2t/swin3d.hpp"

#include <cmath>

namespace m2t {

void WindowSpec::validate() const
{
    for (int a = 0; a < 3; ++a) {
        if (size[a] < 1)
            throw ConfigError("window size must be positive, got " + vec3_str(size));
        if (shift[a] != 0 && shift[a] != size[a] / 2)
            throw ConfigError("window shift must be 0 or half the window, got shift " +
                              vec3_str(shift) + " for window " + vec3_str(size));
    }
}

WindowSpec effective_window(const WindowSpec& requested, const Vec3& extents)
{
    requested.validate();
    WindowSpec w = requested;
    for (int a = 0; a < 3; ++a)
        if (extents[a] <= w.size[a]) {
            w.size[a] = extents[a];
            w.shift[a] = 0;
        }
    return w;
}

Vec3 padded_extents(const Vec3& extents, const WindowSpec& spec)
{
    Vec3 out{};
    for (int a = 0; a < 3; ++a)
        out[a] = (extents[a] + spec.size[a] - 1) / spec.size[a] * spec.size[a];
    return out;
}

Index window_count(const Vec3& extents, const WindowSpec& spec)
{
    Index n = 1;
    for (int a = 0; a < 3; ++a) {
        if (extents[a] % spec.size[a] != 0)
            throw ShapeError("extents " + vec3_str(extents) + " not divisible by window " +
                             vec3_str(spec.size));
        n *= extents[a] / spec.size[a];
    }
    return n;
}

namespace {

// For window-partitioned layout: element (n, t, c) <-> voxel (b, c, d, h, w).
// visit(window_offset, volume_offset) over all elements.
template <typename F>
void for_each_window_element(Index batch, Index channels, const Vec3& ext, const WindowSpec& spec,
                             F&& visit)
{
    const Vec3 nw{ext[0] / spec.size[0], ext[1] / spec.size[1], ext[2] / spec.size[2]};
    const Index windows = nw[0] * nw[1] * nw[2];
    const Index tokens = spec.tokens();
    const Index vol = ext[0] * ext[1] * ext[2];
    for (Index b = 0; b < batch; ++b)
        for (Index d = 0; d < ext[0]; ++d)
            for (Index h = 0; h < ext[1]; ++h)
                for (Index w = 0; w < ext[2]; ++w) {
                    const Index win = ((d / spec.size[0]) * nw[1] + h / spec.size[1]) * nw[2] +
                                      w / spec.size[2];
                    const Index tok = ((d % spec.size[0]) * spec.size[1] + h % spec.size[1]) *
                                          spec.size[2] +
                                      w % spec.size[2];
                    const Index row = ((b * windows + win) * tokens + tok) * channels;
                    const Index vox = (d * ext[1] + h) * ext[2] + w;
                    for (Index c = 0; c < channels; ++c)
                        visit(row + c, (b * channels + c) * vol + vox);
                }
}

Index axis_region(Index p, Index extent, Index window, Index shift)
{
    if (shift == 0 || p < extent - window)
        return 0;
    return p < extent - shift ? 1 : 2;
}

template <typename T>
void require_params(const BasicTensor<T>& x, const SwinBlockParams<T>& p, Index channel_axis)
{
    if (x.dim(channel_axis) != p.channels)
        throw ShapeError("swin block expects " + std::to_string(p.channels) + " channels, got " +
                         shape_str(x.shape()));
}

} // namespace

template <typename T>
BasicTensor<T> window_partition(const BasicTensor<T>& x, const WindowSpec& spec)
{
    if (x.rank() != 5)
        throw ShapeError("window_partition: expected [B,C,D,H,W], got " + shape_str(x.shape()));
    const Vec3 ext{x.dim(2), x.dim(3), x.dim(4)};
    const Index windows = window_count(ext, spec);
    const Index batch = x.dim(0), channels = x.dim(1);
    auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(x.numel()));
    for_each_window_element(batch, channels, ext, spec, [&](Index win_off, Index vol_off) {
        (*map)[static_cast<std::size_t>(win_off)] = vol_off;
    });
    return gather(x, Shape{batch * windows, spec.tokens(), channels}, std::move(map));
}

template <typename T>
BasicTensor<T> window_reverse(const BasicTensor<T>& windows, const WindowSpec& spec, Index batch,
                              Index channels, const Vec3& extents)
{
    const Index nw = window_count(extents, spec);
    if (windows.shape() != Shape{batch * nw, spec.tokens(), channels})
        throw ShapeError("window_reverse: got " + shape_str(windows.shape()) + " for batch " +
                         std::to_string(batch) + " and extents " + vec3_str(extents));
    auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(windows.numel()));
    for_each_window_element(batch, channels, extents, spec, [&](Index win_off, Index vol_off) {
        (*map)[static_cast<std::size_t>(vol_off)] = win_off;
    });
    return gather(windows, Shape{batch, channels, extents[0], extents[1], extents[2]},
                  std::move(map));
}

template <typename T>
BasicTensor<T> cyclic_shift(const BasicTensor<T>& x, const WindowSpec& spec, bool inverse)
{
    if (x.rank() != 5)
        throw ShapeError("cyclic_shift: expected [B,C,D,H,W], got " + shape_str(x.shape()));
    const Vec3 ext{x.dim(2), x.dim(3), x.dim(4)};
    Vec3 off{};
    for (int a = 0; a < 3; ++a) {
        const Index s = spec.shift[a] % ext[a];
        off[a] = inverse ? ext[a] - s : s;
    }
    const Index bc = x.dim(0) * x.dim(1);
    const Index vol = ext[0] * ext[1] * ext[2];
    auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(x.numel()));
    // out(p) = in((p + off) mod ext): forward moves voxel `shift` to the origin.
    for (Index c = 0; c < bc; ++c)
        for (Index d = 0; d < ext[0]; ++d)
            for (Index h = 0; h < ext[1]; ++h)
                for (Index w = 0; w < ext[2]; ++w) {
                    const Index sd = (d + off[0]) % ext[0];
                    const Index sh = (h + off[1]) % ext[1];
                    const Index sw = (w + off[2]) % ext[2];
                    (*map)[static_cast<std::size_t>(c * vol + (d * ext[1] + h) * ext[2] + w)] =
                        c * vol + (sd * ext[1] + sh) * ext[2] + sw;
                }
    return gather(x, x.shape(), std::move(map));
}

template <typename T>
BasicTensor<T> attention_mask(const WindowSpec& spec, const Vec3& extents)
{
    if (!spec.shifted())
        throw ConfigError("attention_mask: window is not shifted");
    const Index nw = window_count(extents, spec);
    const Index tokens = spec.tokens();
    // Region label per voxel of the shifted frame.
    std::vector<Index> label(static_cast<std::size_t>(extents[0] * extents[1] * extents[2]));
    for (Index d = 0; d < extents[0]; ++d)
        for (Index h = 0; h < extents[1]; ++h)
            for (Index w = 0; w < extents[2]; ++w)
                label[static_cast<std::size_t>((d * extents[1] + h) * extents[2] + w)] =
                    (axis_region(d, extents[0], spec.size[0], spec.shift[0]) * 3 +
                     axis_region(h, extents[1], spec.size[1], spec.shift[1])) * 3 +
                    axis_region(w, extents[2], spec.size[2], spec.shift[2]);
    std::vector<Index> win_label(static_cast<std::size_t>(nw * tokens));
    for_each_window_element(1, 1, extents, spec, [&](Index win_off, Index vol_off) {
        win_label[static_cast<std::size_t>(win_off)] = label[static_cast<std::size_t>(vol_off)];
    });
    std::vector<T> mask(static_cast<std::size_t>(nw * tokens * tokens));
    for (Index n = 0; n < nw; ++n)
        for (Index i = 0; i < tokens; ++i)
            for (Index j = 0; j < tokens; ++j)
                mask[static_cast<std::size_t>((n * tokens + i) * tokens + j)] =
                    win_label[static_cast<std::size_t>(n * tokens + i)] ==
                            win_label[static_cast<std::size_t>(n * tokens + j)]
                        ? T(0)
                        : static_cast<T>(kMaskValue);
    return BasicTensor<T>(Shape{nw, tokens, tokens}, std::move(mask));
}

Index relative_table_size(const Vec3& tw)
{
    return (2 * tw[0] - 1) * (2 * tw[1] - 1) * (2 * tw[2] - 1);
}

std::vector<Index> relative_position_index(const Vec3& window, const Vec3& tw)
{
    for (int a = 0; a < 3; ++a)
        if (window[a] > tw[a] || window[a] < 1)
            throw ShapeError("window " + vec3_str(window) + " exceeds bias table window " +
                             vec3_str(tw));
    const Index tokens = window[0] * window[1] * window[2];
    std::vector<Index> idx(static_cast<std::size_t>(tokens * tokens));
    for (Index i = 0; i < tokens; ++i) {
        const Index di = i / (window[1] * window[2]), hi = i / window[2] % window[1],
                    wi = i % window[2];
        for (Index j = 0; j < tokens; ++j) {
            const Index dj = j / (window[1] * window[2]), hj = j / window[2] % window[1],
                        wj = j % window[2];
            const Index od = di - dj + tw[0] - 1;
            const Index oh = hi - hj + tw[1] - 1;
            const Index ow = wi - wj + tw[2] - 1;
            idx[static_cast<std::size_t>(i * tokens + j)] =
                (od * (2 * tw[1] - 1) + oh) * (2 * tw[2] - 1) + ow;
        }
    }
    return idx;
}

template <typename T>
SwinBlockParams<T> make_swin_block(ParameterSet<T>& ps, const std::string& name, Index channels,
                                   Index heads, const Vec3& window)
{
    if (heads < 1 || channels % heads != 0)
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide channels (" +
                          std::to_string(channels) + ")");
    SwinBlockParams<T> p;
    p.channels = channels;
    p.heads = heads;
    p.table_window = window;
    p.norm1 = make_norm(ps, name + ".norm1", channels);
    p.qkv = make_linear(ps, name + ".qkv", channels, 3 * channels);
    p.proj = make_linear(ps, name + ".proj", channels, channels);
    p.bias_table = ps.add(name + ".bias_table", Shape{relative_table_size(window), heads});
    p.norm2 = make_norm(ps, name + ".norm2", channels);
    p.mlp_in = make_linear(ps, name + ".mlp_in", channels, kMlpRatio * channels);
    p.mlp_out = make_linear(ps, name + ".mlp_out", kMlpRatio * channels, channels);
    return p;
}

template <typename T>
void init_swin_block(SwinBlockParams<T>& p, Rng& rng)
{
    constexpr double sigma = 0.02;
    init_trunc_normal(p.qkv.weight, sigma, rng);
    init_trunc_normal(p.proj.weight, sigma, rng);
    init_trunc_normal(p.bias_table, sigma, rng);
    init_trunc_normal(p.mlp_in.weight, sigma, rng);
    init_trunc_normal(p.mlp_out.weight, sigma, rng);
}

template <typename T>
BasicTensor<T> window_attention(const BasicTensor<T>& tokens, const SwinBlockParams<T>& p,
                                const Vec3& window, const BasicTensor<T>& mask)
{
    if (tokens.rank() != 3)
        throw ShapeError("window_attention: expected [N,T,C], got " + shape_str(tokens.shape()));
    require_params(tokens, p, 2);
    const Index n = tokens.dim(0), t = tokens.dim(1), c = p.channels, heads = p.heads;
    const Index hd = c / heads;
    if (t != window[0] * window[1] * window[2])
        throw ShapeError("window_attention: token count does not match window " + vec3_str(window));

    const auto qkv = p.qkv(tokens); // [N, T, 3C]
    auto split = [&](Index part) {
        auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(n * t * c));
        std::size_t o = 0;
        for (Index b = 0; b < n; ++b)
            for (Index h = 0; h < heads; ++h)
                for (Index i = 0; i < t; ++i)
                    for (Index e = 0; e < hd; ++e)
                        (*map)[o++] = (b * t + i) * 3 * c + part * c + h * hd + e;
        return gather(qkv, Shape{n * heads, t, hd}, std::move(map));
    };
    const auto q = scale(split(0), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
    const auto k = split(1);
    const auto v = split(2);

    auto scores = matmul(q, k, false, true).reshape(Shape{n, heads, t, t});
    {
        const auto rel = relative_position_index(window, p.table_window);
        auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(heads * t * t));
        for (Index h = 0; h < heads; ++h)
            for (Index ij = 0; ij < t * t; ++ij)
                (*map)[static_cast<std::size_t>(h * t * t + ij)] =
                    rel[static_cast<std::size_t>(ij)] * heads + h;
        scores = add_broadcast(scores, gather(p.bias_table, Shape{heads, t, t}, std::move(map)));
    }
    if (mask.defined()) {
        const Index nw = mask.dim(0);
        if (mask.shape() != Shape{nw, t, t} || n % nw != 0)
            throw ShapeError("window_attention: mask " + shape_str(mask.shape()) +
                             " does not fit " + std::to_string(n) + " windows");
        std::vector<T> expanded(static_cast<std::size_t>(nw * heads * t * t));
        const auto mv = mask.data();
        for (Index w = 0; w < nw; ++w)
            for (Index h = 0; h < heads; ++h)
                std::copy_n(mv.begin() + w * t * t, t * t, expanded.begin() + (w * heads + h) * t * t);
        scores = add_broadcast(scores.reshape(Shape{n / nw, nw, heads, t, t}),
                               BasicTensor<T>(Shape{nw, heads, t, t}, std::move(expanded)));
    }
    const auto attn = softmax_lastdim(scores).reshape(Shape{n * heads, t, t});
    const auto out = matmul(attn, v); // [N*heads, T, hd]

    auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(n * t * c));
    std::size_t o = 0;
    for (Index b = 0; b < n; ++b)
        for (Index i = 0; i < t; ++i)
            for (Index h = 0; h < heads; ++h)
                for (Index e = 0; e < hd; ++e)
                    (*map)[o++] = ((b * heads + h) * t + i) * hd + e;
    return p.proj(gather(out, Shape{n, t, c}, std::move(map)));
}

template <typename T>
BasicTensor<T> swin_block(const BasicTensor<T>& x, const SwinBlockParams<T>& p,
                          const WindowSpec& spec)
{
    if (x.rank() != 5)
        throw ShapeError("swin_block: expected [B,C,D,H,W], got " + shape_str(x.shape()));
    require_params(x, p, 1);
    const Index batch = x.dim(0);
    const Vec3 ext{x.dim(2), x.dim(3), x.dim(4)};
    const WindowSpec win = effective_window(spec, ext);
    const Vec3 padded = padded_extents(ext, win);
    const bool pads = padded != ext;

    auto h = pads ? pad3d(x, Vec3{0, 0, 0},
                          Vec3{padded[0] - ext[0], padded[1] - ext[1], padded[2] - ext[2]})
                  : x;
    if (win.shifted())
        h = cyclic_shift(h, win, false);
    const auto mask = win.shifted() ? attention_mask<T>(win, padded) : BasicTensor<T>();

    // LN and MLP act per token, so they commute with the partition permutation.
    auto tok = window_partition(h, win);
    tok = add(tok, window_attention(layer_norm(tok, p.norm1.scale, p.norm1.shift), p, win.size, mask));
    const auto mlp = p.mlp_out(relu(p.mlp_in(layer_norm(tok, p.norm2.scale, p.norm2.shift))));
    tok = add(tok, mlp);

    auto y = window_reverse(tok, win, batch, p.channels, padded);
    if (win.shifted())
        y = cyclic_shift(y, win, true);
    if (pads)
        y = crop3d(y, Vec3{0, 0, 0}, ext);
    return y;
}

#define M2T_INSTANTIATE(T)                                                                     \
    template BasicTensor<T> window_partition(const BasicTensor<T>&, const WindowSpec&);        \
    template BasicTensor<T> window_reverse(const BasicTensor<T>&, const WindowSpec&, Index,    \
                                           Index, const Vec3&);                                \
    template BasicTensor<T> cyclic_shift(const BasicTensor<T>&, const WindowSpec&, bool);      \
    template BasicTensor<T> attention_mask<T>(const WindowSpec&, const Vec3&);                 \
    template SwinBlockParams<T> make_swin_block(ParameterSet<T>&, const std::string&, Index,   \
                                                Index, const Vec3&);                           \
    template void init_swin_block(SwinBlockParams<T>&, Rng&);                                  \
    template BasicTensor<T> window_attention(const BasicTensor<T>&, const SwinBlockParams<T>&, \
                                             const Vec3&, const BasicTensor<T>&);              \
    template BasicTensor<T> swin_block(const BasicTensor<T>&, const SwinBlockParams<T>&,       \
                                       const WindowSpec&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
