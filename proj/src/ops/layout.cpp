#include "m2t/ops.hpp"

#include <numeric>

namespace m2t {

template <typename T>
BasicTensor<T> gather(const BasicTensor<T>& x, Shape out_shape, IndexMap map)
{
    if (!map || static_cast<Index>(map->size()) != numel(out_shape))
        throw ShapeError("gather: index map size does not match " + shape_str(out_shape));
    const auto xv = x.data();
    const Index n = x.numel();
    const auto& idx = *map;
    std::vector<T> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Index s = idx[i];
        if (s >= n)
            throw ShapeError("gather: index out of range");
        out[i] = s >= 0 ? xv[static_cast<std::size_t>(s)] : T(0);
    }
    BasicTensor<T> y(std::move(out_shape), std::move(out));
    if (auto* tape = detail::recording_tape<T>({&x})) {
        detail::mark_tracked(y);
        tape->record("gather", [xn = x.node(), yn = y.node(), map] {
            if (yn->grad.empty())
                return;
            auto& gx = detail::grad_buffer(*xn);
            const auto& idx = *map;
            for (std::size_t i = 0; i < idx.size(); ++i)
                if (idx[i] >= 0)
                    gx[static_cast<std::size_t>(idx[i])] += yn->grad[i];
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, Index axis)
{
    if (parts.empty())
        throw ShapeError("concat of zero tensors");
    const Shape& first = parts.front().shape();
    const Index rank = static_cast<Index>(first.size());
    if (axis < 0)
        axis += rank;
    if (axis < 0 || axis >= rank)
        throw ShapeError("concat: axis out of range");
    const auto ax = static_cast<std::size_t>(axis);

    Shape out_shape = first;
    out_shape[ax] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size())
            throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != ax && s[i] != first[i])
                throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " +
                                 shape_str(first));
        out_shape[ax] += s[ax];
    }
    Index outer = 1;
    for (std::size_t i = 0; i < ax; ++i)
        outer *= first[i];
    Index inner = 1;
    for (std::size_t i = ax + 1; i < first.size(); ++i)
        inner *= first[i];

    const Index out_row = out_shape[ax] * inner;
    std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
    std::vector<Index> offsets;
    Index offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const Index row = p.shape()[ax] * inner;
        const auto pv = p.data();
        for (Index o = 0; o < outer; ++o)
            std::copy(pv.begin() + o * row, pv.begin() + (o + 1) * row,
                      out.begin() + o * out_row + offset);
        offset += row;
    }
    BasicTensor<T> y(std::move(out_shape), std::move(out));

    Tape<T>* tape = Tape<T>::active();
    bool any = false;
    for (const auto& p : parts)
        any = any || p.requires_grad();
    if (tape && any) {
        detail::mark_tracked(y);
        std::vector<std::shared_ptr<TensorNode<T>>> nodes;
        for (const auto& p : parts)
            nodes.push_back(p.node());
        tape->record("concat", [nodes = std::move(nodes), offsets = std::move(offsets),
                                yn = y.node(), outer, out_row, ax, inner] {
            if (yn->grad.empty())
                return;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                if (!nodes[k]->requires_grad)
                    continue;
                auto& g = detail::grad_buffer(*nodes[k]);
                const Index row = nodes[k]->shape[ax] * inner;
                for (Index o = 0; o < outer; ++o)
                    for (Index i = 0; i < row; ++i)
                        g[static_cast<std::size_t>(o * row + i)] +=
                            yn->grad[static_cast<std::size_t>(o * out_row + offsets[k] + i)];
            }
        });
    }
    return y;
}

namespace {

template <typename T>
void require_5d(const BasicTensor<T>& x, const char* op)
{
    if (x.rank() != 5)
        throw ShapeError(std::string(op) + ": expected [B,C,D,H,W], got " + shape_str(x.shape()));
}

// Builds a gather map for a 5-D spatial remap where src_axis(a, o) gives the
// source coordinate along spatial axis a for output coordinate o (or -1).
template <typename F>
IndexMap spatial_map(const Shape& in, const Vec3& out_ext, F&& src_axis)
{
    const Index bc = in[0] * in[1];
    auto map = std::make_shared<std::vector<Index>>();
    map->reserve(static_cast<std::size_t>(bc * out_ext[0] * out_ext[1] * out_ext[2]));
    std::array<std::vector<Index>, 3> lut;
    for (int a = 0; a < 3; ++a) {
        lut[a].resize(static_cast<std::size_t>(out_ext[a]));
        for (Index o = 0; o < out_ext[a]; ++o)
            lut[a][static_cast<std::size_t>(o)] = src_axis(a, o);
    }
    const Index in_vol = in[2] * in[3] * in[4];
    for (Index c = 0; c < bc; ++c)
        for (Index d : lut[0])
            for (Index h : lut[1])
                for (Index w : lut[2])
                    map->push_back(d < 0 || h < 0 || w < 0
                                       ? -1
                                       : c * in_vol + (d * in[3] + h) * in[4] + w);
    return map;
}

} // namespace

template <typename T>
BasicTensor<T> crop3d(const BasicTensor<T>& x, const Vec3& origin, const Vec3& extent)
{
    require_5d(x, "crop3d");
    for (int a = 0; a < 3; ++a)
        if (origin[a] < 0 || extent[a] < 1 || origin[a] + extent[a] > x.dim(2 + a))
            throw ShapeError("crop3d: region " + vec3_str(origin) + " + " + vec3_str(extent) +
                             " outside " + shape_str(x.shape()));
    auto map = spatial_map(x.shape(), extent, [&](int a, Index o) { return origin[a] + o; });
    return gather(x, Shape{x.dim(0), x.dim(1), extent[0], extent[1], extent[2]}, map);
}

template <typename T>
BasicTensor<T> pad3d(const BasicTensor<T>& x, const Vec3& before, const Vec3& after)
{
    require_5d(x, "pad3d");
    Vec3 ext{};
    for (int a = 0; a < 3; ++a) {
        if (before[a] < 0 || after[a] < 0)
            throw ShapeError("pad3d: negative padding");
        ext[a] = x.dim(2 + a) + before[a] + after[a];
    }
    auto map = spatial_map(x.shape(), ext, [&](int a, Index o) {
        const Index s = o - before[a];
        return (s >= 0 && s < x.dim(2 + a)) ? s : Index(-1);
    });
    return gather(x, Shape{x.dim(0), x.dim(1), ext[0], ext[1], ext[2]}, map);
}

template <typename T>
BasicTensor<T> reflect_pad_to_even(const BasicTensor<T>& x)
{
    require_5d(x, "reflect_pad_to_even");
    Vec3 ext{};
    bool any = false;
    for (int a = 0; a < 3; ++a) {
        ext[a] = x.dim(2 + a) + (x.dim(2 + a) % 2);
        any = any || ext[a] != x.dim(2 + a);
    }
    if (!any)
        return x;
    auto map = spatial_map(x.shape(), ext, [&](int a, Index o) {
        const Index n = x.dim(2 + a);
        if (o < n)
            return o;
        return n >= 2 ? n - 2 : Index(0); // mirror about the last voxel
    });
    return gather(x, Shape{x.dim(0), x.dim(1), ext[0], ext[1], ext[2]}, map);
}

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& x, const std::vector<Index>& perm)
{
    const Index rank = x.rank();
    if (static_cast<Index>(perm.size()) != rank)
        throw ShapeError("permute: permutation rank mismatch");
    std::vector<bool> seen(perm.size(), false);
    for (Index p : perm) {
        if (p < 0 || p >= rank || seen[static_cast<std::size_t>(p)])
            throw ShapeError("permute: invalid permutation");
        seen[static_cast<std::size_t>(p)] = true;
    }
    const Shape& in = x.shape();
    std::vector<Index> in_stride(in.size(), 1);
    for (Index i = rank - 2; i >= 0; --i)
        in_stride[static_cast<std::size_t>(i)] =
            in_stride[static_cast<std::size_t>(i + 1)] * in[static_cast<std::size_t>(i + 1)];
    Shape out_shape(in.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        out_shape[i] = in[static_cast<std::size_t>(perm[i])];

    auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(x.numel()));
    std::vector<Index> counter(perm.size(), 0);
    for (auto& slot : *map) {
        Index src = 0;
        for (std::size_t i = 0; i < perm.size(); ++i)
            src += counter[i] * in_stride[static_cast<std::size_t>(perm[i])];
        slot = src;
        for (Index i = rank - 1; i >= 0; --i) {
            auto& c = counter[static_cast<std::size_t>(i)];
            if (++c < out_shape[static_cast<std::size_t>(i)])
                break;
            c = 0;
        }
    }
    return gather(x, std::move(out_shape), std::move(map));
}

#define M2T_INSTANTIATE(T)                                                                     \
    template BasicTensor<T> gather(const BasicTensor<T>&, Shape, IndexMap);                    \
    template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, Index);                 \
    template BasicTensor<T> crop3d(const BasicTensor<T>&, const Vec3&, const Vec3&);           \
    template BasicTensor<T> pad3d(const BasicTensor<T>&, const Vec3&, const Vec3&);            \
    template BasicTensor<T> reflect_pad_to_even(const BasicTensor<T>&);                        \
    template BasicTensor<T> permute(const BasicTensor<T>&, const std::vector<Index>&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
