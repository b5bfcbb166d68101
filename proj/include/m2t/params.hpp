#pragma once

// Named parameter storage and the small layer structs the networks are
// assembled from.

#include "m2t/ops.hpp"
#include "m2t/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace m2t {

template <typename T>
class ParameterSet {
public:
    using Entry = std::pair<std::string, BasicTensor<T>>;

    /// Registers a zero-filled trainable tensor. Names must be unique.
    BasicTensor<T> add(std::string name, Shape shape);

    const std::vector<Entry>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }

    /// Null if absent.
    const BasicTensor<T>* find(const std::string& name) const;
    BasicTensor<T>& at(const std::string& name);

    /// Total number of scalar parameters.
    Index scalar_count() const;

    void zero_grad();
    void set_requires_grad(bool on);

    /// Copies values by name into `dst`. Every name must exist in both sets
    /// with equal shapes.
    template <typename U>
    void copy_values_to(ParameterSet<U>& dst) const
    {
        if (dst.size() != size())
            throw ShapeError("parameter sets differ in size");
        for (const auto& [name, src] : items_) {
            BasicTensor<U>& t = dst.at(name);
            if (t.shape() != src.shape())
                throw ShapeError("parameter " + name + " shape mismatch");
            auto out = t.mutable_data();
            const auto in = src.data();
            for (std::size_t i = 0; i < in.size(); ++i)
                out[i] = static_cast<U>(in[i]);
        }
    }

private:
    std::vector<Entry> items_;
};

template <typename T>
struct Conv3dLayer {
    BasicTensor<T> weight; // [Cout, Cin, k, k, k]
    BasicTensor<T> bias;   // [Cout]
    Conv3dOptions opts;

    BasicTensor<T> operator()(const BasicTensor<T>& x) const { return conv3d(x, weight, bias, opts); }
    Index out_channels() const { return weight.dim(0); }
};

template <typename T>
struct LinearLayer {
    BasicTensor<T> weight; // [out, in]
    BasicTensor<T> bias;   // [out]

    BasicTensor<T> operator()(const BasicTensor<T>& x) const { return linear(x, weight, bias); }
};

/// Affine parameters of an instance or layer normalization.
template <typename T>
struct NormParams {
    BasicTensor<T> scale;
    BasicTensor<T> shift;
};

// Layer factories register "<name>.weight"/"<name>.bias" (or .scale/.shift)
// with default values: zero bias, unit scale. Weights are left zero; the
// owning network initializes them.
template <typename T>
Conv3dLayer<T> make_conv(ParameterSet<T>& ps, const std::string& name, Index cin, Index cout,
                         Index kernel, Conv3dOptions opts);

template <typename T>
LinearLayer<T> make_linear(ParameterSet<T>& ps, const std::string& name, Index in, Index out);

template <typename T>
NormParams<T> make_norm(ParameterSet<T>& ps, const std::string& name, Index channels);

/// N(0, sqrt(2 / fan_in)) with fan_in = Cin * k^3.
template <typename T>
void init_kaiming(BasicTensor<T>& w, Rng& rng);

/// Truncated normal, |x| <= 2 sigma.
template <typename T>
void init_trunc_normal(BasicTensor<T>& w, double sigma, Rng& rng);

} // namespace m2t
