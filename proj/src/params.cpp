#include "m2t/params.hpp"

#include <cmath>

namespace m2t {

template <typename T>
BasicTensor<T> ParameterSet<T>::add(std::string name, Shape shape)
{
    if (find(name))
        throw ConfigError("duplicate parameter name " + name);
    BasicTensor<T> t(std::move(shape), T(0));
    t.set_requires_grad(true);
    items_.emplace_back(std::move(name), t);
    return t;
}

template <typename T>
const BasicTensor<T>* ParameterSet<T>::find(const std::string& name) const
{
    for (const auto& e : items_)
        if (e.first == name)
            return &e.second;
    return nullptr;
}

template <typename T>
BasicTensor<T>& ParameterSet<T>::at(const std::string& name)
{
    for (auto& e : items_)
        if (e.first == name)
            return e.second;
    throw ConfigError("unknown parameter " + name);
}

template <typename T>
Index ParameterSet<T>::scalar_count() const
{
    Index n = 0;
    for (const auto& e : items_)
        n += e.second.numel();
    return n;
}

template <typename T>
void ParameterSet<T>::zero_grad()
{
    for (auto& e : items_)
        e.second.zero_grad();
}

template <typename T>
void ParameterSet<T>::set_requires_grad(bool on)
{
    for (auto& e : items_)
        e.second.set_requires_grad(on);
}

template <typename T>
Conv3dLayer<T> make_conv(ParameterSet<T>& ps, const std::string& name, Index cin, Index cout,
                         Index kernel, Conv3dOptions opts)
{
    Conv3dLayer<T> l;
    l.weight = ps.add(name + ".weight", Shape{cout, cin, kernel, kernel, kernel});
    l.bias = ps.add(name + ".bias", Shape{cout});
    l.opts = opts;
    return l;
}

template <typename T>
LinearLayer<T> make_linear(ParameterSet<T>& ps, const std::string& name, Index in, Index out)
{
    return LinearLayer<T>{ps.add(name + ".weight", Shape{out, in}), ps.add(name + ".bias", Shape{out})};
}

template <typename T>
NormParams<T> make_norm(ParameterSet<T>& ps, const std::string& name, Index channels)
{
    NormParams<T> p{ps.add(name + ".scale", Shape{channels}), ps.add(name + ".shift", Shape{channels})};
    for (auto& v : p.scale.mutable_data())
        v = T(1);
    return p;
}

template <typename T>
void init_kaiming(BasicTensor<T>& w, Rng& rng)
{
    const Index fan_in = w.numel() / w.dim(0);
    const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.mutable_data())
        v = static_cast<T>(rng.normal(0.0, sigma));
}

template <typename T>
void init_trunc_normal(BasicTensor<T>& w, double sigma, Rng& rng)
{
    for (auto& v : w.mutable_data())
        v = static_cast<T>(rng.truncated_normal(sigma));
}

#define M2T_INSTANTIATE(T)                                                                     \
    template class ParameterSet<T>;                                                            \
    template Conv3dLayer<T> make_conv(ParameterSet<T>&, const std::string&, Index, Index,      \
                                      Index, Conv3dOptions);                                   \
    template LinearLayer<T> make_linear(ParameterSet<T>&, const std::string&, Index, Index);   \
    template NormParams<T> make_norm(ParameterSet<T>&, const std::string&, Index);             \
    template void init_kaiming(BasicTensor<T>&, Rng&);                                         \
    template void init_trunc_normal(BasicTensor<T>&, double, Rng&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
