#include "m2t/optim.hpp"

#include <cmath>

namespace m2t {

template <typename T>
Adam<T>::Adam(ParameterSet<T>& params, AdamOptions opts) : params_(&params), opts_(opts)
{
    if (!(opts.beta1 >= 0.0 && opts.beta1 < 1.0 && opts.beta2 >= 0.0 && opts.beta2 < 1.0))
        throw ConfigError("adam: betas must lie in [0, 1)");
    if (!(opts.eps > 0.0) || !(opts.clip_norm >= 0.0))
        throw ConfigError("adam: eps must be positive and clip_norm nonnegative");
    for (const auto& [name, p] : params.items()) {
        m_.add(name, p.shape());
        v_.add(name, p.shape());
    }
    m_.set_requires_grad(false);
    v_.set_requires_grad(false);
}

template <typename T>
void Adam<T>::set_steps(std::int64_t t)
{
    if (t < 0)
        throw DataError("adam: negative step count");
    t_ = t;
}

template <typename T>
double Adam<T>::step(double lr)
{
    const auto& items = params_->items();
    double sq = 0.0;
    for (const auto& [name, p] : items)
        for (T g : p.node()->grad)
            sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm))
        throw NumericalError("adam: non-finite gradient norm");
    const double gscale = (opts_.clip_norm > 0.0 && norm > opts_.clip_norm) ? opts_.clip_norm / norm : 1.0;

    ++t_;
    const double b1 = opts_.beta1, b2 = opts_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < items.size(); ++k) {
        BasicTensor<T> p = items[k].second;
        const auto& grad = p.node()->grad;
        auto w = p.mutable_data();
        BasicTensor<T> mt = m_.items()[k].second, vt = v_.items()[k].second;
        auto m = mt.mutable_data();
        auto v = vt.mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = grad.empty() ? 0.0 : gscale * static_cast<double>(grad[i]);
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + opts_.eps);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
        }
    }
    return norm;
}

double lr_at(double epoch, double max_lr, std::int64_t total_epochs)
{
    if (total_epochs < 1)
        throw ConfigError("lr schedule: total epochs must be positive");
    const double e = static_cast<double>(total_epochs);
    const double half = 0.5 * e;
    if (epoch < half)
        return max_lr;
    if (epoch >= e)
        return 0.0;
    return max_lr * (e - epoch) / (e - half);
}

template class Adam<float>;
template class Adam<double>;

} // namespace m2t
