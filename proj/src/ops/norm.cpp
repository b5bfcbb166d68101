#include "m2t/ops.hpp"

#include <algorithm>
#include <cmath>

namespace m2t {

namespace {

// Zero-mean / unit-variance form of `groups` contiguous runs of length n,
// with biased variance and statistics accumulated in double.
template <typename T>
struct Standardized {
    std::vector<T> xhat;
    std::vector<double> inv_std;
};

template <typename T>
Standardized<T> standardize(std::span<const T> x, std::size_t groups, std::size_t n, double eps)
{
    Standardized<T> s;
    s.xhat.resize(x.size());
    s.inv_std.resize(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        const T* xg = x.data() + g * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            mu += static_cast<double>(xg[i]);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(xg[i]) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        s.inv_std[g] = inv;
        T* xh = s.xhat.data() + g * n;
        for (std::size_t i = 0; i < n; ++i)
            xh[i] = static_cast<T>((static_cast<double>(xg[i]) - mu) * inv);
    }
    return s;
}

// dx for one group given dxhat = dy * gamma.
template <typename T>
void standardize_backward(const T* xhat, const T* dxhat, double inv, std::size_t n, T* dx)
{
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_d += static_cast<double>(dxhat[i]);
        mean_dx += static_cast<double>(dxhat[i]) * static_cast<double>(xhat[i]);
    }
    mean_d /= static_cast<double>(n);
    mean_dx /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        dx[i] += static_cast<T>(
            inv * (static_cast<double>(dxhat[i]) - mean_d - static_cast<double>(xhat[i]) * mean_dx));
}

} // namespace

template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& x, const BasicTensor<T>& scale,
                             const BasicTensor<T>& shift, T eps)
{
    if (x.rank() < 3)
        throw ShapeError("instance_norm: input must be [B,C,...], got " + shape_str(x.shape()));
    const Index channels = x.dim(1);
    if (scale.shape() != Shape{channels} || shift.shape() != Shape{channels})
        throw ShapeError("instance_norm: scale/shift must be [" + std::to_string(channels) + "]");
    const Index spatial = x.numel() / (x.dim(0) * channels);
    if (spatial < 2)
        throw ShapeError("instance_norm: spatial volume must be >= 2 (variance undefined)");

    const auto n = static_cast<std::size_t>(spatial);
    const auto groups = static_cast<std::size_t>(x.dim(0) * channels);
    const auto c = static_cast<std::size_t>(channels);
    auto st = standardize(x.data(), groups, n, static_cast<double>(eps));

    std::vector<T> out(x.data().size());
    const auto sc = scale.data();
    const auto sh = shift.data();
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t ch = g % c;
        for (std::size_t i = 0; i < n; ++i)
            out[g * n + i] = st.xhat[g * n + i] * sc[ch] + sh[ch];
    }
    BasicTensor<T> y(x.shape(), std::move(out));
    detail::check_finite(y, "instance_norm");

    if (auto* tape = detail::recording_tape<T>({&x, &scale, &shift})) {
        detail::mark_tracked(y);
        tape->record("instance_norm", [xn = x.node(), sn = scale.node(), tn = shift.node(),
                                       yn = y.node(), st = std::move(st), groups, n, c] {
            if (yn->grad.empty())
                return;
            const auto& gy = yn->grad;
            if (sn->requires_grad || tn->requires_grad) {
                auto& gs = detail::grad_buffer(*sn);
                auto& gt = detail::grad_buffer(*tn);
                for (std::size_t g = 0; g < groups; ++g) {
                    double a = 0.0, b = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        a += static_cast<double>(gy[g * n + i]) * static_cast<double>(st.xhat[g * n + i]);
                        b += static_cast<double>(gy[g * n + i]);
                    }
                    gs[g % c] += static_cast<T>(a);
                    gt[g % c] += static_cast<T>(b);
                }
            }
            if (xn->requires_grad) {
                auto& gx = detail::grad_buffer(*xn);
                std::vector<T> dxhat(n);
                for (std::size_t g = 0; g < groups; ++g) {
                    const T s = sn->value[g % c];
                    for (std::size_t i = 0; i < n; ++i)
                        dxhat[i] = gy[g * n + i] * s;
                    standardize_backward(st.xhat.data() + g * n, dxhat.data(), st.inv_std[g], n,
                                         gx.data() + g * n);
                }
            }
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps)
{
    if (x.rank() < 1)
        throw ShapeError("layer_norm: scalar input");
    const Index features = x.dim(-1);
    if (gamma.shape() != Shape{features} || beta.shape() != Shape{features})
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(features) + "]");
    const auto n = static_cast<std::size_t>(features);
    const std::size_t rows = x.data().size() / n;
    auto st = standardize(x.data(), rows, n, static_cast<double>(eps));

    std::vector<T> out(x.data().size());
    const auto ga = gamma.data();
    const auto be = beta.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < n; ++i)
            out[r * n + i] = st.xhat[r * n + i] * ga[i] + be[i];
    BasicTensor<T> y(x.shape(), std::move(out));
    detail::check_finite(y, "layer_norm");

    if (auto* tape = detail::recording_tape<T>({&x, &gamma, &beta})) {
        detail::mark_tracked(y);
        tape->record("layer_norm", [xn = x.node(), gn = gamma.node(), bn = beta.node(),
                                    yn = y.node(), st = std::move(st), rows, n] {
            if (yn->grad.empty())
                return;
            const auto& gy = yn->grad;
            if (gn->requires_grad || bn->requires_grad) {
                auto& gg = detail::grad_buffer(*gn);
                auto& gb = detail::grad_buffer(*bn);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < n; ++i) {
                        gg[i] += gy[r * n + i] * st.xhat[r * n + i];
                        gb[i] += gy[r * n + i];
                    }
            }
            if (xn->requires_grad) {
                auto& gx = detail::grad_buffer(*xn);
                std::vector<T> dxhat(n);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t i = 0; i < n; ++i)
                        dxhat[i] = gy[r * n + i] * gn->value[i];
                    standardize_backward(st.xhat.data() + r * n, dxhat.data(), st.inv_std[r], n,
                                         gx.data() + r * n);
                }
            }
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x)
{
    if (x.rank() < 1 || x.dim(-1) < 1)
        throw ShapeError("softmax_lastdim: last extent must be >= 1");
    const auto n = static_cast<std::size_t>(x.dim(-1));
    const std::size_t rows = x.data().size() / n;
    const auto xv = x.data();
    std::vector<T> out(xv.size());
    std::vector<double> e(n);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * n;
        T* yr = out.data() + r * n;
        T mx = xr[0];
        for (std::size_t i = 1; i < n; ++i)
            mx = std::max(mx, xr[i]);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            e[i] = std::exp(static_cast<double>(xr[i]) - static_cast<double>(mx));
            total += e[i];
        }
        const double inv = 1.0 / total;
        for (std::size_t i = 0; i < n; ++i)
            yr[i] = static_cast<T>(e[i] * inv);
    }
    BasicTensor<T> y(x.shape(), std::move(out));
    detail::check_finite(y, "softmax_lastdim");

    if (auto* tape = detail::recording_tape<T>({&x})) {
        detail::mark_tracked(y);
        tape->record("softmax_lastdim", [xn = x.node(), yn = y.node(), rows, n] {
            if (yn->grad.empty())
                return;
            auto& gx = detail::grad_buffer(*xn);
            const auto& gy = yn->grad;
            const auto& yv = yn->value;
            for (std::size_t r = 0; r < rows; ++r) {
                double dotp = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    dotp += static_cast<double>(gy[r * n + i]) * static_cast<double>(yv[r * n + i]);
                for (std::size_t i = 0; i < n; ++i)
                    gx[r * n + i] += static_cast<T>(static_cast<double>(yv[r * n + i]) *
                                                    (static_cast<double>(gy[r * n + i]) - dotp));
            }
        });
    }
    return y;
}

#define M2T_INSTANTIATE(T)                                                                     \
    template BasicTensor<T> instance_norm(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                          const BasicTensor<T>&, T);                           \
    template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                       const BasicTensor<T>&, T);                              \
    template BasicTensor<T> softmax_lastdim(const BasicTensor<T>&);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
