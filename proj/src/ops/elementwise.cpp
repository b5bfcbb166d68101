#include "m2t/ops.hpp"

#include <algorithm>
#include <cmath>

namespace m2t {

namespace {

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op)
{
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// y = f(x) with dy/dx = df(x, y).
template <typename T, typename F, typename DF>
BasicTensor<T> unary(const BasicTensor<T>& x, const char* op, F f, DF df)
{
    const auto xs = x.data();
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        out[i] = f(xs[i]);
    BasicTensor<T> y(x.shape(), std::move(out));
    detail::check_finite(y, op);
    if (auto* tape = detail::recording_tape<T>({&x})) {
        detail::mark_tracked(y);
        tape->record(op, [xn = x.node(), yn = y.node(), df] {
            if (yn->grad.empty())
                return;
            auto& gx = detail::grad_buffer(*xn);
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] += yn->grad[i] * df(xn->value[i], yn->value[i]);
        });
    }
    return y;
}

template <typename T>
void accumulate(TensorNode<T>& dst, const std::vector<T>& g, T factor)
{
    auto& gd = detail::grad_buffer(dst);
    for (std::size_t i = 0; i < gd.size(); ++i)
        gd[i] += factor * g[i];
}

} // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "add");
    std::vector<T> out(a.data().begin(), a.data().end());
    const auto bs = b.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += bs[i];
    BasicTensor<T> y(a.shape(), std::move(out));
    detail::check_finite(y, "add");
    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        detail::mark_tracked(y);
        tape->record("add", [an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty())
                return;
            if (an->requires_grad)
                accumulate(*an, yn->grad, T(1));
            if (bn->requires_grad)
                accumulate(*bn, yn->grad, T(1));
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.data().begin(), a.data().end());
    const auto bs = b.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] -= bs[i];
    BasicTensor<T> y(a.shape(), std::move(out));
    detail::check_finite(y, "sub");
    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        detail::mark_tracked(y);
        tape->record("sub", [an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty())
                return;
            if (an->requires_grad)
                accumulate(*an, yn->grad, T(1));
            if (bn->requires_grad)
                accumulate(*bn, yn->grad, T(-1));
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.data().begin(), a.data().end());
    const auto bs = b.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= bs[i];
    BasicTensor<T> y(a.shape(), std::move(out));
    detail::check_finite(y, "mul");
    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        detail::mark_tracked(y);
        tape->record("mul", [an = a.node(), bn = b.node(), yn = y.node()] {
            if (yn->grad.empty())
                return;
            const auto& g = yn->grad;
            if (an->requires_grad) {
                auto& ga = detail::grad_buffer(*an);
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += g[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                auto& gb = detail::grad_buffer(*bn);
                for (std::size_t i = 0; i < gb.size(); ++i)
                    gb[i] += g[i] * an->value[i];
            }
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor)
{
    return unary(
        a, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> add_broadcast(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin()))
        throw ShapeError("add_broadcast: " + shape_str(bs) + " is not a suffix of " +
                         shape_str(as));
    const std::size_t inner = b.data().size();
    std::vector<T> out(a.data().begin(), a.data().end());
    const auto bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += bv[i % inner];
    BasicTensor<T> y(as, std::move(out));
    detail::check_finite(y, "add_broadcast");
    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        detail::mark_tracked(y);
        tape->record("add_broadcast", [an = a.node(), bn = b.node(), yn = y.node(), inner] {
            if (yn->grad.empty())
                return;
            if (an->requires_grad)
                accumulate(*an, yn->grad, T(1));
            if (bn->requires_grad) {
                auto& gb = detail::grad_buffer(*bn);
                for (std::size_t i = 0; i < yn->grad.size(); ++i)
                    gb[i % inner] += yn->grad[i];
            }
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x)
{
    return unary(
        x, "relu", [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope)
{
    return unary(
        x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
        [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x)
{
    return unary(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x)
{
    double acc = 0.0;
    for (T v : x.data())
        acc += static_cast<double>(v);
    auto y = BasicTensor<T>::scalar(static_cast<T>(acc));
    detail::check_finite(y, "sum");
    if (auto* tape = detail::recording_tape<T>({&x})) {
        detail::mark_tracked(y);
        tape->record("sum", [xn = x.node(), yn = y.node()] {
            if (yn->grad.empty())
                return;
            auto& gx = detail::grad_buffer(*xn);
            const T g = yn->grad[0];
            for (auto& v : gx)
                v += g;
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x)
{
    if (x.numel() == 0)
        throw ShapeError("mean of an empty tensor");
    double acc = 0.0;
    for (T v : x.data())
        acc += static_cast<double>(v);
    const double n = static_cast<double>(x.numel());
    auto y = BasicTensor<T>::scalar(static_cast<T>(acc / n));
    detail::check_finite(y, "mean");
    if (auto* tape = detail::recording_tape<T>({&x})) {
        detail::mark_tracked(y);
        tape->record("mean", [xn = x.node(), yn = y.node(), n] {
            if (yn->grad.empty())
                return;
            auto& gx = detail::grad_buffer(*xn);
            const T g = static_cast<T>(static_cast<double>(yn->grad[0]) / n);
            for (auto& v : gx)
                v += g;
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> l1_mean(const BasicTensor<T>& a, const BasicTensor<T>& b)
{
    require_same_shape(a, b, "l1_mean");
    if (a.numel() == 0)
        throw ShapeError("l1_mean of empty tensors");
    const auto av = a.data();
    const auto bv = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i)
        acc += std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i]));
    const double n = static_cast<double>(av.size());
    auto y = BasicTensor<T>::scalar(static_cast<T>(acc / n));
    detail::check_finite(y, "l1_mean");
    if (auto* tape = detail::recording_tape<T>({&a, &b})) {
        detail::mark_tracked(y);
        tape->record("l1_mean", [an = a.node(), bn = b.node(), yn = y.node(), n] {
            if (yn->grad.empty())
                return;
            const T g = static_cast<T>(static_cast<double>(yn->grad[0]) / n);
            const auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
            if (an->requires_grad) {
                auto& ga = detail::grad_buffer(*an);
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += g * sign(an->value[i] - bn->value[i]);
            }
            if (bn->requires_grad) {
                auto& gb = detail::grad_buffer(*bn);
                for (std::size_t i = 0; i < gb.size(); ++i)
                    gb[i] -= g * sign(an->value[i] - bn->value[i]);
            }
        });
    }
    return y;
}

template <typename T>
BasicTensor<T> bce_with_logits_mean(const BasicTensor<T>& logits, T target)
{
    if (logits.numel() == 0)
        throw ShapeError("bce_with_logits_mean of an empty tensor");
    const auto z = logits.data();
    double acc = 0.0;
    for (T v : z) {
        const double zd = static_cast<double>(v);
        acc += std::max(zd, 0.0) - zd * static_cast<double>(target) + std::log1p(std::exp(-std::abs(zd)));
    }
    const double n = static_cast<double>(z.size());
    auto y = BasicTensor<T>::scalar(static_cast<T>(acc / n));
    detail::check_finite(y, "bce_with_logits_mean");
    if (auto* tape = detail::recording_tape<T>({&logits})) {
        detail::mark_tracked(y);
        tape->record("bce_with_logits_mean", [zn = logits.node(), yn = y.node(), n, target] {
            if (yn->grad.empty())
                return;
            auto& gz = detail::grad_buffer(*zn);
            const double g = static_cast<double>(yn->grad[0]) / n;
            for (std::size_t i = 0; i < gz.size(); ++i) {
                const double zd = static_cast<double>(zn->value[i]);
                // sigmoid(z) - t, evaluated without overflow
                const double s = zd >= 0.0 ? 1.0 / (1.0 + std::exp(-zd))
                                           : std::exp(zd) / (1.0 + std::exp(zd));
                gz[i] += static_cast<T>(g * (s - static_cast<double>(target)));
            }
        });
    }
    return y;
}

#define M2T_INSTANTIATE(T)                                                                     \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                 \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                 \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                 \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                   \
    template BasicTensor<T> add_broadcast(const BasicTensor<T>&, const BasicTensor<T>&);       \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                       \
    template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                              \
    template BasicTensor<T> tanh(const BasicTensor<T>&);                                       \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                        \
    template BasicTensor<T> mean(const BasicTensor<T>&);                                       \
    template BasicTensor<T> l1_mean(const BasicTensor<T>&, const BasicTensor<T>&);             \
    template BasicTensor<T> bce_with_logits_mean(const BasicTensor<T>&, T);

M2T_INSTANTIATE(float)
M2T_INSTANTIATE(double)
#undef M2T_INSTANTIATE

} // namespace m2t
