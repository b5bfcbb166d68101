#include "m2t/tensor.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <sstream>
#include <type_traits>

namespace m2t {

Index numel(const Shape& shape)
{
    Index n = 1;
    for (Index e : shape) {
        if (e < 0)
            throw ShapeError("negative extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::string vec3_str(const Vec3& v)
{
    std::ostringstream os;
    os << v[0] << 'x' << v[1] << 'x' << v[2];
    return os.str();
}

namespace {

std::atomic<bool> g_finite_checks{true};

template <typename T>
Tape<T>*& active_slot()
{
    thread_local Tape<T>* slot = nullptr;
    return slot;
}

} // namespace

void set_finite_checks(bool on) noexcept { g_finite_checks.store(on); }
bool finite_checks() noexcept { return g_finite_checks.load(); }

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : node_(std::make_shared<TensorNode<T>>())
{
    const Index n = m2t::numel(shape);
    node_->shape = std::move(shape);
    node_->value.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<TensorNode<T>>())
{
    const Index n = m2t::numel(shape);
    if (static_cast<Index>(values.size()) != n)
        throw ShapeError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(n) +
                         " elements, got " + std::to_string(values.size()));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
}

template <typename T>
Index BasicTensor<T>::dim(Index axis) const
{
    const Index r = rank();
    if (axis < 0)
        axis += r;
    if (axis < 0 || axis >= r)
        throw ShapeError("axis out of range for shape " + shape_str(shape()));
    return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data()
{
    if (!node_->leaf)
        throw ShapeError("in-place write to a non-leaf tensor");
    return node_->value;
}

template <typename T>
T BasicTensor<T>::item() const
{
    if (node_->value.size() != 1)
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<Index> idx) const
{
    if (static_cast<Index>(idx.size()) != rank())
        throw ShapeError("index rank mismatch for shape " + shape_str(shape()));
    Index flat = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
        const Index e = node_->shape[axis++];
        if (i < 0 || i >= e)
            throw ShapeError("index out of range for shape " + shape_str(shape()));
        flat = flat * e + i;
    }
    return node_->value[static_cast<std::size_t>(flat)];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on)
{
    if (!node_->leaf)
        throw ShapeError("requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
    return *this;
}

template <typename T>
std::vector<T> BasicTensor<T>::grad() const
{
    if (node_->grad.empty())
        return std::vector<T>(node_->value.size(), T(0));
    return node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad()
{
    return detail::grad_buffer(*node_);
}

template <typename T>
void BasicTensor<T>::zero_grad()
{
    node_->grad.clear();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const
{
    return BasicTensor<T>(node_->shape, node_->value);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshape(Shape shape) const
{
    if (m2t::numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
    BasicTensor<T> out(std::move(shape), node_->value);
    if (auto* tape = detail::recording_tape<T>({this})) {
        detail::mark_tracked(out);
        tape->record("reshape", [in = node_, o = out.node()] {
            if (o->grad.empty())
                return;
            auto& g = detail::grad_buffer(*in);
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += o->grad[i];
        });
    }
    return out;
}

template <typename T>
Tape<T>::Tape()
    : previous_(active_slot<T>())
{
    active_slot<T>() = this;
}

template <typename T>
Tape<T>::~Tape()
{
    if (active_slot<T>() == this)
        active_slot<T>() = previous_;
}

template <typename T>
Tape<T>* Tape<T>::active() noexcept
{
    return active_slot<T>();
}

template <typename T>
void Tape<T>::record(const char* op, std::function<void()> backward)
{
    consumed_ = false;
    entries_.push_back(Entry{op, std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const BasicTensor<T>& loss)
{
    if (consumed_)
        throw ShapeError("backward called twice without a new forward pass");
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward needs a scalar loss");
    if (!loss.requires_grad())
        throw ShapeError("backward on an untracked loss");

    auto& g = detail::grad_buffer(*loss.node());
    g[0] += T(1);
    for (std::size_t i = entries_.size(); i-- > 0;) {
        if (visitor_)
            visitor_(i, entries_[i].op);
        entries_[i].backward();
    }
    entries_.clear();
    consumed_ = true;
}

template <typename T>
std::vector<const char*> Tape<T>::op_names() const
{
    std::vector<const char*> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_)
        names.push_back(e.op);
    return names;
}

template <typename T>
NoGradScope<T>::NoGradScope()
    : saved_(active_slot<T>())
{
    active_slot<T>() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope()
{
    active_slot<T>() = saved_;
}

template <typename T>
void backward(const BasicTensor<T>& loss)
{
    Tape<T>* tape = Tape<T>::active();
    if (!tape)
        throw ShapeError("backward without an active tape");
    tape->backward(loss);
}

namespace detail {

template <typename T>
void check_finite(const BasicTensor<T>& out, const char* op)
{
    if (!finite_checks())
        return;
    // Exponent field all ones <=> Inf or NaN. Branch-free so it vectorizes.
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    constexpr Bits exp_mask = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
    const auto d = out.data();
    bool bad = false;
    for (std::size_t i = 0; i < d.size(); ++i)
        bad |= (std::bit_cast<Bits>(d[i]) & exp_mask) == exp_mask;
    if (bad)
        throw NumericalError(std::string("non-finite value produced by ") + op);
}

} // namespace detail

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;
template class NoGradScope<float>;
template class NoGradScope<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);
template void detail::check_finite<float>(const BasicTensor<float>&, const char*);
template void detail::check_finite<double>(const BasicTensor<double>&, const char*);

} // namespace m2t
