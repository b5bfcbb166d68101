#pragma once

// N-D tensor with reverse-mode differentiation.
//
// A BasicTensor is a cheap handle onto a shared node holding the shape,
// values and (for tracked tensors) a gradient buffer. Differentiable ops
// record a backward closure on the thread's active Tape when any input is
// tracked; with no active tape they run as pure forward computations.
//
// Training uses BasicTensor<float>. BasicTensor<double> is the shadow
// precision used for finite-difference gradient verification.

#include "m2t/common.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace m2t {

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // empty until a gradient reaches this node
    bool requires_grad = false;
    bool leaf = true;
};

template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> values);

    static BasicTensor scalar(T v) { return BasicTensor(Shape{}, std::vector<T>{v}); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    Index rank() const { return static_cast<Index>(node_->shape.size()); }
    Index dim(Index axis) const;
    Index numel() const { return static_cast<Index>(node_->value.size()); }

    std::span<const T> data() const { return node_->value; }
    /// Direct write access. Only legal on leaves (parameters, inputs).
    std::span<T> mutable_data();
    T item() const;
    T at(std::initializer_list<Index> idx) const;

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    BasicTensor& set_requires_grad(bool on);
    bool is_leaf() const noexcept { return node_->leaf; }

    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    /// Gradient accumulated by the last backward pass (zeros if none reached it).
    std::vector<T> grad() const;
    std::span<T> mutable_grad();
    void zero_grad();

    /// Same values in a fresh untracked leaf.
    BasicTensor detach() const;
    BasicTensor clone() const { return detach(); }

    /// Same values, new shape with equal element count. Differentiable.
    BasicTensor reshape(Shape shape) const;

    template <typename U>
    BasicTensor<U> cast() const
    {
        std::vector<U> out(node_->value.begin(), node_->value.end());
        return BasicTensor<U>(node_->shape, std::move(out));
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Ordered record of executed differentiable ops on one thread.
///
/// Constructing a Tape makes it the thread's active tape for element type T;
/// destroying it restores the previously active one. Tapes nest.
template <typename T>
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() noexcept;

    void record(const char* op, std::function<void()> backward);

    /// Reverse-mode pass from a tracked scalar. Consumes the tape: a second
    /// call without new recorded ops throws.
    void backward(const BasicTensor<T>& loss);

    /// Optional observer invoked with (tape position, op name) as each
    /// backward closure runs.
    void on_visit(std::function<void(std::size_t, const char*)> visitor)
    {
        visitor_ = std::move(visitor);
    }

    std::size_t size() const noexcept { return entries_.size(); }
    bool consumed() const noexcept { return consumed_; }
    std::vector<const char*> op_names() const;

private:
    struct Entry {
        const char* op;
        std::function<void()> backward;
    };
    std::vector<Entry> entries_;
    std::function<void(std::size_t, const char*)> visitor_;
    Tape* previous_ = nullptr;
    bool consumed_ = false;
};

/// Suspends recording for the current scope (inference, frozen modules).
template <typename T>
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape<T>* saved_;
};

/// Backward through the thread's active tape.
template <typename T>
void backward(const BasicTensor<T>& loss);

/// When enabled (default), every op checks its output for NaN/Inf and
/// throws NumericalError naming the op.
void set_finite_checks(bool on) noexcept;
bool finite_checks() noexcept;

namespace detail {

template <typename T>
std::vector<T>& grad_buffer(TensorNode<T>& node)
{
    if (node.grad.empty())
        node.grad.assign(node.value.size(), T(0));
    return node.grad;
}

/// Active tape if recording applies to an op over these inputs.
template <typename T>
Tape<T>* recording_tape(std::initializer_list<const BasicTensor<T>*> inputs)
{
    Tape<T>* tape = Tape<T>::active();
    if (!tape)
        return nullptr;
    for (const auto* t : inputs)
        if (t && t->requires_grad())
            return tape;
    return nullptr;
}

template <typename T>
void mark_tracked(const BasicTensor<T>& out)
{
    out.node()->requires_grad = true;
    out.node()->leaf = false;
}

template <typename T>
void check_finite(const BasicTensor<T>& out, const char* op);

} // namespace detail

} // namespace m2t
