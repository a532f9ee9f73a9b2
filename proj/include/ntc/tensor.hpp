#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ntc/errors.hpp"

namespace ntc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

// Thread-local switch disabling graph recording (validation / inference).
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Reverse-mode autodiff tensor. A Tensor is a shared handle to a node that
// carries the value, an optional gradient, and the tape edge to its parents.
// Ops append nodes in forward order; backward() walks the exact reverse.
template <typename T>
class Tensor {
  public:
    struct Impl;
    using BackpropFn = std::function<void(Impl&)>;

    struct Impl {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;           // empty until first accumulation
        bool requires_grad = false;    // leaf parameter flag
        bool tracked = false;          // participates in the current graph
        bool backward_done = false;
        std::vector<Tensor> parents;
        BackpropFn backprop;           // accumulates into parents' grads

        std::vector<T>& ensure_grad() {
            if (grad.empty()) grad.assign(data.size(), T(0));
            return grad;
        }
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad);
    }

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        auto impl = std::make_shared<Impl>();
        const std::size_t n = shape_numel(shape);
        if (data.empty()) data.assign(n, T(0));
        if (data.size() != n)
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        impl->requires_grad = requires_grad;
        impl->tracked = requires_grad;
        return Tensor(std::move(impl));
    }

    // Node produced by an op: value plus the closure that pushes gradients
    // back to `parents`. Recording is skipped when no parent is tracked or
    // grad mode is off.
    static Tensor op_result(Shape shape, std::vector<T> data, std::vector<Tensor> parents,
                            BackpropFn backprop) {
        Tensor out = from_data(std::move(shape), std::move(data), false);
        bool track = grad_mode();
        if (track) {
            bool any = false;
            for (const auto& p : parents) any = any || p.impl_->tracked;
            track = any;
        }
        if (track) {
            out.impl_->tracked = true;
            out.impl_->parents = std::move(parents);
            out.impl_->backprop = std::move(backprop);
        }
        return out;
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t size() const { return impl_->data.size(); }
    std::vector<T>& data() { return impl_->data; }
    const std::vector<T>& data() const { return impl_->data; }
    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return !impl_->grad.empty(); }

    std::vector<T>& grad() {
        if (impl_->grad.empty())
            throw StateError("gradient not populated; run backward() first");
        return impl_->grad;
    }
    const std::vector<T>& grad() const { return const_cast<Tensor*>(this)->grad(); }

    void zero_grad() { impl_->grad.clear(); }

    T item() const {
        if (size() != 1) throw ArgumentError("item() on non-scalar tensor " + shape_str(shape()));
        return impl_->data[0];
    }

    Impl* node() const { return impl_.get(); }

    // Backpropagate from a scalar loss through every recorded ancestor.
    // The traversed subgraph is released afterwards; a second call on the
    // same loss is a state error.
    void backward() {
        if (size() != 1)
            throw ArgumentError("backward() requires a scalar loss, got " + shape_str(shape()));
        if (impl_->backward_done)
            throw StateError("backward() already ran on this loss; graph was consumed");
        impl_->backward_done = true;

        std::vector<Impl*> order;
        std::unordered_set<Impl*> seen;
        topo(impl_.get(), seen, order);

        impl_->ensure_grad()[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Impl* n = *it;
            if (n->backprop && !n->grad.empty()) n->backprop(*n);
        }
        // Release tape edges so intermediate activations can be freed.
        for (Impl* n : order) {
            n->backprop = nullptr;
            n->parents.clear();
            if (!n->requires_grad) n->tracked = false;
        }
    }

  private:
    explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

    static void topo(Impl* n, std::unordered_set<Impl*>& seen, std::vector<Impl*>& order) {
        if (!n->tracked || seen.count(n)) return;
        seen.insert(n);
        for (auto& p : n->parents) topo(p.impl_.get(), seen, order);
        order.push_back(n);
    }

    std::shared_ptr<Impl> impl_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace ntc
