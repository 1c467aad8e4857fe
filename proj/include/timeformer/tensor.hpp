#pragma once

// Dense row-major float64 tensors with reverse-mode automatic differentiation.
//
// The engine is define-by-run: while a Tape is active (via TapeScope), every
// primitive that touches a tracked tensor records a closure that knows how to
// push gradients from its output back to its inputs. Tape::backward replays
// the closures in reverse order. A fresh tape is built for every forward pass.

#include "timeformer/errors.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace timeformer {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;      // empty until the node participates in a backward pass
    bool requires_grad = false;    // leaf flag, set by the user
    bool tracked = false;          // set on op outputs while a tape is active

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

} // namespace detail

class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
        : node_(std::make_shared<detail::TensorNode>()) {
        node_->shape = std::move(shape);
        node_->values.assign(shape_numel(node_->shape), fill);
        set_requires_grad(requires_grad);
    }

    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size()) {
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->values = std::move(values);
        t.set_requires_grad(requires_grad);
        return t;
    }

    static Tensor scalar(double v) { return from_values({}, {v}); }

    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->values.size(); }
    std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }

    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }

    double item() const {
        if (numel() != 1) {
            throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape()));
        }
        return node_->values[0];
    }

    /// Element access for 2-D tensors, row-major.
    double at2(std::size_t i, std::size_t j) const {
        return node_->values[i * node_->shape.back() + j];
    }

    bool requires_grad() const { return node_->requires_grad; }

    void set_requires_grad(bool flag) {
        node_->requires_grad = flag;
        if (flag) node_->ensure_grad();
    }

    bool has_grad() const { return node_->grad.size() == node_->values.size(); }

    std::vector<double>& grad() {
        if (!has_grad()) {
            throw ContractError("tensor has no gradient buffer (shape " + shape_str(shape()) + ")");
        }
        return node_->grad;
    }
    const std::vector<double>& grad() const {
        return const_cast<Tensor*>(this)->grad();
    }

    void zero_grad() {
        if (node_->requires_grad) {
            node_->ensure_grad();
            std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
        } else {
            node_->grad.clear();
        }
    }

    bool all_finite() const {
        for (double v : node_->values) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    /// Deep copy of the values; gradient state is not carried over.
    Tensor detached_copy() const {
        return from_values(node_->shape, node_->values, false);
    }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

    bool tracked() const { return node_->tracked || node_->requires_grad; }
    void mark_tracked() { node_->tracked = true; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

/// Records the backward closures of one forward pass.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(BackwardFn fn) { records_.push_back(std::move(fn)); }

    std::size_t size() const { return records_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and replays all records in reverse order.
    void backward(const Tensor& loss) {
        if (consumed_) {
            throw ContractError("backward called twice on the same tape without reset");
        }
        if (records_.empty()) {
            throw ContractError("backward on an empty tape");
        }
        if (loss.numel() != 1) {
            throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
        }
        auto node = loss.node();
        node->ensure_grad();
        node->grad[0] = 1.0;
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            (*it)();
        }
        consumed_ = true;
    }

    void reset() {
        records_.clear();
        consumed_ = false;
    }

    static Tape* current() { return current_; }

private:
    friend class TapeScope;
    std::vector<BackwardFn> records_;
    bool consumed_ = false;
    inline static thread_local Tape* current_ = nullptr;
};

/// Makes a tape the active recording target for the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : previous_(Tape::current_) { Tape::current_ = &tape; }
    ~TapeScope() { Tape::current_ = previous_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

namespace detail {

/// True when the active tape should record gradients flowing to `t`.
inline bool grad_needed(const Tensor& t) {
    return Tape::current() != nullptr && t.tracked();
}

/// Output-side gradient of a node during replay; empty when the node was
/// never reached from the loss.
inline const std::vector<double>* output_grad(const std::shared_ptr<TensorNode>& node) {
    if (node->grad.size() != node->values.size()) return nullptr;
    return &node->grad;
}

} // namespace detail

} // namespace timeformer
