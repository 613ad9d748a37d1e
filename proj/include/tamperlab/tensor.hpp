#pragma once

// Dense n-d tensors with reverse-mode autodiff. The scalar type is a template
// parameter: float is the training default, double backs the gradient-check
// mode (finite differences are unreliable at 32-bit). A Tape records backward
// closures in execution order; backward() replays them in exact reverse.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlab {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

struct TensorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
struct Storage {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // empty until a backward pass touches it
    bool requires_grad = false;
};

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.s_ = std::make_shared<Storage<T>>();
        t.s_->shape = std::move(shape);
        t.s_->value.assign(numel(t.s_->shape), T(0));
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& x : t.s_->value) x = v;
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (numel(shape) != data.size())
            throw TensorError("tensor init: shape " + shape_str(shape) + " wants " +
                              std::to_string(numel(shape)) + " values, got " +
                              std::to_string(data.size()));
        Tensor t;
        t.s_ = std::make_shared<Storage<T>>();
        t.s_->shape = std::move(shape);
        t.s_->value = std::move(data);
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return from({}, {v}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(s_); }
    const Shape& shape() const { return s_->shape; }
    std::size_t rank() const { return s_->shape.size(); }
    std::size_t size() const { return s_->value.size(); }
    std::size_t extent(std::size_t axis) const { return s_->shape.at(axis); }

    T* data() { return s_->value.data(); }
    const T* data() const { return s_->value.data(); }
    std::span<T> value() { return {s_->value.data(), s_->value.size()}; }
    std::span<const T> value() const { return {s_->value.data(), s_->value.size()}; }

    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool rg) { s_->requires_grad = rg; }

    bool has_grad() const { return !s_->grad.empty(); }
    std::span<T> grad() {
        ensure_grad();
        return {s_->grad.data(), s_->grad.size()};
    }
    std::span<const T> grad_view() const {
        return {s_->grad.data(), s_->grad.size()};
    }
    void ensure_grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->value.size(), T(0));
    }
    void zero_grad() {
        if (!s_->grad.empty()) s_->grad.assign(s_->value.size(), T(0));
    }
    void drop_grad() { s_->grad.clear(); }

    T item() const {
        if (size() != 1)
            throw TensorError("item(): tensor has shape " + shape_str(shape()));
        return s_->value[0];
    }

    // Row-major multi-index access, for tests and small hosts.
    T at(std::initializer_list<std::size_t> idx) const {
        return s_->value[offset_of(idx)];
    }
    T& at(std::initializer_list<std::size_t> idx) {
        return s_->value[offset_of(idx)];
    }

    std::shared_ptr<Storage<T>> storage() const { return s_; }

    // Same-length value copy (used by optimizers and checkpoint restore).
    void assign_values(std::span<const T> v) {
        if (v.size() != s_->value.size())
            throw TensorError("assign_values: size mismatch");
        std::copy(v.begin(), v.end(), s_->value.begin());
    }

private:
    std::size_t offset_of(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != s_->shape.size())
            throw TensorError("index rank mismatch for shape " + shape_str(shape()));
        std::size_t off = 0;
        std::size_t i = 0;
        for (std::size_t v : idx) {
            off = off * s_->shape[i] + v;
            ++i;
        }
        return off;
    }

    std::shared_ptr<Storage<T>> s_;
};

template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape*& active_slot() {
        thread_local Tape* active = nullptr;
        return active;
    }
    static Tape* active() { return active_slot(); }

    // Activates the tape for the current thread for the scope's lifetime.
    class Scope {
    public:
        explicit Scope(Tape& t) : prev_(active_slot()) { active_slot() = &t; }
        ~Scope() { active_slot() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    void record(const Tensor<T>& out, std::function<void()> backward) {
        outputs_.push_back(out.storage());
        steps_.push_back(std::move(backward));
    }

    std::size_t size() const { return steps_.size(); }

    // Reverse replay. Seeds d(loss)/d(loss) = 1. Repeated calls without a
    // grad reset add another full pass into leaf gradients; gradients of
    // recorded intermediates are cleared at the start of each pass.
    void backward(Tensor<T>& loss) {
        if (loss.size() != 1)
            throw TensorError("backward: loss must be scalar, got shape " +
                              shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw TensorError("backward: loss does not depend on any "
                              "requires_grad tensor (nothing recorded)");
        for (auto& out : outputs_)
            if (!out->grad.empty()) out->grad.assign(out->value.size(), T(0));
        loss.grad()[0] = T(1);
        for (std::size_t i = steps_.size(); i-- > 0;) steps_[i]();
    }

    void clear() {
        steps_.clear();
        outputs_.clear();
    }

private:
    std::vector<std::function<void()>> steps_;
    std::vector<std::shared_ptr<Storage<T>>> outputs_;
};

} // namespace tlab
