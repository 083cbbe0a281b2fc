#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace adformer {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape &shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape &shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

namespace detail {
template <typename S>
struct Storage {
    std::vector<S> values;
    std::vector<S> grad;  // empty until requested
    bool requires_grad = false;
};
}  // namespace detail

/// Dense multi-dimensional array over a contiguous row-major buffer.
/// Copies are shallow: they alias the same storage, so a parameter held by a
/// registry and by an optimizer sees the same values and gradient buffer.
template <typename S>
class ArrayT {
public:
    ArrayT() = default;

    static ArrayT zeros(Shape shape) {
        ArrayT a;
        a.shape_ = std::move(shape);
        ArrayT::check_shape(a.shape_);
        a.st_ = std::make_shared<detail::Storage<S>>();
        a.st_->values.assign(shape_numel(a.shape_), S(0));
        return a;
    }

    static ArrayT full(Shape shape, S value) {
        ArrayT a = zeros(std::move(shape));
        for (auto &v : a.st_->values) v = value;
        return a;
    }

    static ArrayT from(Shape shape, std::vector<S> values) {
        ArrayT a;
        a.shape_ = std::move(shape);
        ArrayT::check_shape(a.shape_);
        if (values.size() != shape_numel(a.shape_)) {
            throw std::invalid_argument("ArrayT::from: " + std::to_string(values.size()) +
                                        " values for shape " + shape_str(a.shape_));
        }
        a.st_ = std::make_shared<detail::Storage<S>>();
        a.st_->values = std::move(values);
        return a;
    }

    static ArrayT scalar_value(S value) { return from({1}, {value}); }

    bool valid() const { return st_ != nullptr; }
    const Shape &shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return st_ ? st_->values.size() : 0; }

    S *data() { return st_->values.data(); }
    const S *data() const { return st_->values.data(); }
    std::span<const S> values() const { return {st_->values.data(), st_->values.size()}; }
    std::vector<S> to_vector() const { return st_->values; }

    S operator[](std::size_t flat) const { return st_->values[flat]; }
    S &at_flat(std::size_t flat) { return st_->values[flat]; }

    S scalar() const {
        if (numel() != 1) {
            throw std::invalid_argument("ArrayT::scalar: array has " + std::to_string(numel()) +
                                        " elements");
        }
        return st_->values[0];
    }

    bool requires_grad() const { return st_ && st_->requires_grad; }
    ArrayT &set_requires_grad(bool on) {
        st_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return st_ && !st_->grad.empty(); }
    /// Allocates (zero-filled) the gradient buffer if absent.
    void ensure_grad() {
        if (st_->grad.empty()) st_->grad.assign(st_->values.size(), S(0));
    }
    void zero_grad() {
        if (!st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), S(0));
    }
    S *grad_data() { return st_->grad.data(); }
    const S *grad_data() const { return st_->grad.data(); }
    std::span<const S> grad() const { return {st_->grad.data(), st_->grad.size()}; }

    /// Same storage, different shape. No copy; gradients alias as well.
    ArrayT reshaped(Shape shape) const {
        if (shape_numel(shape) != numel()) {
            throw std::invalid_argument("reshape: cannot view " + shape_str(shape_) + " as " +
                                        shape_str(shape));
        }
        ArrayT::check_shape(shape);
        ArrayT a;
        a.shape_ = std::move(shape);
        a.st_ = st_;
        return a;
    }

    /// Deep copy of values; fresh storage, no gradient, no requires_grad.
    ArrayT clone() const {
        ArrayT a;
        a.shape_ = shape_;
        a.st_ = std::make_shared<detail::Storage<S>>();
        a.st_->values = st_->values;
        return a;
    }

    bool same_storage(const ArrayT &other) const { return st_ == other.st_; }

private:
    static void check_shape(const Shape &shape) {
        for (auto d : shape) {
            if (d == 0) throw std::invalid_argument("ArrayT: zero-sized dimension in " + shape_str(shape));
        }
    }

    Shape shape_;
    std::shared_ptr<detail::Storage<S>> st_;
};

/// Ordered record of executed differentiable operations. Ops append a pull
/// closure while a tape is active; backward() replays them in reverse, which
/// is a reverse topological order because execution order is a topological
/// order of the data flow.
template <typename S>
class TapeT {
public:
    TapeT() = default;
    TapeT(const TapeT &) = delete;
    TapeT &operator=(const TapeT &) = delete;

    static TapeT *active() { return current_; }

    void record(std::function<void()> pull) { records_.push_back(std::move(pull)); }

    std::size_t op_count() const { return records_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates gradients to every
    /// requires_grad array recorded on this tape. Gradients accumulate
    /// additively, both across fan-out and across repeated backward calls.
    void backward(ArrayT<S> loss) {
        if (loss.numel() != 1) {
            throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                        shape_str(loss.shape()));
        }
        loss.ensure_grad();
        loss.grad_data()[0] += S(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    }

    void clear() { records_.clear(); }

    /// RAII activation; ops record onto the innermost active tape.
    class Scope {
    public:
        explicit Scope(TapeT &tape) : prev_(current_) { current_ = &tape; }
        ~Scope() { current_ = prev_; }
        Scope(const Scope &) = delete;
        Scope &operator=(const Scope &) = delete;

    private:
        TapeT *prev_;
    };

private:
    inline static thread_local TapeT *current_ = nullptr;
    std::vector<std::function<void()>> records_;
};

using Array = ArrayT<double>;
using Tape = TapeT<double>;

}  // namespace adformer
