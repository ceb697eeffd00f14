#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsedit::numerics {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Values live in double buffers. Under the default f32 precision every op
// rounds its output (and every accumulated gradient) to binary32, so stored
// values are exactly what a float tensor would hold. f64 disables the
// rounding; grad_check runs its forward passes that way.
enum class Precision { f32, f64 };

Precision current_precision();

class ScopedPrecision {
public:
    explicit ScopedPrecision(Precision p);
    ~ScopedPrecision();
    ScopedPrecision(const ScopedPrecision&) = delete;
    ScopedPrecision& operator=(const ScopedPrecision&) = delete;

private:
    Precision previous_;
};

// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Rounds in place when the current precision is f32.
void round_to_precision(std::vector<double>& values);
double round_to_precision(double v);

namespace detail {
struct Node;
}

/// Dense row-major tensor handle. Copies share storage; use clone() for a
/// deep copy. Ops that see an input with requires_grad() record themselves
/// so that backward() can propagate gradients to the leaves.
class DTensor {
public:
    DTensor();

    static DTensor zeros(Shape shape, bool requires_grad = false);
    static DTensor full(Shape shape, double value, bool requires_grad = false);
    static DTensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static DTensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    // Direct write access for initializers and optimizers. Not recorded.
    std::span<double> mutable_values();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    DTensor grad_tensor() const;
    void zero_grad();

    // Differentiable view with a new shape (data is copied).
    DTensor reshape(Shape shape) const;
    DTensor detach() const;
    DTensor clone() const;

    bool same_storage(const DTensor& other) const { return node_ == other.node_; }
    bool defined() const { return static_cast<bool>(node_); }

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit DTensor(std::shared_ptr<detail::Node> node);

private:
    std::shared_ptr<detail::Node> node_;
};

/// Reverse pass from a scalar loss. Populates grad on every requires_grad
/// leaf reachable from loss and releases the recorded graph.
void backward(const DTensor& loss);

} // namespace gsedit::numerics
