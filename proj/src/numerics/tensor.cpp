#include "gsedit/numerics/tensor.hpp"
#include "gsedit/numerics/autograd.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gsedit::numerics {

namespace {
thread_local Precision g_precision = Precision::f32;
thread_local bool g_grad_enabled = true;
} // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Precision current_precision() { return g_precision; }

ScopedPrecision::ScopedPrecision(Precision p) : previous_(g_precision) { g_precision = p; }
ScopedPrecision::~ScopedPrecision() { g_precision = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

double round_to_precision(double v) {
    return g_precision == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

void round_to_precision(std::vector<double>& values) {
    if (g_precision != Precision::f32) return;
    for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

namespace detail {

DTensor make_op(Shape shape,
                std::vector<double> data,
                const std::vector<DTensor>& inputs,
                std::function<void(Node&)> backward_fn) {
    if (numel(shape) != data.size()) {
        throw ShapeError(fmt::format("op produced {} values for shape {}", data.size(), shape_str(shape)));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    round_to_precision(data);
    node->data = std::move(data);
    bool record = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) {
            if (in.defined() && in.requires_grad()) {
                record = true;
                break;
            }
        }
    }
    if (record) {
        node->requires_grad = true;
        node->is_leaf = false;
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backward = std::move(backward_fn);
    }
    return DTensor(std::move(node));
}

} // namespace detail

DTensor::DTensor() = default;
DTensor::DTensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

DTensor DTensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

DTensor DTensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = numerics::numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

DTensor DTensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numerics::numel(shape) != values.size()) {
        throw ShapeError(fmt::format("{} values do not fill shape {}", values.size(), shape_str(shape)));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    round_to_precision(values);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return DTensor(std::move(node));
}

DTensor DTensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& DTensor::shape() const {
    static const Shape empty;
    return node_ ? node_->shape : empty;
}

std::size_t DTensor::dim(std::size_t axis) const {
    if (axis >= ndim()) throw ShapeError(fmt::format("axis {} out of range for shape {}", axis, shape_str(shape())));
    return shape()[axis];
}

std::size_t DTensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> DTensor::values() const {
    if (!node_) return {};
    return {node_->data.data(), node_->data.size()};
}

std::span<double> DTensor::mutable_values() {
    if (!node_) return {};
    return {node_->data.data(), node_->data.size()};
}

double DTensor::item() const {
    if (numel() != 1) throw ShapeError(fmt::format("item() on tensor of shape {}", shape_str(shape())));
    return node_->data[0];
}

double DTensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != ndim()) throw ShapeError("index rank does not match tensor rank");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape()[axis]) throw ShapeError("index out of range");
        flat = flat * shape()[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

bool DTensor::requires_grad() const { return node_ && node_->requires_grad; }

void DTensor::set_requires_grad(bool flag) {
    if (!node_->is_leaf) throw GraphError("requires_grad can only be set on leaf tensors");
    node_->requires_grad = flag;
}

bool DTensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> DTensor::grad() const {
    if (!has_grad()) return {};
    return {node_->grad.data(), node_->grad.size()};
}

DTensor DTensor::grad_tensor() const {
    if (!has_grad()) return DTensor::zeros(shape());
    return DTensor::from(shape(), node_->grad);
}

void DTensor::zero_grad() {
    if (node_) node_->grad.clear();
}

DTensor DTensor::reshape(Shape new_shape) const {
    if (numerics::numel(new_shape) != numel()) {
        throw ShapeError(fmt::format("cannot reshape {} to {}", shape_str(shape()), shape_str(new_shape)));
    }
    return detail::make_op(std::move(new_shape), node_->data, {*this}, [](detail::Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    });
}

DTensor DTensor::detach() const { return DTensor::from(shape(), node_->data); }

DTensor DTensor::clone() const { return DTensor::from(shape(), node_->data, requires_grad() && node_->is_leaf); }

void backward(const DTensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError(fmt::format("backward needs a scalar loss, got shape {}", shape_str(loss.shape())));
    }
    auto root = loss.node();
    if (root->consumed) throw GraphError("graph already consumed by an earlier backward()");
    if (!root->requires_grad) throw GraphError("loss was not produced by a recorded graph");

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            auto* parent = node->parents[next++].get();
            if (parent && parent->requires_grad && !visited.count(parent)) {
                if (parent->consumed) throw GraphError("graph already consumed by an earlier backward()");
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* node = *it;
        if (node->is_leaf) continue;
        round_to_precision(node->grad);
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
    for (auto* node : order) {
        if (node->is_leaf) {
            round_to_precision(node->grad);
            continue;
        }
        node->backward = nullptr;
        node->parents.clear();
        node->grad.clear();
        node->consumed = true;
    }
}

} // namespace gsedit::numerics
