#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ragseco {

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Mode { train, eval };

namespace ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;     // empty until gradient flows here
    bool requires_grad = false;   // trainable leaf
    bool graph_output = false;    // produced by a recorded op
};

// Value-semantics handle on a shared tensor node. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto node = std::make_shared<TensorNode>();
        node->values.assign(shape_numel(shape), 0.0);
        node->shape = std::move(shape);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (double& x : t.values()) x = v;
        return t;
    }

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor init: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
        auto node = std::make_shared<TensorNode>();
        node->shape = std::move(shape);
        node->values = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor scalar(double v) { return from({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->values.size(); }
    std::size_t rank() const { return node_->shape.size(); }

    std::size_t rows() const {
        if (rank() != 2) throw ShapeError("rows(): tensor " + shape_str(shape()) + " is not rank-2");
        return node_->shape[0];
    }
    std::size_t cols() const {
        if (rank() != 2) throw ShapeError("cols(): tensor " + shape_str(shape()) + " is not rank-2");
        return node_->shape[1];
    }

    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }

    double& at(std::size_t i, std::size_t j) { return node_->values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return node_->values[i * cols() + j]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool needs_grad() const { return node_->requires_grad || node_->graph_output; }
    void mark_graph_output() { node_->graph_output = true; }

    bool has_grad() const { return !node_->grad.empty(); }

    // Gradient buffer, zero-initialized on first access. Handles alias shared
    // node state, so a const handle still reaches the live buffer.
    std::vector<double>& grad() const {
        if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
        return node_->grad;
    }

    void zero_grad() const { node_->grad.assign(node_->values.size(), 0.0); }
    void drop_grad() const { node_->grad.clear(); }

    bool all_finite() const {
        for (double v : node_->values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }
    const void* node_id() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorNode> node_;
};

// Ordered record of executed ops. Backward replays the record in reverse,
// visiting each recorded op exactly once.
class Tape {
public:
    void record(std::function<void()> backward_step) {
        steps_.push_back(std::move(backward_step));
    }

    std::size_t size() const { return steps_.size(); }
    void clear() { steps_.clear(); }

    void backward(Tensor loss) {
        if (loss.numel() != 1)
            throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        loss.grad()[0] = 1.0;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> steps_;
};

} // namespace ad
} // namespace ragseco
