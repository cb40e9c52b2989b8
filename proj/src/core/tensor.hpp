#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace fuseformer {

class Tape;

int64_t shape_numel(const std::vector<int>& shape);

// Dense row-major double tensor. Copies are shallow (the buffer is shared);
// every op allocates a fresh output, so shared buffers are never mutated
// while a graph that reads them is alive. A tensor optionally carries a node
// id on a tape, which makes it participate in reverse-mode differentiation.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    bool defined() const { return static_cast<bool>(data_); }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    const std::shared_ptr<std::vector<double>>& storage() const { return data_; }

    // value of a one-element tensor
    double value() const;

    bool tracked() const { return node_ >= 0; }
    int node() const { return node_; }
    Tape* tape() const { return tape_; }

    // same buffer, no tape node
    Tensor detached() const;

    // same buffer under a different shape (element count must match);
    // drops tracking — ops::reshape is the differentiable version
    Tensor with_shape(std::vector<int> shape) const;

    bool all_finite() const;

private:
    std::shared_ptr<std::vector<double>> data_;
    std::vector<int> shape_;
    Tape* tape_ = nullptr;
    int node_ = -1;

    friend class Tape;
};

// Append-only operation record. Node ids grow in graph order, so walking ids
// backwards is a reverse topological traversal and each node's backward runs
// exactly once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers `value` as a differentiable leaf. The returned tensor shares
    // the buffer with `value`.
    Tensor leaf(const Tensor& value);

    // Reverse pass from a one-element output. Clears previous gradients.
    void backward(const Tensor& scalar_output);

    // Adjoint of a tracked tensor after backward(); zeros if the node was
    // never reached.
    Tensor grad(const Tensor& tracked) const;

    size_t node_count() const { return nodes_.size(); }

    // --- op support ---
    using BackFn = std::function<void(Tape&, int self)>;
    int push_node(int64_t out_size, BackFn back);
    Tensor track(Tensor value, int node);
    // accumulation buffer for a node, allocated on first touch
    std::vector<double>& grad_ref(int node);
    // nullptr if the node was never touched during backward
    const std::vector<double>* grad_if(int node) const;

private:
    struct Node {
        int64_t size;
        BackFn back; // null for leaves
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

// Throws ShapeError when tracked inputs sit on different tapes; returns the
// common tape or nullptr when all inputs are constants.
Tape* common_tape(std::initializer_list<const Tensor*> inputs);

} // namespace fuseformer
