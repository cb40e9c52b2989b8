#include "core/tensor.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace fuseformer {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : data_(std::make_shared<std::vector<double>>(static_cast<size_t>(shape_numel(shape)), 0.0)),
      shape_(std::move(shape)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != static_cast<int64_t>(values.size()))
        throw ShapeError("tensor data length does not match shape");
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = v;
    return t;
}

double Tensor::value() const {
    if (size() != 1) throw ShapeError("value() requires a one-element tensor");
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
}

Tensor Tensor::with_shape(std::vector<int> shape) const {
    if (shape_numel(shape) != size()) throw ShapeError("with_shape: element count mismatch");
    Tensor t;
    t.data_ = data_;
    t.shape_ = std::move(shape);
    return t;
}

bool Tensor::all_finite() const {
    if (!data_) return true;
    for (double v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tape::leaf(const Tensor& value) {
    Tensor t = value;
    t.tape_ = this;
    t.node_ = push_node(value.size(), nullptr);
    return t;
}

int Tape::push_node(int64_t out_size, BackFn back) {
    nodes_.push_back(Node{out_size, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::track(Tensor value, int node) {
    value.tape_ = this;
    value.node_ = node;
    return value;
}

std::vector<double>& Tape::grad_ref(int node) {
    auto& g = grads_[static_cast<size_t>(node)];
    if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].size), 0.0);
    return g;
}

const std::vector<double>* Tape::grad_if(int node) const {
    const auto& g = grads_[static_cast<size_t>(node)];
    return g.empty() ? nullptr : &g;
}

void Tape::backward(const Tensor& scalar_output) {
    if (!scalar_output.tracked() || scalar_output.tape() != this)
        throw ShapeError("backward: output is not tracked on this tape");
    if (scalar_output.size() != 1)
        throw ShapeError("backward: output must have exactly one element");
    grads_.assign(nodes_.size(), {});
    grad_ref(scalar_output.node())[0] = 1.0;
    for (int i = scalar_output.node(); i >= 0; --i) {
        const Node& n = nodes_[static_cast<size_t>(i)];
        if (n.back && !grads_[static_cast<size_t>(i)].empty()) n.back(*this, i);
    }
}

Tensor Tape::grad(const Tensor& tracked) const {
    if (!tracked.tracked() || tracked.tape() != this)
        throw ShapeError("grad: tensor is not tracked on this tape");
    Tensor g(tracked.shape());
    if (grads_.size() > static_cast<size_t>(tracked.node())) {
        const auto& buf = grads_[static_cast<size_t>(tracked.node())];
        if (!buf.empty()) std::copy(buf.begin(), buf.end(), g.data());
    }
    return g;
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* t = nullptr;
    for (const Tensor* x : inputs) {
        if (!x->tracked()) continue;
        if (t && x->tape() != t) throw ShapeError("operands live on different tapes");
        t = x->tape();
    }
    return t;
}

} // namespace fuseformer
