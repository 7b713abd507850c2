#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "m2gan/tensor.hpp"

namespace m2gan {

// Reverse-mode autodiff over Tensor. Each forward op records a node on a
// dynamically built tape; backward() walks the tape in reverse topological
// order. Parameters are long-lived leaf nodes, everything else is rebuilt
// per forward pass.
struct AdNode {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<AdNode>> parents;
    std::function<void(AdNode&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape());
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<AdNode> node) : node_(std::move(node)) {}

    static Var leaf(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    Tensor& grad() { return node_->ensure_grad(); }
    const Tensor& grad() const { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    void zero_grad() {
        if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
    }
    // A leaf sharing this node's value, cut off from the tape.
    Var detach() const;

    const std::shared_ptr<AdNode>& node() const { return node_; }
    AdNode* raw() const { return node_.get(); }

private:
    mutable std::shared_ptr<AdNode> node_;
};

// Builds an op node; requires_grad is inherited from the parents.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(AdNode&)> backward_fn);

// Runs reverse accumulation from a scalar (shape {1}) root.
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_const(const Var& a, double c);
Var vabs(const Var& a);
Var vlog(const Var& a);
Var sigmoid(const Var& a);
Var vtanh(const Var& a);
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double negative_slope);
Var clamp01(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

// ---- reductions / reshapes ----
Var sum(const Var& a);   // -> {1}
Var mean(const Var& a);  // -> {1}
Var stack_scalars(const std::vector<Var>& scalars);  // n x {1} -> {n}
Var mean_of(const std::vector<Var>& scalars);        // -> {1}

// ---- spatial ops on {H,W,C} maps ----
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& a, int c_begin, int c_end);
Var reflect_pad(const Var& a, int pad);
// Valid cross-correlation: x {H,W,IC}, w {OC,KH,KW,IC}, b {OC}.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int dilation = 1);
Var avg_pool2(const Var& a);
Var upsample_nearest2(const Var& a);
Var global_avg_pool(const Var& a);                 // {H,W,C} -> {C}
Var broadcast_spatial(const Var& v, int h, int w); // {C} -> {H,W,C}
Var linear(const Var& x, const Var& w, const Var& b);  // {in},{out,in},{out} -> {out}
// Per-pixel softmax over channels with temperature tau (stable).
Var channel_softmax(const Var& a, double tau);

}  // namespace m2gan
