#pragma once

#include <functional>
#include <string>
#include <vector>

#include "probcontour/tensor.hpp"

namespace probcontour::ad {

/// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Var {
    int index = -1;
    bool valid() const { return index >= 0; }
};

/// Reverse-mode gradient tape. Ops evaluate eagerly and append a node whose
/// backward closure scatters the node's adjoint into its parents. Nodes are
/// stored in topological order (parents precede children), so a single
/// reverse sweep visits each node exactly once.
///
/// Single-threaded by design: one tape per training step. Independent tapes
/// may live on separate threads.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf (parameter or input we want gradients for).
    Var leaf(Tensor value, std::string name = "");
    /// Non-differentiable leaf; backward never propagates into it.
    Var constant(Tensor value);

    // -- primitives ---------------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    /// (m,k) x (k,n) -> (m,n), or (m,k) x (k,) -> (m,)
    Var matmul(Var a, Var b);
    /// input (C,H,W), kernel (O,C,kh,kw), bias (O,), zero padding, stride 1.
    Var conv2d(Var input, Var kernel, Var bias, int padding);
    /// 2x2 max-pool, stride 2, floor semantics on odd dims. Input (C,H,W).
    Var maxpool2(Var input);
    Var relu(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var square(Var a);
    Var sum(Var a);   // -> scalar
    Var mean(Var a);  // -> scalar
    /// Broadcast-add of bias over the trailing dimension: (..., C) + (C,).
    Var add_bias(Var a, Var bias);
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var neg(Var a) { return scale(a, -1.0); }
    /// Elementwise clamp; gradient passes through inside [lo, hi], zero outside.
    Var clamp(Var a, double lo, double hi);
    /// Same data, new shape (sizes must agree). Gradient passes through.
    Var reshape(Var a, std::vector<int> new_shape);
    /// Contiguous sub-vector [begin, begin+len) of a 1-D tensor.
    Var slice(Var a, int begin, int len);
    /// Repeat a 2-vector `copies` times: (sx,sy) -> (sx,sy,sx,sy,...).
    Var tile_pair(Var pair, int copies);
    /// Gather scalar nodes into a 1-D tensor.
    Var pack_scalars(const std::vector<Var>& xs);
    /// Numerically stable log(sum(exp(a))) over a 1-D tensor, composed from
    /// primitives with the max subtracted as a constant.
    Var logsumexp(Var a);

    // -- access -------------------------------------------------------------
    const Tensor& value(Var v) const { return node(v).value; }
    /// Gradient of the last backward() root with respect to v.
    const Tensor& grad(Var v) const;
    const std::string& name(Var v) const { return node(v).name; }
    int size() const { return static_cast<int>(nodes_.size()); }

    /// Reverse sweep from a scalar root. Overwrites all gradients.
    void backward(Var root);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        // Accumulates this node's adjoint into parent adjoints.
        std::function<void(Tape&, int)> backprop;
        std::string name;
        bool needs_grad = false;
    };

    Node& node(Var v);
    const Node& node(Var v) const;
    Var push(Tensor value, std::vector<int> parents, std::function<void(Tape&, int)> backprop);
    bool any_needs_grad(const std::vector<int>& parents) const;
    Var map_unary(Var a, const char* op_name, double (*fwd)(double),
                  double (*dfd)(double in, double out));

    std::vector<Node> nodes_;
    bool grads_valid_ = false;

    friend struct NodeAccess;
};

}  // namespace probcontour::ad
