#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "stanp/tensor.hpp"

namespace stanp::ad {

enum class OpKind {
    Leaf,
    Add,
    AddRow,
    Sub,
    Mul,
    MulRow,
    Div,
    Scale,
    AddConst,
    Matmul,
    MatmulNT,
    Conv3x3,
    Relu,
    Softplus,
    Exp,
    Log,
    Gelu,
    SoftmaxRows,
    LayerNormRows,
    MeanRows,
    MeanCells,
    SumAll,
    MeanAll,
    ConcatLast,
    SliceLast,
    BroadcastRow,
    Reshape,
    ClampNonnegEps,
};

const char* op_name(OpKind kind);

struct TapeNode {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    // op-specific extras: slice offsets, scale factors
    double scalar_a = 0.0;
    std::size_t aux0 = 0;
    std::size_t aux1 = 0;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Value {
    Tape* tape = nullptr;
    std::size_t id = 0;
};

// Single-threaded record of a forward computation. Ops append nodes, so node
// ids are already in topological order; backward walks them once in reverse.
class Tape {
public:
    explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Value leaf(Tensor t, bool requires_grad = false);

    std::size_t size() const { return nodes_.size(); }
    const TapeNode& node(std::size_t id) const { return nodes_[id]; }
    const Tensor& value(Value v) const { return nodes_[v.id].value; }

    // Reverse pass from a scalar root. Gradients of earlier runs are discarded.
    void backward(Value root);

    bool has_grad(Value v) const { return v.id < grads_.size() && grad_set_[v.id]; }
    const Tensor& grad(Value v) const;

    // Gradient map over leaves, keyed by node id.
    std::unordered_map<std::size_t, Tensor> leaf_gradients() const;

    bool check_finite() const { return check_finite_; }

private:
    friend Value emit(Tape& tape, TapeNode node);

    std::vector<TapeNode> nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> grad_set_;
    bool check_finite_;
};

// One ELBO-style convenience: record a graph, backward from the root, and
// return leaf gradients keyed by node id.
std::unordered_map<std::size_t, Tensor> forward_backward(Value root);

// elementwise / broadcast
Value add(Value a, Value b);
Value add_row(Value x, Value row);   // [n,m] + [1,m]
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value mul_row(Value x, Value row);   // [n,m] * [1,m]
Value divide(Value a, Value b);
Value scale(Value x, double c);
Value add_const(Value x, double c);
Value neg(Value x);

// linear algebra
Value matmul(Value a, Value b);      // [n,k]·[k,m]
Value matmul_nt(Value a, Value b);   // [n,k]·[m,k]^T -> [n,m]

// convolution on a batch of 3x3 patches: input [B,9,Cin], kernel [Cout,Cin,9]
// (taps row-major), stride 1, zero padding 1 -> [B,9,Cout]
Value conv3x3(Value input, Value kernel);

// activations
Value relu(Value x);
Value softplus(Value x);
Value exp(Value x);
Value log(Value x);
Value gelu(Value x);

// row-structured
Value softmax_rows(Value x);
Value layer_norm_rows(Value x);      // per-row standardization, no affine
Value mean_rows(Value x);            // [n,m] -> [1,m]
Value mean_cells(Value x);           // [B,9,C] -> [B,C]

// reductions to scalar
Value sum_all(Value x);
Value mean_all(Value x);

// shape
Value concat_last(const std::vector<Value>& parts);
Value slice_last(Value x, std::size_t start, std::size_t len);
Value broadcast_row(Value row, std::size_t n);  // [1,m] -> [n,m]
Value reshape(Value x, std::vector<std::size_t> shape);  // same element count

// identity-gradient clamp: values in (-1e-12, 0) snap to 0
Value clamp_nonneg_eps(Value x);

double first(Value v);  // value of element 0, for scalar reads

}  // namespace stanp::ad
