#include "stanp/tape.hpp"

#include <algorithm>
#include <cmath>

#include "stanp/errors.hpp"

namespace stanp::ad {

namespace {

// C += A(n x k) * B(k x m)
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + kk * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A(n x k) * B(m x k)^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

// C += A(k x n)^T * B(k x m)
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* arow = a + kk * n;
        const double* brow = b + kk * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

constexpr double kLayerNormEps = 1e-10;
constexpr double kKlClampEps = 1e-12;

Tape& same_tape(Value a, Value b) {
    if (a.tape != b.tape) throw ContractViolation("operands recorded on different tapes");
    return *a.tape;
}

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw ContractViolation(std::string(what) + " must be rank 2, got " + t.shape_str());
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// gelu tanh form and its derivative
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_fwd(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// im2col for 3x3 patches with zero padding 1: [B,9,Cin] -> [B*9, 9*Cin]
void patch_im2col(const Tensor& in, std::size_t batch, std::size_t cin, std::vector<double>& m) {
    m.assign(batch * 9 * 9 * cin, 0.0);
    const double* src = in.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                double* mrow = m.data() + ((b * 9) + static_cast<std::size_t>(r * 3 + c)) * 9 * cin;
                for (int dr = 0; dr < 3; ++dr) {
                    const int rr = r + dr - 1;
                    if (rr < 0 || rr > 2) continue;
                    for (int dc = 0; dc < 3; ++dc) {
                        const int cc = c + dc - 1;
                        if (cc < 0 || cc > 2) continue;
                        const double* cell = src + (b * 9 + static_cast<std::size_t>(rr * 3 + cc)) * cin;
                        double* dst = mrow + static_cast<std::size_t>(dr * 3 + dc) * cin;
                        std::copy(cell, cell + cin, dst);
                    }
                }
            }
        }
    }
}

// kernel [Cout,Cin,3,3] -> [9*Cin, Cout]
void kernel_to_mat(const Tensor& k, std::size_t cout, std::size_t cin, std::vector<double>& km) {
    km.assign(9 * cin * cout, 0.0);
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t tap = 0; tap < 9; ++tap) {
                km[(tap * cin + ci) * cout + co] = k[((co * cin + ci) * 9) + tap];
            }
        }
    }
}

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::AddRow: return "add_row";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::MulRow: return "mul_row";
        case OpKind::Div: return "div";
        case OpKind::Scale: return "scale";
        case OpKind::AddConst: return "add_const";
        case OpKind::Matmul: return "matmul";
        case OpKind::MatmulNT: return "matmul_nt";
        case OpKind::Conv3x3: return "conv3x3";
        case OpKind::Relu: return "relu";
        case OpKind::Softplus: return "softplus";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Gelu: return "gelu";
        case OpKind::SoftmaxRows: return "softmax_rows";
        case OpKind::LayerNormRows: return "layer_norm_rows";
        case OpKind::MeanRows: return "mean_rows";
        case OpKind::MeanCells: return "mean_cells";
        case OpKind::SumAll: return "sum_all";
        case OpKind::MeanAll: return "mean_all";
        case OpKind::ConcatLast: return "concat_last";
        case OpKind::SliceLast: return "slice_last";
        case OpKind::BroadcastRow: return "broadcast_row";
        case OpKind::Reshape: return "reshape";
        case OpKind::ClampNonnegEps: return "clamp_nonneg_eps";
    }
    return "?";
}

Value emit(Tape& tape, TapeNode node) {
    node.requires_grad = node.kind == OpKind::Leaf
                             ? node.requires_grad
                             : std::any_of(node.inputs.begin(), node.inputs.end(),
                                           [&](std::size_t id) { return tape.nodes_[id].requires_grad; });
    const std::size_t id = tape.nodes_.size();
    if (tape.check_finite_ && !node.value.all_finite()) {
        throw NumericError(std::string("non-finite value from ") + op_name(node.kind), id);
    }
    tape.nodes_.push_back(std::move(node));
    return Value{&tape, id};
}

Value Tape::leaf(Tensor t, bool requires_grad) {
    TapeNode node;
    node.kind = OpKind::Leaf;
    node.value = std::move(t);
    node.requires_grad = requires_grad;
    return emit(*this, std::move(node));
}

const Tensor& Tape::grad(Value v) const {
    if (!has_grad(v)) throw ContractViolation("no gradient recorded for node " + std::to_string(v.id));
    return grads_[v.id];
}

std::unordered_map<std::size_t, Tensor> Tape::leaf_gradients() const {
    std::unordered_map<std::size_t, Tensor> out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        if (nodes_[id].kind == OpKind::Leaf && id < grads_.size() && grad_set_[id]) {
            out.emplace(id, grads_[id]);
        }
    }
    return out;
}

std::unordered_map<std::size_t, Tensor> forward_backward(Value root) {
    root.tape->backward(root);
    return root.tape->leaf_gradients();
}

double first(Value v) { return v.tape->value(v)[0]; }

Value add(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    if (!ta.same_shape(tb)) throw ContractViolation("add shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    TapeNode n{OpKind::Add, {a.id, b.id}, Tensor(ta.shape())};
    for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] + tb[i];
    return emit(tape, std::move(n));
}

Value add_row(Value x, Value row) {
    Tape& tape = same_tape(x, row);
    const Tensor& tx = tape.value(x);
    const Tensor& tr = tape.value(row);
    require_rank2(tx, "add_row input");
    if (tr.rank() != 2 || tr.dim(0) != 1 || tr.dim(1) != tx.dim(1)) {
        throw ContractViolation("add_row row must be [1," + std::to_string(tx.dim(1)) + "], got " + tr.shape_str());
    }
    TapeNode n{OpKind::AddRow, {x.id, row.id}, Tensor(tx.shape())};
    const std::size_t m = tx.dim(1);
    for (std::size_t r = 0; r < tx.dim(0); ++r)
        for (std::size_t c = 0; c < m; ++c) n.value[r * m + c] = tx[r * m + c] + tr[c];
    return emit(tape, std::move(n));
}

Value sub(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    if (!ta.same_shape(tb)) throw ContractViolation("sub shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    TapeNode n{OpKind::Sub, {a.id, b.id}, Tensor(ta.shape())};
    for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] - tb[i];
    return emit(tape, std::move(n));
}

Value mul(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    if (!ta.same_shape(tb)) throw ContractViolation("mul shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    TapeNode n{OpKind::Mul, {a.id, b.id}, Tensor(ta.shape())};
    for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] * tb[i];
    return emit(tape, std::move(n));
}

Value mul_row(Value x, Value row) {
    Tape& tape = same_tape(x, row);
    const Tensor& tx = tape.value(x);
    const Tensor& tr = tape.value(row);
    require_rank2(tx, "mul_row input");
    if (tr.rank() != 2 || tr.dim(0) != 1 || tr.dim(1) != tx.dim(1)) {
        throw ContractViolation("mul_row row must be [1," + std::to_string(tx.dim(1)) + "], got " + tr.shape_str());
    }
    TapeNode n{OpKind::MulRow, {x.id, row.id}, Tensor(tx.shape())};
    const std::size_t m = tx.dim(1);
    for (std::size_t r = 0; r < tx.dim(0); ++r)
        for (std::size_t c = 0; c < m; ++c) n.value[r * m + c] = tx[r * m + c] * tr[c];
    return emit(tape, std::move(n));
}

Value divide(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    if (!ta.same_shape(tb)) throw ContractViolation("div shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    TapeNode n{OpKind::Div, {a.id, b.id}, Tensor(ta.shape())};
    for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] / tb[i];
    return emit(tape, std::move(n));
}

Value scale(Value x, double c) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::Scale, {x.id}, Tensor(tx.shape())};
    n.scalar_a = c;
    for (std::size_t i = 0; i < tx.size(); ++i) n.value[i] = tx[i] * c;
    return emit(tape, std::move(n));
}

Value add_const(Value x, double c) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::AddConst, {x.id}, Tensor(tx.shape())};
    n.scalar_a = c;
    for (std::size_t i = 0; i < tx.size(); ++i) n.value[i] = tx[i] + c;
    return emit(tape, std::move(n));
}

Value neg(Value x) { return scale(x, -1.0); }

Value matmul(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    require_rank2(ta, "matmul lhs");
    require_rank2(tb, "matmul rhs");
    if (ta.dim(1) != tb.dim(0)) {
        throw ContractViolation("matmul inner dim mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    TapeNode n{OpKind::Matmul, {a.id, b.id}, Tensor({ta.dim(0), tb.dim(1)})};
    gemm_nn(ta.data(), tb.data(), n.value.data(), ta.dim(0), ta.dim(1), tb.dim(1));
    return emit(tape, std::move(n));
}

Value matmul_nt(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& ta = tape.value(a);
    const Tensor& tb = tape.value(b);
    require_rank2(ta, "matmul_nt lhs");
    require_rank2(tb, "matmul_nt rhs");
    if (ta.dim(1) != tb.dim(1)) {
        throw ContractViolation("matmul_nt inner dim mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    TapeNode n{OpKind::MatmulNT, {a.id, b.id}, Tensor({ta.dim(0), tb.dim(0)})};
    gemm_nt(ta.data(), tb.data(), n.value.data(), ta.dim(0), ta.dim(1), tb.dim(0));
    return emit(tape, std::move(n));
}

Value conv3x3(Value input, Value kernel) {
    Tape& tape = same_tape(input, kernel);
    const Tensor& ti = tape.value(input);
    const Tensor& tk = tape.value(kernel);
    if (ti.rank() != 3 || ti.dim(1) != 9) {
        throw ContractViolation("conv3x3 input must be [B,9,Cin], got " + ti.shape_str());
    }
    if (tk.rank() != 3 || tk.dim(2) != 9 || tk.dim(1) != ti.dim(2)) {
        throw ContractViolation("conv3x3 kernel must be [Cout," + std::to_string(ti.dim(2)) + ",9], got " +
                                tk.shape_str());
    }
    const std::size_t batch = ti.dim(0), cin = ti.dim(2), cout = tk.dim(0);
    std::vector<double> m, km;
    patch_im2col(ti, batch, cin, m);
    kernel_to_mat(tk, cout, cin, km);
    TapeNode n{OpKind::Conv3x3, {input.id, kernel.id}, Tensor({batch, 9, cout})};
    gemm_nn(m.data(), km.data(), n.value.data(), batch * 9, 9 * cin, cout);
    return emit(tape, std::move(n));
}

Value relu(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::Relu, {x.id}, Tensor(tx.shape())};
    for (std::size_t i = 0; i < tx.size(); ++i) n.value[i] = tx[i] > 0.0 ? tx[i] : 0.0;
    return emit(tape, std::move(n));
}

Value softplus(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::Softplus, {x.id}, Tensor(tx.shape())};
    for (std::size_t i = 0; i < tx.size(); ++i) {
        const double v = tx[i];
        n.value[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    }
    return emit(tape, std::move(n));
}

Value exp(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::Exp, {x.id}, Tensor(tx.shape())};
    for (std::size_t i = 0; i < tx.size(); ++i) n.value[i] = std::exp(tx[i]);
    return emit(tape, std::move(n));
}

Value log(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::Log, {x.id}, Tensor(tx.shape())};
    for (std::size_t i = 0; i < tx.size(); ++i) n.value[i] = std::log(tx[i]);
    return emit(tape, std::move(n));
}

Value gelu(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::Gelu, {x.id}, Tensor(tx.shape())};
    for (std::size_t i = 0; i < tx.size(); ++i) n.value[i] = gelu_fwd(tx[i]);
    return emit(tape, std::move(n));
}

Value softmax_rows(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    require_rank2(tx, "softmax input");
    TapeNode n{OpKind::SoftmaxRows, {x.id}, Tensor(tx.shape())};
    const std::size_t m = tx.dim(1);
    if (m == 0) throw ContractViolation("softmax over empty row");
    for (std::size_t r = 0; r < tx.dim(0); ++r) {
        const double* row = tx.data() + r * m;
        double* out = n.value.data() + r * m;
        const double mx = *std::max_element(row, row + m);
        double sum = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            out[c] = std::exp(row[c] - mx);
            sum += out[c];
        }
        for (std::size_t c = 0; c < m; ++c) out[c] /= sum;
    }
    return emit(tape, std::move(n));
}

Value layer_norm_rows(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    require_rank2(tx, "layer_norm input");
    TapeNode n{OpKind::LayerNormRows, {x.id}, Tensor(tx.shape())};
    const std::size_t m = tx.dim(1);
    for (std::size_t r = 0; r < tx.dim(0); ++r) {
        const double* row = tx.data() + r * m;
        double* out = n.value.data() + r * m;
        double mean = 0.0;
        for (std::size_t c = 0; c < m; ++c) mean += row[c];
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t c = 0; c < m; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t c = 0; c < m; ++c) out[c] = (row[c] - mean) * inv;
    }
    return emit(tape, std::move(n));
}

Value mean_rows(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    require_rank2(tx, "mean_rows input");
    if (tx.dim(0) == 0) throw ContractViolation("mean_rows over zero rows");
    TapeNode n{OpKind::MeanRows, {x.id}, Tensor({1, tx.dim(1)})};
    const std::size_t m = tx.dim(1);
    for (std::size_t r = 0; r < tx.dim(0); ++r)
        for (std::size_t c = 0; c < m; ++c) n.value[c] += tx[r * m + c];
    for (std::size_t c = 0; c < m; ++c) n.value[c] /= static_cast<double>(tx.dim(0));
    return emit(tape, std::move(n));
}

Value mean_cells(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    if (tx.rank() != 3 || tx.dim(1) != 9) throw ContractViolation("mean_cells input must be [B,9,C]");
    const std::size_t batch = tx.dim(0), ch = tx.dim(2);
    TapeNode n{OpKind::MeanCells, {x.id}, Tensor({batch, ch})};
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t cell = 0; cell < 9; ++cell)
            for (std::size_t c = 0; c < ch; ++c) n.value[b * ch + c] += tx[(b * 9 + cell) * ch + c];
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] /= 9.0;
    return emit(tape, std::move(n));
}

Value sum_all(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < tx.size(); ++i) s += tx[i];
    TapeNode n{OpKind::SumAll, {x.id}, Tensor::scalar(s)};
    return emit(tape, std::move(n));
}

Value mean_all(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    if (tx.size() == 0) throw ContractViolation("mean_all over empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < tx.size(); ++i) s += tx[i];
    TapeNode n{OpKind::MeanAll, {x.id}, Tensor::scalar(s / static_cast<double>(tx.size()))};
    return emit(tape, std::move(n));
}

Value concat_last(const std::vector<Value>& parts) {
    if (parts.empty()) throw ContractViolation("concat of zero parts");
    Tape& tape = *parts[0].tape;
    const std::size_t rank = tape.value(parts[0]).rank();
    if (rank != 1 && rank != 2) throw ContractViolation("concat supports rank 1 or 2");
    std::size_t rows = rank == 2 ? tape.value(parts[0]).dim(0) : 1;
    std::size_t total = 0;
    TapeNode n{OpKind::ConcatLast, {}, Tensor()};
    for (const Value& p : parts) {
        if (p.tape != &tape) throw ContractViolation("operands recorded on different tapes");
        const Tensor& tp = tape.value(p);
        if (tp.rank() != rank || (rank == 2 && tp.dim(0) != rows)) {
            throw ContractViolation("concat shape mismatch at part " + std::to_string(n.inputs.size()));
        }
        total += tp.shape().back();
        n.inputs.push_back(p.id);
    }
    n.value = rank == 2 ? Tensor({rows, total}) : Tensor({total});
    std::size_t offset = 0;
    for (const Value& p : parts) {
        const Tensor& tp = tape.value(p);
        const std::size_t w = tp.shape().back();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) n.value[r * total + offset + c] = tp[r * w + c];
        offset += w;
    }
    return emit(tape, std::move(n));
}

Value slice_last(Value x, std::size_t start, std::size_t len) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    const std::size_t rank = tx.rank();
    if (rank != 1 && rank != 2) throw ContractViolation("slice supports rank 1 or 2");
    const std::size_t w = tx.shape().back();
    if (start + len > w) throw ContractViolation("slice out of range");
    const std::size_t rows = rank == 2 ? tx.dim(0) : 1;
    TapeNode n{OpKind::SliceLast, {x.id}, rank == 2 ? Tensor({rows, len}) : Tensor({len})};
    n.aux0 = start;
    n.aux1 = len;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < len; ++c) n.value[r * len + c] = tx[r * w + start + c];
    return emit(tape, std::move(n));
}

Value broadcast_row(Value row, std::size_t nrows) {
    Tape& tape = *row.tape;
    const Tensor& tr = tape.value(row);
    if (tr.rank() != 2 || tr.dim(0) != 1) throw ContractViolation("broadcast_row input must be [1,m]");
    const std::size_t m = tr.dim(1);
    TapeNode n{OpKind::BroadcastRow, {row.id}, Tensor({nrows, m})};
    for (std::size_t r = 0; r < nrows; ++r)
        for (std::size_t c = 0; c < m; ++c) n.value[r * m + c] = tr[c];
    return emit(tape, std::move(n));
}

Value reshape(Value x, std::vector<std::size_t> shape) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    if (Tensor::num_elements(shape) != tx.size()) {
        throw ContractViolation("reshape to incompatible element count from " + tx.shape_str());
    }
    TapeNode n{OpKind::Reshape, {x.id}, Tensor(std::move(shape), tx.values())};
    return emit(tape, std::move(n));
}

Value clamp_nonneg_eps(Value x) {
    Tape& tape = *x.tape;
    const Tensor& tx = tape.value(x);
    TapeNode n{OpKind::ClampNonnegEps, {x.id}, Tensor(tx.shape())};
    for (std::size_t i = 0; i < tx.size(); ++i) {
        const double v = tx[i];
        n.value[i] = (v < 0.0 && v > -kKlClampEps) ? 0.0 : v;
    }
    return emit(tape, std::move(n));
}

void Tape::backward(Value root) {
    if (root.tape != this) throw ContractViolation("root recorded on a different tape");
    const Tensor& rv = nodes_[root.id].value;
    if (rv.size() != 1 || rv.rank() != 0) {
        throw ContractViolation("backward root must be a scalar, got shape " + rv.shape_str());
    }
    grads_.assign(nodes_.size(), Tensor());
    grad_set_.assign(nodes_.size(), 0);

    auto touch = [&](std::size_t id) -> Tensor& {
        if (!grad_set_[id]) {
            grads_[id] = Tensor(nodes_[id].value.shape());
            grad_set_[id] = 1;
        }
        return grads_[id];
    };

    touch(root.id)[0] = 1.0;

    for (std::size_t idx = root.id + 1; idx-- > 0;) {
        const TapeNode& n = nodes_[idx];
        if (!grad_set_[idx] || !n.requires_grad || n.kind == OpKind::Leaf) continue;
        const Tensor& g = grads_[idx];  // inputs have smaller ids, so no slot aliases g
        auto wants = [&](std::size_t slot) { return nodes_[n.inputs[slot]].requires_grad; };

        switch (n.kind) {
            case OpKind::Add: {
                for (int s = 0; s < 2; ++s) {
                    if (!wants(s)) continue;
                    Tensor& d = touch(n.inputs[s]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                }
                break;
            }
            case OpKind::AddRow: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                }
                if (wants(1)) {
                    Tensor& d = touch(n.inputs[1]);
                    const std::size_t m = n.value.dim(1);
                    for (std::size_t r = 0; r < n.value.dim(0); ++r)
                        for (std::size_t c = 0; c < m; ++c) d[c] += g[r * m + c];
                }
                break;
            }
            case OpKind::Sub: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                }
                if (wants(1)) {
                    Tensor& d = touch(n.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
                }
                break;
            }
            case OpKind::Mul: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * b[i];
                }
                if (wants(1)) {
                    Tensor& d = touch(n.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * a[i];
                }
                break;
            }
            case OpKind::MulRow: {
                const Tensor& x = nodes_[n.inputs[0]].value;
                const Tensor& row = nodes_[n.inputs[1]].value;
                const std::size_t m = n.value.dim(1);
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t r = 0; r < n.value.dim(0); ++r)
                        for (std::size_t c = 0; c < m; ++c) d[r * m + c] += g[r * m + c] * row[c];
                }
                if (wants(1)) {
                    Tensor& d = touch(n.inputs[1]);
                    for (std::size_t r = 0; r < n.value.dim(0); ++r)
                        for (std::size_t c = 0; c < m; ++c) d[c] += g[r * m + c] * x[r * m + c];
                }
                break;
            }
            case OpKind::Div: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] / b[i];
                }
                if (wants(1)) {
                    Tensor& d = touch(n.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i] * a[i] / (b[i] * b[i]);
                }
                break;
            }
            case OpKind::Scale: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.scalar_a;
                }
                break;
            }
            case OpKind::AddConst:
            case OpKind::Reshape:
            case OpKind::ClampNonnegEps: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                }
                break;
            }
            case OpKind::Matmul: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                if (wants(0)) gemm_nt(g.data(), b.data(), touch(n.inputs[0]).data(), a.dim(0), b.dim(1), a.dim(1));
                if (wants(1)) gemm_tn(a.data(), g.data(), touch(n.inputs[1]).data(), a.dim(1), a.dim(0), b.dim(1));
                break;
            }
            case OpKind::MatmulNT: {
                // c = a * b^T, a [n,k], b [m,k], g [n,m]
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                if (wants(0)) gemm_nn(g.data(), b.data(), touch(n.inputs[0]).data(), a.dim(0), b.dim(0), a.dim(1));
                if (wants(1)) gemm_tn(g.data(), a.data(), touch(n.inputs[1]).data(), b.dim(0), a.dim(0), a.dim(1));
                break;
            }
            case OpKind::Conv3x3: {
                const Tensor& in = nodes_[n.inputs[0]].value;
                const Tensor& k = nodes_[n.inputs[1]].value;
                const std::size_t batch = in.dim(0), cin = in.dim(2), cout = k.dim(0);
                std::vector<double> m;
                patch_im2col(in, batch, cin, m);
                if (wants(1)) {
                    std::vector<double> dkm(9 * cin * cout, 0.0);
                    gemm_tn(m.data(), g.data(), dkm.data(), 9 * cin, batch * 9, cout);
                    Tensor& d = touch(n.inputs[1]);
                    for (std::size_t co = 0; co < cout; ++co)
                        for (std::size_t ci = 0; ci < cin; ++ci)
                            for (std::size_t tap = 0; tap < 9; ++tap)
                                d[(co * cin + ci) * 9 + tap] += dkm[(tap * cin + ci) * cout + co];
                }
                if (wants(0)) {
                    std::vector<double> km, dm(batch * 9 * 9 * cin, 0.0);
                    kernel_to_mat(k, cout, cin, km);
                    gemm_nt(g.data(), km.data(), dm.data(), batch * 9, cout, 9 * cin);
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (int r = 0; r < 3; ++r)
                            for (int c = 0; c < 3; ++c) {
                                const double* mrow = dm.data() + (b * 9 + static_cast<std::size_t>(r * 3 + c)) * 9 * cin;
                                for (int dr = 0; dr < 3; ++dr) {
                                    const int rr = r + dr - 1;
                                    if (rr < 0 || rr > 2) continue;
                                    for (int dc = 0; dc < 3; ++dc) {
                                        const int cc = c + dc - 1;
                                        if (cc < 0 || cc > 2) continue;
                                        double* cell = d.data() + (b * 9 + static_cast<std::size_t>(rr * 3 + cc)) * cin;
                                        const double* src = mrow + static_cast<std::size_t>(dr * 3 + dc) * cin;
                                        for (std::size_t ci = 0; ci < cin; ++ci) cell[ci] += src[ci];
                                    }
                                }
                            }
                }
                break;
            }
            case OpKind::Relu: {
                if (wants(0)) {
                    const Tensor& x = nodes_[n.inputs[0]].value;
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += x[i] > 0.0 ? g[i] : 0.0;
                }
                break;
            }
            case OpKind::Softplus: {
                if (wants(0)) {
                    const Tensor& x = nodes_[n.inputs[0]].value;
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * sigmoid(x[i]);
                }
                break;
            }
            case OpKind::Exp: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.value[i];
                }
                break;
            }
            case OpKind::Log: {
                if (wants(0)) {
                    const Tensor& x = nodes_[n.inputs[0]].value;
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] / x[i];
                }
                break;
            }
            case OpKind::Gelu: {
                if (wants(0)) {
                    const Tensor& x = nodes_[n.inputs[0]].value;
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * gelu_grad(x[i]);
                }
                break;
            }
            case OpKind::SoftmaxRows: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    const std::size_t m = n.value.dim(1);
                    for (std::size_t r = 0; r < n.value.dim(0); ++r) {
                        const double* y = n.value.data() + r * m;
                        const double* gy = g.data() + r * m;
                        double dot = 0.0;
                        for (std::size_t c = 0; c < m; ++c) dot += gy[c] * y[c];
                        double* dr = d.data() + r * m;
                        for (std::size_t c = 0; c < m; ++c) dr[c] += y[c] * (gy[c] - dot);
                    }
                }
                break;
            }
            case OpKind::LayerNormRows: {
                if (wants(0)) {
                    const Tensor& x = nodes_[n.inputs[0]].value;
                    Tensor& d = touch(n.inputs[0]);
                    const std::size_t m = n.value.dim(1);
                    for (std::size_t r = 0; r < n.value.dim(0); ++r) {
                        const double* xr = x.data() + r * m;
                        const double* y = n.value.data() + r * m;
                        const double* gy = g.data() + r * m;
                        double mean = 0.0;
                        for (std::size_t c = 0; c < m; ++c) mean += xr[c];
                        mean /= static_cast<double>(m);
                        double var = 0.0;
                        for (std::size_t c = 0; c < m; ++c) var += (xr[c] - mean) * (xr[c] - mean);
                        var /= static_cast<double>(m);
                        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
                        double gmean = 0.0, gydot = 0.0;
                        for (std::size_t c = 0; c < m; ++c) {
                            gmean += gy[c];
                            gydot += gy[c] * y[c];
                        }
                        gmean /= static_cast<double>(m);
                        gydot /= static_cast<double>(m);
                        double* dr = d.data() + r * m;
                        for (std::size_t c = 0; c < m; ++c) dr[c] += inv * (gy[c] - gmean - y[c] * gydot);
                    }
                }
                break;
            }
            case OpKind::MeanRows: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    const std::size_t rows = nodes_[n.inputs[0]].value.dim(0);
                    const std::size_t m = n.value.dim(1);
                    const double invn = 1.0 / static_cast<double>(rows);
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < m; ++c) d[r * m + c] += g[c] * invn;
                }
                break;
            }
            case OpKind::MeanCells: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    const std::size_t batch = n.value.dim(0), ch = n.value.dim(1);
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t cell = 0; cell < 9; ++cell)
                            for (std::size_t c = 0; c < ch; ++c) d[(b * 9 + cell) * ch + c] += g[b * ch + c] / 9.0;
                }
                break;
            }
            case OpKind::SumAll: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[0];
                }
                break;
            }
            case OpKind::MeanAll: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    const double gv = g[0] / static_cast<double>(d.size());
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv;
                }
                break;
            }
            case OpKind::ConcatLast: {
                const std::size_t total = n.value.shape().back();
                const std::size_t rows = n.value.rank() == 2 ? n.value.dim(0) : 1;
                std::size_t offset = 0;
                for (std::size_t s = 0; s < n.inputs.size(); ++s) {
                    const std::size_t w = nodes_[n.inputs[s]].value.shape().back();
                    if (wants(s)) {
                        Tensor& d = touch(n.inputs[s]);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < w; ++c) d[r * w + c] += g[r * total + offset + c];
                    }
                    offset += w;
                }
                break;
            }
            case OpKind::SliceLast: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    const std::size_t w = nodes_[n.inputs[0]].value.shape().back();
                    const std::size_t rows = n.value.rank() == 2 ? n.value.dim(0) : 1;
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < n.aux1; ++c) d[r * w + n.aux0 + c] += g[r * n.aux1 + c];
                }
                break;
            }
            case OpKind::BroadcastRow: {
                if (wants(0)) {
                    Tensor& d = touch(n.inputs[0]);
                    const std::size_t m = n.value.dim(1);
                    for (std::size_t r = 0; r < n.value.dim(0); ++r)
                        for (std::size_t c = 0; c < m; ++c) d[c] += g[r * m + c];
                }
                break;
            }
            case OpKind::Leaf:
                break;
        }
    }
}

}  // namespace stanp::ad
