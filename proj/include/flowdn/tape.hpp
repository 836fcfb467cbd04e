// Tape-based reverse-mode automatic differentiation over TensorValue.
//
// Ops execute eagerly and are recorded in topological order; backward() walks
// the tape in exact reverse order accumulating vector-Jacobian products.
// The primitive set covers dense MLPs and the patch mixer: matmul (plain,
// blocked-left), add variants, elementwise ops, activations, layer norm,
// reshape/concat, reductions and patchify/unpatchify.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flowdn/tensor.hpp"

namespace flowdn::nn {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

namespace kernels {

// C += A * B,  A:[M,K] B:[K,N] C:[M,N]
inline void mm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
                   int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA += dY * B^T,  dY:[M,N] B:[K,N] dA:[M,K]
inline void mm_acc_nt(const double* __restrict dy, const double* __restrict b, double* __restrict da,
                      int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* dyrow = dy + static_cast<size_t>(i) * n;
        double* darow = da + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double* brow = b + static_cast<size_t>(kk) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += dyrow[j] * brow[j];
            darow[kk] += acc;
        }
    }
}

// dB += A^T * dY,  A:[M,K] dY:[M,N] dB:[K,N]
inline void mm_acc_tn(const double* __restrict a, const double* __restrict dy, double* __restrict db,
                      int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        const double* dyrow = dy + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            double* dbrow = db + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) dbrow[j] += av * dyrow[j];
        }
    }
}

}  // namespace kernels

class Tape {
    enum class Op : std::uint8_t {
        Leaf, MatMul, BlockMatMul, Add, AddRow, AddBlock, Sub, Mul, Affine, ScaleRows,
        Tanh, Gelu, Relu, LayerNorm, Reshape, ConcatCols, SumAll, MeanAll,
        Patchify, Unpatchify
    };

    struct Node {
        Op op = Op::Leaf;
        bool needs_grad = false;
        int a = -1, b = -1, c = -1;
        double s0 = 0.0;
        int i0 = 0, i1 = 0;
        TensorValue val;
        TensorValue grad;
        std::vector<double> aux;
    };

public:
    // ---- leaves -----------------------------------------------------------

    Var input(TensorValue v) {
        if (!v.all_finite()) throw ConfigError("tape input contains non-finite values");
        return push_leaf(std::move(v), /*needs_grad=*/true);
    }

    // No gradient is tracked through constants.
    Var constant(TensorValue v) { return push_leaf(std::move(v), /*needs_grad=*/false); }

    // ---- primitives -------------------------------------------------------

    Var matmul(Var a, Var b) {
        const TensorValue& ta = val(a);
        const TensorValue& tb = val(b);
        if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[0])
            throw ShapeError("matmul: incompatible shapes " + ta.shape_str() + " x " + tb.shape_str());
        const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
        TensorValue out = TensorValue::zeros({m, n});
        kernels::mm_acc(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
        return push(Op::MatMul, std::move(out), a, b);
    }

    // Per-block left multiply: x is [B*R, C] (B blocks of R rows), w is [R2, R];
    // each block becomes w * x_b. Used for token mixing in the patch mixer.
    Var block_matmul(Var w, Var x, int block_rows) {
        const TensorValue& tw = val(w);
        const TensorValue& tx = val(x);
        if (tw.ndim() != 2 || tx.ndim() != 2 || tw.shape[1] != block_rows || tx.shape[0] % block_rows != 0)
            throw ShapeError("block_matmul: incompatible shapes " + tw.shape_str() + " x " + tx.shape_str());
        const int r2 = tw.shape[0], r = block_rows, cdim = tx.shape[1];
        const int nblocks = tx.shape[0] / r;
        TensorValue out = TensorValue::zeros({nblocks * r2, cdim});
        for (int blk = 0; blk < nblocks; ++blk)
            kernels::mm_acc(tw.data.data(), tx.data.data() + static_cast<size_t>(blk) * r * cdim,
                            out.data.data() + static_cast<size_t>(blk) * r2 * cdim, r2, r, cdim);
        Var v = push(Op::BlockMatMul, std::move(out), w, x);
        nodes_[v.id].i0 = block_rows;
        return v;
    }

    Var add(Var a, Var b) {
        const TensorValue& ta = val(a);
        const TensorValue& tb = val(b);
        require_same_shape(ta, tb, "add");
        TensorValue out = ta;
        for (long i = 0; i < out.numel(); ++i) out.data[i] += tb.data[i];
        return push(Op::Add, std::move(out), a, b);
    }

    // x:[M,N] + bias broadcast over rows; bias numel must equal N.
    Var add_row_broadcast(Var x, Var bias) {
        const TensorValue& tx = val(x);
        const TensorValue& tb = val(bias);
        const int n = tx.cols();
        if (tb.numel() != n)
            throw ShapeError("add_row_broadcast: bias " + tb.shape_str() + " vs cols " + std::to_string(n));
        TensorValue out = tx;
        const int m = tx.rows();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.data[static_cast<size_t>(i) * n + j] += tb.data[j];
        return push(Op::AddRow, std::move(out), x, bias);
    }

    // x:[B*R, C] + p tiled over blocks; p is [R, C] or [R, 1] (broadcast over cols).
    Var add_block_broadcast(Var x, Var p, int block_rows) {
        const TensorValue& tx = val(x);
        const TensorValue& tp = val(p);
        const int r = block_rows, cdim = tx.cols();
        if (tx.rows() % r != 0 || tp.rows() != r || (tp.cols() != cdim && tp.cols() != 1))
            throw ShapeError("add_block_broadcast: " + tx.shape_str() + " vs " + tp.shape_str());
        const bool col_bcast = tp.cols() == 1;
        TensorValue out = tx;
        const int nblocks = tx.rows() / r;
        for (int blk = 0; blk < nblocks; ++blk)
            for (int i = 0; i < r; ++i) {
                double* row = out.data.data() + (static_cast<size_t>(blk) * r + i) * cdim;
                if (col_bcast) {
                    const double pv = tp.data[i];
                    for (int j = 0; j < cdim; ++j) row[j] += pv;
                } else {
                    const double* prow = tp.data.data() + static_cast<size_t>(i) * cdim;
                    for (int j = 0; j < cdim; ++j) row[j] += prow[j];
                }
            }
        Var v = push(Op::AddBlock, std::move(out), x, p);
        nodes_[v.id].i0 = block_rows;
        return v;
    }

    Var sub(Var a, Var b) {
        const TensorValue& ta = val(a);
        const TensorValue& tb = val(b);
        require_same_shape(ta, tb, "sub");
        TensorValue out = ta;
        for (long i = 0; i < out.numel(); ++i) out.data[i] -= tb.data[i];
        return push(Op::Sub, std::move(out), a, b);
    }

    Var mul(Var a, Var b) {
        const TensorValue& ta = val(a);
        const TensorValue& tb = val(b);
        require_same_shape(ta, tb, "mul");
        TensorValue out = ta;
        for (long i = 0; i < out.numel(); ++i) out.data[i] *= tb.data[i];
        return push(Op::Mul, std::move(out), a, b);
    }

    // y = scale*x + shift
    Var affine(Var x, double scale, double shift) {
        TensorValue out = val(x);
        for (double& v : out.data) v = scale * v + shift;
        Var v = push(Op::Affine, std::move(out), x);
        nodes_[v.id].s0 = scale;
        return v;
    }

    // Row-wise scaling by a fixed (non-differentiated) weight vector.
    Var scale_rows(Var x, std::vector<double> w) {
        const TensorValue& tx = val(x);
        if (static_cast<int>(w.size()) != tx.rows())
            throw ShapeError("scale_rows: weight length " + std::to_string(w.size()) + " vs rows " +
                             std::to_string(tx.rows()));
        TensorValue out = tx;
        const int n = tx.cols();
        for (int i = 0; i < tx.rows(); ++i) {
            double* row = out.data.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) row[j] *= w[i];
        }
        Var v = push(Op::ScaleRows, std::move(out), x);
        nodes_[v.id].aux = std::move(w);
        return v;
    }

    Var tanh(Var x) {
        TensorValue out = val(x);
        for (double& v : out.data) v = std::tanh(v);
        return push(Op::Tanh, std::move(out), x);
    }

    Var gelu(Var x) {
        TensorValue out = val(x);
        for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
        return push(Op::Gelu, std::move(out), x);
    }

    Var relu(Var x) {
        TensorValue out = val(x);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push(Op::Relu, std::move(out), x);
    }

    // Per-row layer norm over the last dim with learnable gain and bias (numel N each).
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
        const TensorValue& tx = val(x);
        const int m = tx.rows(), n = tx.cols();
        if (val(gain).numel() != n || val(bias).numel() != n)
            throw ShapeError("layer_norm: gain/bias must have numel equal to cols");
        TensorValue out = TensorValue::zeros(tx.shape);
        std::vector<double> stats(static_cast<size_t>(2 * m));
        const double* g = val(gain).data.data();
        const double* b = val(bias).data.data();
        for (int i = 0; i < m; ++i) {
            const double* row = tx.data.data() + static_cast<size_t>(i) * n;
            double mu = 0.0;
            for (int j = 0; j < n; ++j) mu += row[j];
            mu /= n;
            double var = 0.0;
            for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= n;
            const double inv = 1.0 / std::sqrt(var + eps);
            double* orow = out.data.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] = g[j] * (row[j] - mu) * inv + b[j];
            stats[i] = mu;
            stats[m + i] = inv;
        }
        Var v = push(Op::LayerNorm, std::move(out), x, gain, bias);
        nodes_[v.id].aux = std::move(stats);
        return v;
    }

    Var reshape(Var x, std::vector<int> shape) {
        const TensorValue& tx = val(x);
        if (TensorValue::numel_of(shape) != tx.numel())
            throw ShapeError("reshape: numel mismatch for " + tx.shape_str());
        TensorValue out(std::move(shape), tx.data);
        return push(Op::Reshape, std::move(out), x);
    }

    Var concat_cols(Var a, Var b) {
        const TensorValue& ta = val(a);
        const TensorValue& tb = val(b);
        if (ta.rows() != tb.rows())
            throw ShapeError("concat_cols: row mismatch " + ta.shape_str() + " vs " + tb.shape_str());
        const int m = ta.rows(), na = ta.cols(), nb = tb.cols();
        TensorValue out = TensorValue::zeros({m, na + nb});
        for (int i = 0; i < m; ++i) {
            double* orow = out.data.data() + static_cast<size_t>(i) * (na + nb);
            const double* ar = ta.data.data() + static_cast<size_t>(i) * na;
            const double* br = tb.data.data() + static_cast<size_t>(i) * nb;
            for (int j = 0; j < na; ++j) orow[j] = ar[j];
            for (int j = 0; j < nb; ++j) orow[na + j] = br[j];
        }
        return push(Op::ConcatCols, std::move(out), a, b);
    }

    Var sum_all(Var x) {
        double s = 0.0;
        for (double v : val(x).data) s += v;
        return push(Op::SumAll, TensorValue::scalar(s), x);
    }

    Var mean_all(Var x) {
        double s = 0.0;
        for (double v : val(x).data) s += v;
        return push(Op::MeanAll, TensorValue::scalar(s / static_cast<double>(val(x).numel())), x);
    }

    // [B, n*n] -> [B*T, p*p] with T=(n/p)^2, tokens in row-major tile order.
    Var patchify(Var x, int img_n, int p) {
        const TensorValue& tx = val(x);
        if (p <= 0 || img_n % p != 0) throw ShapeError("patchify: patch size must divide image size");
        if (tx.cols() != img_n * img_n) throw ShapeError("patchify: input cols must be n*n");
        const int bsz = tx.rows(), g = img_n / p, t = g * g, pd = p * p;
        TensorValue out = TensorValue::zeros({bsz * t, pd});
        for (int im = 0; im < bsz; ++im) {
            const double* src = tx.data.data() + static_cast<size_t>(im) * img_n * img_n;
            for (int bi = 0; bi < g; ++bi)
                for (int bj = 0; bj < g; ++bj) {
                    double* dst = out.data.data() + (static_cast<size_t>(im) * t + bi * g + bj) * pd;
                    for (int r = 0; r < p; ++r)
                        for (int cidx = 0; cidx < p; ++cidx)
                            dst[r * p + cidx] = src[(bi * p + r) * img_n + bj * p + cidx];
                }
        }
        Var v = push(Op::Patchify, std::move(out), x);
        nodes_[v.id].i0 = img_n;
        nodes_[v.id].i1 = p;
        return v;
    }

    Var unpatchify(Var x, int img_n, int p) {
        const TensorValue& tx = val(x);
        if (p <= 0 || img_n % p != 0) throw ShapeError("unpatchify: patch size must divide image size");
        const int g = img_n / p, t = g * g, pd = p * p;
        if (tx.cols() != pd || tx.rows() % t != 0) throw ShapeError("unpatchify: bad token layout");
        const int bsz = tx.rows() / t;
        TensorValue out = TensorValue::zeros({bsz, img_n * img_n});
        for (int im = 0; im < bsz; ++im) {
            double* dst = out.data.data() + static_cast<size_t>(im) * img_n * img_n;
            for (int bi = 0; bi < g; ++bi)
                for (int bj = 0; bj < g; ++bj) {
                    const double* src = tx.data.data() + (static_cast<size_t>(im) * t + bi * g + bj) * pd;
                    for (int r = 0; r < p; ++r)
                        for (int cidx = 0; cidx < p; ++cidx)
                            dst[(bi * p + r) * img_n + bj * p + cidx] = src[r * p + cidx];
                }
        }
        Var v = push(Op::Unpatchify, std::move(out), x);
        nodes_[v.id].i0 = img_n;
        nodes_[v.id].i1 = p;
        return v;
    }

    // ---- access / backward ------------------------------------------------

    const TensorValue& val(Var v) const {
        check(v);
        return nodes_[v.id].val;
    }

    void backward(Var out) { backward(out, TensorValue::scalar(1.0)); }

    void backward(Var out, const TensorValue& seed) {
        check(out);
        if (!nodes_[out.id].val.same_shape(seed))
            throw ShapeError("backward: seed shape " + seed.shape_str() + " vs output " +
                             nodes_[out.id].val.shape_str());
        for (int i = 0; i <= out.id; ++i)
            if (nodes_[i].needs_grad) nodes_[i].grad = TensorValue::zeros(nodes_[i].val.shape);
        if (!nodes_[out.id].needs_grad)
            throw UsageError("backward: output does not depend on any differentiable input");
        nodes_[out.id].grad = seed;
        for (int i = out.id; i >= 0; --i)
            if (nodes_[i].needs_grad) propagate(i);
        ran_backward_ = true;
    }

    const TensorValue& grad(Var v) const {
        check(v);
        if (!ran_backward_) throw UsageError("grad: backward has not been run on this tape");
        if (!nodes_[v.id].needs_grad) throw UsageError("grad: node does not track gradients");
        return nodes_[v.id].grad;
    }

    void reset() {
        nodes_.clear();
        ran_backward_ = false;
    }

    size_t size() const { return nodes_.size(); }

private:
    Var push_leaf(TensorValue v, bool needs_grad) {
        Node n;
        n.op = Op::Leaf;
        n.needs_grad = needs_grad;
        n.val = std::move(v);
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    Var push(Op op, TensorValue v, Var a, Var b = {}, Var c = {}) {
        Node n;
        n.op = op;
        n.a = a.id;
        n.b = b.id;
        n.c = c.id;
        n.needs_grad = grad_needed(a) || grad_needed(b) || grad_needed(c);
        n.val = std::move(v);
        nodes_.push_back(std::move(n));
        return {static_cast<int>(nodes_.size()) - 1};
    }

    bool grad_needed(Var v) const { return v.valid() && nodes_[v.id].needs_grad; }

    void check(Var v) const {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw UsageError("invalid tape variable (forward not recorded?)");
    }

    void acc(int id, const TensorValue& g) {
        if (id < 0 || !nodes_[id].needs_grad) return;
        TensorValue& dst = nodes_[id].grad;
        for (long i = 0; i < dst.numel(); ++i) dst.data[i] += g.data[i];
    }

    void propagate(int i) {
        Node& n = nodes_[i];
        const TensorValue& dy = n.grad;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::MatMul: {
                Node& na = nodes_[n.a];
                Node& nb = nodes_[n.b];
                const int m = na.val.shape[0], k = na.val.shape[1], ncol = nb.val.shape[1];
                if (na.needs_grad)
                    kernels::mm_acc_nt(dy.data.data(), nb.val.data.data(), na.grad.data.data(), m, ncol, k);
                if (nb.needs_grad)
                    kernels::mm_acc_tn(na.val.data.data(), dy.data.data(), nb.grad.data.data(), m, k, ncol);
                break;
            }
            case Op::BlockMatMul: {
                Node& nw = nodes_[n.a];
                Node& nx = nodes_[n.b];
                const int r = n.i0, r2 = nw.val.shape[0], cdim = nx.val.shape[1];
                const int nblocks = nx.val.shape[0] / r;
                for (int blk = 0; blk < nblocks; ++blk) {
                    const double* dyb = dy.data.data() + static_cast<size_t>(blk) * r2 * cdim;
                    const double* xb = nx.val.data.data() + static_cast<size_t>(blk) * r * cdim;
                    if (nw.needs_grad)  // dW += dY_b * X_b^T
                        kernels::mm_acc_nt(dyb, xb, nw.grad.data.data(), r2, cdim, r);
                    if (nx.needs_grad)  // dX_b += W^T * dY_b
                        kernels::mm_acc_tn(nw.val.data.data(), dyb,
                                           nx.grad.data.data() + static_cast<size_t>(blk) * r * cdim, r2, r, cdim);
                }
                break;
            }
            case Op::Add:
                acc(n.a, dy);
                acc(n.b, dy);
                break;
            case Op::AddRow: {
                acc(n.a, dy);
                Node& nb = nodes_[n.b];
                if (nb.needs_grad) {
                    const int m = dy.rows(), ncol = dy.cols();
                    for (int r = 0; r < m; ++r)
                        for (int j = 0; j < ncol; ++j)
                            nb.grad.data[j] += dy.data[static_cast<size_t>(r) * ncol + j];
                }
                break;
            }
            case Op::AddBlock: {
                acc(n.a, dy);
                Node& np = nodes_[n.b];
                if (np.needs_grad) {
                    const int r = n.i0, cdim = dy.cols(), nblocks = dy.rows() / r;
                    const bool col_bcast = np.val.cols() == 1;
                    for (int blk = 0; blk < nblocks; ++blk)
                        for (int rr = 0; rr < r; ++rr) {
                            const double* row = dy.data.data() + (static_cast<size_t>(blk) * r + rr) * cdim;
                            if (col_bcast) {
                                double s = 0.0;
                                for (int j = 0; j < cdim; ++j) s += row[j];
                                np.grad.data[rr] += s;
                            } else {
                                double* prow = np.grad.data.data() + static_cast<size_t>(rr) * cdim;
                                for (int j = 0; j < cdim; ++j) prow[j] += row[j];
                            }
                        }
                }
                break;
            }
            case Op::Sub: {
                acc(n.a, dy);
                Node& nb = nodes_[n.b];
                if (nb.needs_grad)
                    for (long j = 0; j < dy.numel(); ++j) nb.grad.data[j] -= dy.data[j];
                break;
            }
            case Op::Mul: {
                Node& na = nodes_[n.a];
                Node& nb = nodes_[n.b];
                if (na.needs_grad)
                    for (long j = 0; j < dy.numel(); ++j) na.grad.data[j] += dy.data[j] * nb.val.data[j];
                if (nb.needs_grad)
                    for (long j = 0; j < dy.numel(); ++j) nb.grad.data[j] += dy.data[j] * na.val.data[j];
                break;
            }
            case Op::Affine: {
                Node& na = nodes_[n.a];
                if (na.needs_grad)
                    for (long j = 0; j < dy.numel(); ++j) na.grad.data[j] += n.s0 * dy.data[j];
                break;
            }
            case Op::ScaleRows: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    const int m = dy.rows(), ncol = dy.cols();
                    for (int r = 0; r < m; ++r) {
                        const double w = n.aux[r];
                        for (int j = 0; j < ncol; ++j)
                            na.grad.data[static_cast<size_t>(r) * ncol + j] +=
                                w * dy.data[static_cast<size_t>(r) * ncol + j];
                    }
                }
                break;
            }
            case Op::Tanh: {
                Node& na = nodes_[n.a];
                if (na.needs_grad)
                    for (long j = 0; j < dy.numel(); ++j) {
                        const double y = n.val.data[j];
                        na.grad.data[j] += dy.data[j] * (1.0 - y * y);
                    }
                break;
            }
            case Op::Gelu: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    constexpr double inv_sqrt2pi = 0.3989422804014326779399461;
                    for (long j = 0; j < dy.numel(); ++j) {
                        const double x = na.val.data[j];
                        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                        na.grad.data[j] += dy.data[j] * (cdf + x * pdf);
                    }
                }
                break;
            }
            case Op::Relu: {
                Node& na = nodes_[n.a];
                if (na.needs_grad)
                    for (long j = 0; j < dy.numel(); ++j)
                        if (na.val.data[j] > 0.0) na.grad.data[j] += dy.data[j];
                break;
            }
            case Op::LayerNorm: {
                Node& nx = nodes_[n.a];
                Node& ng = nodes_[n.b];
                Node& nbi = nodes_[n.c];
                const int m = nx.val.rows(), ncol = nx.val.cols();
                const double* g = ng.val.data.data();
                for (int r = 0; r < m; ++r) {
                    const double mu = n.aux[r], inv = n.aux[m + r];
                    const double* xrow = nx.val.data.data() + static_cast<size_t>(r) * ncol;
                    const double* dyrow = dy.data.data() + static_cast<size_t>(r) * ncol;
                    double sum_h = 0.0, sum_hx = 0.0;
                    for (int j = 0; j < ncol; ++j) {
                        const double xh = (xrow[j] - mu) * inv;
                        const double h = dyrow[j] * g[j];
                        sum_h += h;
                        sum_hx += h * xh;
                        if (ng.needs_grad) ng.grad.data[j] += dyrow[j] * xh;
                        if (nbi.needs_grad) nbi.grad.data[j] += dyrow[j];
                    }
                    if (nx.needs_grad) {
                        double* dxrow = nx.grad.data.data() + static_cast<size_t>(r) * ncol;
                        const double mh = sum_h / ncol, mhx = sum_hx / ncol;
                        for (int j = 0; j < ncol; ++j) {
                            const double xh = (xrow[j] - mu) * inv;
                            dxrow[j] += inv * (dyrow[j] * g[j] - mh - xh * mhx);
                        }
                    }
                }
                break;
            }
            case Op::Reshape: {
                Node& na = nodes_[n.a];
                if (na.needs_grad)
                    for (long j = 0; j < dy.numel(); ++j) na.grad.data[j] += dy.data[j];
                break;
            }
            case Op::ConcatCols: {
                Node& na = nodes_[n.a];
                Node& nb = nodes_[n.b];
                const int m = dy.rows(), ca = na.val.cols(), cb = nb.val.cols();
                for (int r = 0; r < m; ++r) {
                    const double* row = dy.data.data() + static_cast<size_t>(r) * (ca + cb);
                    if (na.needs_grad)
                        for (int j = 0; j < ca; ++j) na.grad.data[static_cast<size_t>(r) * ca + j] += row[j];
                    if (nb.needs_grad)
                        for (int j = 0; j < cb; ++j) nb.grad.data[static_cast<size_t>(r) * cb + j] += row[ca + j];
                }
                break;
            }
            case Op::SumAll: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    const double s = dy.data[0];
                    for (long j = 0; j < na.grad.numel(); ++j) na.grad.data[j] += s;
                }
                break;
            }
            case Op::MeanAll: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    const double s = dy.data[0] / static_cast<double>(na.val.numel());
                    for (long j = 0; j < na.grad.numel(); ++j) na.grad.data[j] += s;
                }
                break;
            }
            case Op::Patchify: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    const int img_n = n.i0, p = n.i1, g = img_n / p, t = g * g, pd = p * p;
                    const int bsz = na.val.rows();
                    for (int im = 0; im < bsz; ++im) {
                        double* dst = na.grad.data.data() + static_cast<size_t>(im) * img_n * img_n;
                        for (int bi = 0; bi < g; ++bi)
                            for (int bj = 0; bj < g; ++bj) {
                                const double* src =
                                    dy.data.data() + (static_cast<size_t>(im) * t + bi * g + bj) * pd;
                                for (int r = 0; r < p; ++r)
                                    for (int cidx = 0; cidx < p; ++cidx)
                                        dst[(bi * p + r) * img_n + bj * p + cidx] += src[r * p + cidx];
                            }
                    }
                }
                break;
            }
            case Op::Unpatchify: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    const int img_n = n.i0, p = n.i1, g = img_n / p, t = g * g, pd = p * p;
                    const int bsz = n.val.rows();
                    for (int im = 0; im < bsz; ++im) {
                        const double* src = dy.data.data() + static_cast<size_t>(im) * img_n * img_n;
                        for (int bi = 0; bi < g; ++bi)
                            for (int bj = 0; bj < g; ++bj) {
                                double* dst =
                                    na.grad.data.data() + (static_cast<size_t>(im) * t + bi * g + bj) * pd;
                                for (int r = 0; r < p; ++r)
                                    for (int cidx = 0; cidx < p; ++cidx)
                                        dst[r * p + cidx] += src[(bi * p + r) * img_n + bj * p + cidx];
                            }
                    }
                }
                break;
            }
        }
    }

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

// Records a computation on the tape and returns its value. `fn` receives the
// tape and the input Vars in order.
template <typename Fn>
TensorValue forward(Tape& tape, Fn&& fn, std::span<const TensorValue> inputs) {
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const TensorValue& t : inputs) vars.push_back(tape.input(t));
    Var out = fn(tape, vars);
    return tape.val(out);
}

}  // namespace flowdn::nn
