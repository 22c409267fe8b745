// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tape records primitive applications in topological order; backprop()
// replays the record in reverse and accumulates gradients into a GradMap.
// Subgradient conventions are fixed so results are deterministic:
//   relu'(0) = 0, and every max-style reduction routes its gradient to the
//   lowest participating index on ties.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wsg/tensor.hpp"

namespace wsg {

enum class Prim {
    Input,
    MatMul,
    Transpose,
    BiasAdd,
    Relu,
    L2NormRows,
    MaxPoolRows,
    GatherRows,
    ConcatRows,
    Exp,
    Log,
    Scale,
    AddConst,
    Add,
    Sub,
    Mul,
    Sum,
    RowMax,
    RowLogSumExp,
    LogSumExp,
    ExpandCols,
    MulConst,
    StackScalars,
};

inline const char* prim_name(Prim p) {
    switch (p) {
        case Prim::Input: return "input";
        case Prim::MatMul: return "matmul";
        case Prim::Transpose: return "transpose";
        case Prim::BiasAdd: return "bias-add";
        case Prim::Relu: return "relu";
        case Prim::L2NormRows: return "row-l2-normalize";
        case Prim::MaxPoolRows: return "row-max-pool";
        case Prim::GatherRows: return "embedding-gather";
        case Prim::ConcatRows: return "concat-rows";
        case Prim::Exp: return "exp";
        case Prim::Log: return "log";
        case Prim::Scale: return "scale";
        case Prim::AddConst: return "add-const";
        case Prim::Add: return "add";
        case Prim::Sub: return "sub";
        case Prim::Mul: return "mul";
        case Prim::Sum: return "sum";
        case Prim::RowMax: return "row-max";
        case Prim::RowLogSumExp: return "row-log-sum-exp";
        case Prim::LogSumExp: return "log-sum-exp";
        case Prim::ExpandCols: return "expand-cols";
        case Prim::MulConst: return "mul-const";
        case Prim::StackScalars: return "stack-scalars";
    }
    return "?";
}

struct NodeId {
    std::size_t idx = static_cast<std::size_t>(-1);
    bool valid() const { return idx != static_cast<std::size_t>(-1); }
};

// Raw matmul kernels, shared by forward and backward passes.
namespace detail {

// C[r x n] += A[r x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c,
                    std::size_t r, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[r x n] += A[r x k] * B[n x k]^T
inline void gemm_nt(const double* a, const double* b, double* c,
                    std::size_t r, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C[k x n] += A[r x k]^T * B[r x n]
inline void gemm_tn(const double* a, const double* b, double* c,
                    std::size_t r, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < r; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

}  // namespace detail

struct TapeNode {
    Prim kind = Prim::Input;
    std::vector<std::size_t> inputs;
    Tensor value;
    // Saved intermediates for the backward pass. Meaning depends on kind:
    // argmax indices, row norms, softmax rows, gather indices, split sizes.
    std::vector<std::size_t> aux_idx;
    std::vector<double> aux_real;
};

class GradMap {
public:
    explicit GradMap(std::size_t n) : grads_(n), present_(n, false) {}

    bool has(NodeId id) const { return present_[id.idx]; }

    const Tensor& at(NodeId id) const {
        if (!present_[id.idx]) throw WsgError("gradmap: no gradient for node");
        return grads_[id.idx];
    }

    Tensor& accumulate(std::size_t idx, const std::vector<std::size_t>& shape) {
        if (!present_[idx]) {
            grads_[idx] = Tensor(shape);
            present_[idx] = true;
        }
        return grads_[idx];
    }

private:
    std::vector<Tensor> grads_;
    std::vector<bool> present_;
};

class Tape {
public:
    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(NodeId id) const { return nodes_[id.idx].value; }

    NodeId input(Tensor t) { return push(Prim::Input, {}, std::move(t)); }

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        require(ta.rank() == 2 && tb.rank() == 2, Prim::MatMul, ta, tb);
        if (ta.cols() != tb.rows()) {
            throw WsgError(std::string("matmul: inner dims disagree ") +
                           ta.shape_str() + " vs " + tb.shape_str());
        }
        Tensor out({ta.rows(), tb.cols()});
        detail::gemm_nn(ta.data.data(), tb.data.data(), out.data.data(),
                        ta.rows(), ta.cols(), tb.cols());
        return push(Prim::MatMul, {a.idx, b.idx}, std::move(out));
    }

    NodeId transpose(NodeId a) {
        const Tensor& ta = value(a);
        require(ta.rank() == 2, Prim::Transpose, ta);
        Tensor out({ta.cols(), ta.rows()});
        for (std::size_t i = 0; i < ta.rows(); ++i)
            for (std::size_t j = 0; j < ta.cols(); ++j)
                out.at(j, i) = ta.at(i, j);
        return push(Prim::Transpose, {a.idx}, std::move(out));
    }

    // Adds a length-c bias vector to every row of an r x c matrix.
    NodeId bias_add(NodeId a, NodeId bias) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(bias);
        require(ta.rank() == 2 && tb.rank() == 1, Prim::BiasAdd, ta, tb);
        if (ta.cols() != tb.numel()) {
            throw WsgError(std::string("bias-add: matrix cols ") +
                           std::to_string(ta.cols()) + " vs bias length " +
                           std::to_string(tb.numel()));
        }
        Tensor out = ta;
        for (std::size_t i = 0; i < ta.rows(); ++i)
            for (std::size_t j = 0; j < ta.cols(); ++j)
                out.at(i, j) += tb.data[j];
        return push(Prim::BiasAdd, {a.idx, bias.idx}, std::move(out));
    }

    NodeId relu(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push(Prim::Relu, {a.idx}, std::move(out));
    }

    // L2-normalizes each row of a matrix (a rank-1 input is one row).
    // A row with norm below 1e-12 is a hard error.
    NodeId l2_normalize_rows(NodeId a) {
        const Tensor& ta = value(a);
        const auto [r, c] = as_rows(ta, Prim::L2NormRows);
        Tensor out = ta;
        std::vector<double> norms(r);
        for (std::size_t i = 0; i < r; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                double v = ta.data[i * c + j];
                sq += v * v;
            }
            double norm = std::sqrt(sq);
            if (norm < 1e-12) {
                throw WsgError("row-l2-normalize: degenerate-norm at row " +
                               std::to_string(i));
            }
            norms[i] = norm;
            for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] /= norm;
        }
        TapeNode& node = push_node(Prim::L2NormRows, {a.idx}, std::move(out));
        node.aux_real = std::move(norms);
        return NodeId{nodes_.size() - 1};
    }

    // Columnwise max over the rows of an r x c matrix -> length-c vector.
    NodeId max_pool_rows(NodeId a) {
        const Tensor& ta = value(a);
        require(ta.rank() == 2, Prim::MaxPoolRows, ta);
        const std::size_t r = ta.rows(), c = ta.cols();
        Tensor out({c});
        std::vector<std::size_t> arg(c, 0);
        for (std::size_t j = 0; j < c; ++j) {
            double best = ta.at(0, j);
            for (std::size_t i = 1; i < r; ++i) {
                if (ta.at(i, j) > best) {
                    best = ta.at(i, j);
                    arg[j] = i;
                }
            }
            out.data[j] = best;
        }
        TapeNode& node = push_node(Prim::MaxPoolRows, {a.idx}, std::move(out));
        node.aux_idx = std::move(arg);
        return NodeId{nodes_.size() - 1};
    }

    NodeId gather_rows(NodeId table, const std::vector<std::size_t>& ids) {
        const Tensor& tt = value(table);
        require(tt.rank() == 2, Prim::GatherRows, tt);
        for (std::size_t id : ids) {
            if (id >= tt.rows()) {
                throw WsgError("embedding-gather: index " + std::to_string(id) +
                               " out of range for table " + tt.shape_str());
            }
        }
        Tensor out({ids.size(), tt.cols()});
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < tt.cols(); ++j)
                out.at(i, j) = tt.at(ids[i], j);
        TapeNode& node = push_node(Prim::GatherRows, {table.idx}, std::move(out));
        node.aux_idx = ids;
        return NodeId{nodes_.size() - 1};
    }

    // Stacks rank-1 vectors (or single-row matrices) of equal width into a matrix.
    NodeId concat_rows(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw WsgError("concat-rows: empty input list");
        std::size_t c = 0, total = 0;
        for (const NodeId& p : parts) {
            const Tensor& tp = value(p);
            auto [pr, pc] = as_rows(tp, Prim::ConcatRows);
            if (c == 0) c = pc;
            if (pc != c) {
                throw WsgError("concat-rows: width mismatch " +
                               std::to_string(pc) + " vs " + std::to_string(c));
            }
            total += pr;
        }
        Tensor out({total, c});
        std::vector<std::size_t> in_idx;
        std::vector<std::size_t> row_counts;
        std::size_t row = 0;
        for (const NodeId& p : parts) {
            const Tensor& tp = value(p);
            auto [pr, pc] = as_rows(tp, Prim::ConcatRows);
            (void)pc;
            std::copy(tp.data.begin(), tp.data.end(), out.data.begin() + row * c);
            row += pr;
            in_idx.push_back(p.idx);
            row_counts.push_back(pr);
        }
        TapeNode& node = push_node(Prim::ConcatRows, std::move(in_idx), std::move(out));
        node.aux_idx = std::move(row_counts);
        return NodeId{nodes_.size() - 1};
    }

    NodeId exp(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::exp(v);
        return push(Prim::Exp, {a.idx}, std::move(out));
    }

    NodeId log(NodeId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::log(v);
        return push(Prim::Log, {a.idx}, std::move(out));
    }

    NodeId scale(NodeId a, double c) {
        Tensor out = value(a);
        for (double& v : out.data) v *= c;
        TapeNode& node = push_node(Prim::Scale, {a.idx}, std::move(out));
        node.aux_real = {c};
        return NodeId{nodes_.size() - 1};
    }

    NodeId add_const(NodeId a, double c) {
        Tensor out = value(a);
        for (double& v : out.data) v += c;
        return push(Prim::AddConst, {a.idx}, std::move(out));
    }

    NodeId add(NodeId a, NodeId b) { return binary(Prim::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Prim::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Prim::Mul, a, b); }

    NodeId sum(NodeId a) {
        const Tensor& ta = value(a);
        double s = 0.0;
        for (double v : ta.data) s += v;
        return push(Prim::Sum, {a.idx}, Tensor::scalar(s));
    }

    // Per-row max of an r x c matrix -> length-r vector; ties -> lowest column.
    NodeId row_max(NodeId a) {
        const Tensor& ta = value(a);
        require(ta.rank() == 2, Prim::RowMax, ta);
        const std::size_t r = ta.rows(), c = ta.cols();
        Tensor out({r});
        std::vector<std::size_t> arg(r, 0);
        for (std::size_t i = 0; i < r; ++i) {
            double best = ta.at(i, 0);
            for (std::size_t j = 1; j < c; ++j) {
                if (ta.at(i, j) > best) {
                    best = ta.at(i, j);
                    arg[i] = j;
                }
            }
            out.data[i] = best;
        }
        TapeNode& node = push_node(Prim::RowMax, {a.idx}, std::move(out));
        node.aux_idx = std::move(arg);
        return NodeId{nodes_.size() - 1};
    }

    // Numerically stable per-row log(sum(exp(row))) -> length-r vector.
    NodeId row_logsumexp(NodeId a) {
        const Tensor& ta = value(a);
        require(ta.rank() == 2, Prim::RowLogSumExp, ta);
        const std::size_t r = ta.rows(), c = ta.cols();
        Tensor out({r});
        for (std::size_t i = 0; i < r; ++i) {
            double mx = ta.at(i, 0);
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, ta.at(i, j));
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += std::exp(ta.at(i, j) - mx);
            out.data[i] = mx + std::log(s);
        }
        return push(Prim::RowLogSumExp, {a.idx}, std::move(out));
    }

    // log(sum(exp(v))) over a rank-1 vector -> scalar.
    NodeId logsumexp(NodeId a) {
        const Tensor& ta = value(a);
        require(ta.rank() == 1, Prim::LogSumExp, ta);
        double mx = ta.data[0];
        for (double v : ta.data) mx = std::max(mx, v);
        double s = 0.0;
        for (double v : ta.data) s += std::exp(v - mx);
        return push(Prim::LogSumExp, {a.idx}, Tensor::scalar(mx + std::log(s)));
    }

    // Repeats a length-r vector across n columns -> r x n matrix.
    NodeId expand_cols(NodeId a, std::size_t n) {
        const Tensor& ta = value(a);
        require(ta.rank() == 1, Prim::ExpandCols, ta);
        const std::size_t r = ta.numel();
        Tensor out({r, n});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) = ta.data[i];
        return push(Prim::ExpandCols, {a.idx}, std::move(out));
    }

    // Elementwise product with a constant tensor; no gradient flows into w.
    NodeId mul_const(NodeId a, const Tensor& w) {
        const Tensor& ta = value(a);
        check_same_shape(ta, w, "mul-const");
        Tensor out = ta;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= w.data[i];
        TapeNode& node = push_node(Prim::MulConst, {a.idx}, std::move(out));
        node.aux_real = w.data;
        return NodeId{nodes_.size() - 1};
    }

    NodeId stack_scalars(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw WsgError("stack-scalars: empty input list");
        Tensor out({parts.size()});
        std::vector<std::size_t> in_idx;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const Tensor& tp = value(parts[i]);
            if (!tp.is_scalar())
                throw WsgError("stack-scalars: input is not scalar-shaped");
            out.data[i] = tp.data[0];
            in_idx.push_back(parts[i].idx);
        }
        return push(Prim::StackScalars, std::move(in_idx), std::move(out));
    }

    GradMap backprop(NodeId seed) const {
        const Tensor& sv = value(seed);
        if (!sv.is_scalar()) {
            throw WsgError("backprop: seed node is not scalar-shaped (" +
                           sv.shape_str() + ")");
        }
        GradMap grads(nodes_.size());
        grads.accumulate(seed.idx, sv.shape).data[0] = 1.0;

        for (std::size_t i = seed.idx + 1; i-- > 0;) {
            const TapeNode& node = nodes_[i];
            if (node.kind == Prim::Input || !grads.has(NodeId{i})) continue;
            const Tensor g = grads.at(NodeId{i});
            backprop_node(node, g, grads);
        }
        return grads;
    }

private:
    std::vector<TapeNode> nodes_;

    static std::pair<std::size_t, std::size_t> as_rows(const Tensor& t, Prim p) {
        if (t.rank() == 1) return {1, t.numel()};
        if (t.rank() == 2) return {t.rows(), t.cols()};
        throw WsgError(std::string(prim_name(p)) + ": expects rank 1 or 2, got " +
                       t.shape_str());
    }

    static void require(bool ok, Prim p, const Tensor& a) {
        if (!ok)
            throw WsgError(std::string(prim_name(p)) + ": bad input shape " +
                           a.shape_str());
    }
    static void require(bool ok, Prim p, const Tensor& a, const Tensor& b) {
        if (!ok)
            throw WsgError(std::string(prim_name(p)) + ": bad input shapes " +
                           a.shape_str() + ", " + b.shape_str());
    }

    TapeNode& push_node(Prim kind, std::vector<std::size_t> inputs, Tensor value) {
        if (!value.all_finite()) {
            throw WsgError(std::string(prim_name(kind)) +
                           ": produced non-finite output");
        }
        TapeNode node;
        node.kind = kind;
        node.inputs = std::move(inputs);
        node.value = std::move(value);
        nodes_.push_back(std::move(node));
        return nodes_.back();
    }

    NodeId push(Prim kind, std::vector<std::size_t> inputs, Tensor value) {
        push_node(kind, std::move(inputs), std::move(value));
        return NodeId{nodes_.size() - 1};
    }

    NodeId binary(Prim kind, NodeId a, NodeId b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        check_same_shape(ta, tb, prim_name(kind));
        Tensor out = ta;
        for (std::size_t i = 0; i < out.numel(); ++i) {
            switch (kind) {
                case Prim::Add: out.data[i] = ta.data[i] + tb.data[i]; break;
                case Prim::Sub: out.data[i] = ta.data[i] - tb.data[i]; break;
                case Prim::Mul: out.data[i] = ta.data[i] * tb.data[i]; break;
                default: throw WsgError("binary: bad kind");
            }
        }
        return push(kind, {a.idx, b.idx}, std::move(out));
    }

    void backprop_node(const TapeNode& node, const Tensor& g, GradMap& grads) const {
        auto in_val = [&](std::size_t k) -> const Tensor& {
            return nodes_[node.inputs[k]].value;
        };
        auto in_grad = [&](std::size_t k) -> Tensor& {
            return grads.accumulate(node.inputs[k], in_val(k).shape);
        };

        switch (node.kind) {
            case Prim::Input:
                break;
            case Prim::MatMul: {
                const Tensor& a = in_val(0);
                const Tensor& b = in_val(1);
                Tensor& da = in_grad(0);
                Tensor& db = in_grad(1);
                detail::gemm_nt(g.data.data(), b.data.data(), da.data.data(),
                                a.rows(), b.cols(), a.cols());
                detail::gemm_tn(a.data.data(), g.data.data(), db.data.data(),
                                a.rows(), a.cols(), b.cols());
                break;
            }
            case Prim::Transpose: {
                Tensor& da = in_grad(0);
                const std::size_t r = da.shape[0], c = da.shape[1];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        da.at(i, j) += g.at(j, i);
                break;
            }
            case Prim::BiasAdd: {
                Tensor& da = in_grad(0);
                Tensor& db = in_grad(1);
                const std::size_t r = da.shape[0], c = da.shape[1];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                        da.at(i, j) += g.at(i, j);
                        db.data[j] += g.at(i, j);
                    }
                break;
            }
            case Prim::Relu: {
                const Tensor& a = in_val(0);
                Tensor& da = in_grad(0);
                for (std::size_t i = 0; i < a.numel(); ++i)
                    if (a.data[i] > 0.0) da.data[i] += g.data[i];
                break;
            }
            case Prim::L2NormRows: {
                const Tensor& a = in_val(0);
                Tensor& da = in_grad(0);
                auto [r, c] = as_rows(a, Prim::L2NormRows);
                for (std::size_t i = 0; i < r; ++i) {
                    const double norm = node.aux_real[i];
                    const double* u = node.value.data.data() + i * c;
                    const double* gi = g.data.data() + i * c;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += gi[j] * u[j];
                    double* di = da.data.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j)
                        di[j] += (gi[j] - dot * u[j]) / norm;
                }
                break;
            }
            case Prim::MaxPoolRows: {
                Tensor& da = in_grad(0);
                const std::size_t c = da.shape[1];
                for (std::size_t j = 0; j < c; ++j)
                    da.at(node.aux_idx[j], j) += g.data[j];
                break;
            }
            case Prim::GatherRows: {
                Tensor& dt = in_grad(0);
                const std::size_t c = dt.shape[1];
                for (std::size_t i = 0; i < node.aux_idx.size(); ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        dt.at(node.aux_idx[i], j) += g.at(i, j);
                break;
            }
            case Prim::ConcatRows: {
                std::size_t row = 0;
                const std::size_t c = node.value.cols();
                for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                    Tensor& dk = in_grad(k);
                    const std::size_t pr = node.aux_idx[k];
                    for (std::size_t i = 0; i < pr * c; ++i)
                        dk.data[i] += g.data[row * c + i];
                    row += pr;
                }
                break;
            }
            case Prim::Exp: {
                Tensor& da = in_grad(0);
                for (std::size_t i = 0; i < da.numel(); ++i)
                    da.data[i] += g.data[i] * node.value.data[i];
                break;
            }
            case Prim::Log: {
                const Tensor& a = in_val(0);
                Tensor& da = in_grad(0);
                for (std::size_t i = 0; i < da.numel(); ++i)
                    da.data[i] += g.data[i] / a.data[i];
                break;
            }
            case Prim::Scale: {
                Tensor& da = in_grad(0);
                for (std::size_t i = 0; i < da.numel(); ++i)
                    da.data[i] += g.data[i] * node.aux_real[0];
                break;
            }
            case Prim::AddConst: {
                Tensor& da = in_grad(0);
                for (std::size_t i = 0; i < da.numel(); ++i)
                    da.data[i] += g.data[i];
                break;
            }
            case Prim::Add: {
                for (int k = 0; k < 2; ++k) {
                    Tensor& d = in_grad(k);
                    for (std::size_t i = 0; i < d.numel(); ++i)
                        d.data[i] += g.data[i];
                }
                break;
            }
            case Prim::Sub: {
                Tensor& da = in_grad(0);
                Tensor& db = in_grad(1);
                for (std::size_t i = 0; i < da.numel(); ++i) {
                    da.data[i] += g.data[i];
                    db.data[i] -= g.data[i];
                }
                break;
            }
            case Prim::Mul: {
                const Tensor& a = in_val(0);
                const Tensor& b = in_val(1);
                Tensor& da = in_grad(0);
                Tensor& db = in_grad(1);
                for (std::size_t i = 0; i < da.numel(); ++i) {
                    da.data[i] += g.data[i] * b.data[i];
                    db.data[i] += g.data[i] * a.data[i];
                }
                break;
            }
            case Prim::Sum: {
                Tensor& da = in_grad(0);
                for (std::size_t i = 0; i < da.numel(); ++i)
                    da.data[i] += g.data[0];
                break;
            }
            case Prim::RowMax: {
                Tensor& da = in_grad(0);
                const std::size_t c = da.shape[1];
                for (std::size_t i = 0; i < node.aux_idx.size(); ++i)
                    da.data[i * c + node.aux_idx[i]] += g.data[i];
                break;
            }
            case Prim::RowLogSumExp: {
                const Tensor& a = in_val(0);
                Tensor& da = in_grad(0);
                const std::size_t r = a.rows(), c = a.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    const double lse = node.value.data[i];
                    for (std::size_t j = 0; j < c; ++j)
                        da.at(i, j) += g.data[i] * std::exp(a.at(i, j) - lse);
                }
                break;
            }
            case Prim::LogSumExp: {
                const Tensor& a = in_val(0);
                Tensor& da = in_grad(0);
                const double lse = node.value.data[0];
                for (std::size_t i = 0; i < a.numel(); ++i)
                    da.data[i] += g.data[0] * std::exp(a.data[i] - lse);
                break;
            }
            case Prim::ExpandCols: {
                Tensor& da = in_grad(0);
                const std::size_t n = node.value.cols();
                for (std::size_t i = 0; i < da.numel(); ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g.data[i * n + j];
                    da.data[i] += acc;
                }
                break;
            }
            case Prim::MulConst: {
                Tensor& da = in_grad(0);
                for (std::size_t i = 0; i < da.numel(); ++i)
                    da.data[i] += g.data[i] * node.aux_real[i];
                break;
            }
            case Prim::StackScalars: {
                for (std::size_t k = 0; k < node.inputs.size(); ++k)
                    in_grad(k).data[0] += g.data[k];
                break;
            }
        }
    }
};

}  // namespace wsg
