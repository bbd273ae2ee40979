#include "sab/tape.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sab/attention.hpp"
#include "sab/math_kernels.hpp"

namespace sab {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

NodeId Tape::push(Node n) {
    const NodeId id = NodeId(nodes_.size());
#ifndef NDEBUG
    for (NodeId p : n.parents) assert(p >= 0 && p < id && "tape must stay topologically ordered");
#endif
    nodes_.push_back(std::move(n));
    return id;
}

NodeId Tape::leaf(Tensor value) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    require(va.cols() == vb.rows(),
            "matmul: dimension mismatch " + va.shape_str() + " * " + vb.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.parents = {a, b};
    n.value = Tensor(va.rows(), vb.cols());
    kern::gemm(false, false, va.rows(), vb.cols(), va.cols(), 1.0, va.data(), va.cols(),
               vb.data(), vb.cols(), 0.0, n.value.data(), n.value.cols());
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    check_same_shape(va, vb, "add");
    Node n;
    n.op = Op::Add;
    n.parents = {a, b};
    n.value = Tensor(va.rows(), va.cols());
    kern::vadd(va.data(), vb.data(), n.value.data(), va.size());
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    check_same_shape(va, vb, "sub");
    Node n;
    n.op = Op::Sub;
    n.parents = {a, b};
    n.value = Tensor(va.rows(), va.cols());
    kern::vsub(va.data(), vb.data(), n.value.data(), va.size());
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    check_same_shape(va, vb, "mul");
    Node n;
    n.op = Op::Mul;
    n.parents = {a, b};
    n.value = Tensor(va.rows(), va.cols());
    kern::vmul(va.data(), vb.data(), n.value.data(), va.size());
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::Scale;
    n.parents = {a};
    n.scalar = factor;
    n.value = Tensor(va.rows(), va.cols());
    kern::vscale(va.data(), factor, n.value.data(), va.size());
    return push(std::move(n));
}

NodeId Tape::add_bias(NodeId x, NodeId bias) {
    const Tensor& vx = val(x);
    const Tensor& vb = val(bias);
    require(vb.cols() == 1 && vb.rows() == vx.rows(),
            "add_bias: bias must be " + std::to_string(vx.rows()) + "x1, got " + vb.shape_str());
    Node n;
    n.op = Op::AddBias;
    n.parents = {x, bias};
    n.value = Tensor(vx.rows(), vx.cols());
    kern::add_bias_rows(vx.data(), vb.data(), n.value.data(), vx.rows(), vx.cols());
    return push(std::move(n));
}

NodeId Tape::tanh_(NodeId a) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::Tanh;
    n.parents = {a};
    n.value = Tensor(va.rows(), va.cols());
    kern::vtanh(va.data(), n.value.data(), va.size());
    return push(std::move(n));
}

NodeId Tape::sigmoid_(NodeId a) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::Sigmoid;
    n.parents = {a};
    n.value = Tensor(va.rows(), va.cols());
    kern::vsigmoid(va.data(), n.value.data(), va.size());
    return push(std::move(n));
}

NodeId Tape::relu_(NodeId a) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::Relu;
    n.parents = {a};
    n.value = Tensor(va.rows(), va.cols());
    kern::vrelu(va.data(), n.value.data(), va.size());
    return push(std::move(n));
}

NodeId Tape::concat_rows(NodeId a, NodeId b) {
    const NodeId parts[2] = {a, b};
    return concat_rows(std::span<const NodeId>(parts, 2));
}

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const int cols = val(parts[0]).cols();
    int rows = 0;
    for (NodeId p : parts) {
        require(val(p).cols() == cols, "concat_rows: column mismatch " + val(p).shape_str() +
                                           " vs " + val(parts[0]).shape_str());
        rows += val(p).rows();
    }
    Node n;
    n.op = Op::ConcatRows;
    n.parents.assign(parts.begin(), parts.end());
    n.value = Tensor(rows, cols);
    double* dst = n.value.data();
    for (NodeId p : parts) {
        const Tensor& v = val(p);
        std::copy(v.data(), v.data() + v.size(), dst);
        dst += v.size();
    }
    return push(std::move(n));
}

NodeId Tape::slice_rows(NodeId a, int row0, int nrows) {
    const Tensor& va = val(a);
    require(row0 >= 0 && nrows >= 1 && row0 + nrows <= va.rows(),
            "slice_rows: range [" + std::to_string(row0) + "," + std::to_string(row0 + nrows) +
                ") outside " + va.shape_str());
    Node n;
    n.op = Op::SliceRows;
    n.parents = {a};
    n.aux = {row0};
    n.value = Tensor(nrows, va.cols());
    const double* src = va.data() + std::size_t(row0) * va.cols();
    std::copy(src, src + n.value.size(), n.value.data());
    return push(std::move(n));
}

NodeId Tape::block_gradient(NodeId a) {
    Node n;
    n.op = Op::BlockGrad;
    n.blocked = true;
    n.parents = {a};
    n.value = val(a);  // verbatim copy; forward values never change
    return push(std::move(n));
}

NodeId Tape::gather_per_column(NodeId a, std::span<const std::int32_t> row_idx) {
    const Tensor& va = val(a);
    require(int(row_idx.size()) == va.cols(), "gather_per_column: need one row index per column");
    Node n;
    n.op = Op::GatherCols;
    n.parents = {a};
    n.aux.assign(row_idx.begin(), row_idx.end());
    n.value = Tensor(1, va.cols());
    for (int c = 0; c < va.cols(); ++c) {
        require(row_idx[c] >= 0 && row_idx[c] < va.rows(), "gather_per_column: row out of range");
        n.value[c] = va(row_idx[c], c);
    }
    return push(std::move(n));
}

NodeId Tape::sub_row(NodeId a, NodeId row) {
    const Tensor& va = val(a);
    const Tensor& vr = val(row);
    require(vr.rows() == 1 && vr.cols() == va.cols(),
            "sub_row: row must be 1x" + std::to_string(va.cols()) + ", got " + vr.shape_str());
    Node n;
    n.op = Op::SubRow;
    n.parents = {a, row};
    n.value = Tensor(va.rows(), va.cols());
    for (int r = 0; r < va.rows(); ++r)
        for (int c = 0; c < va.cols(); ++c) n.value(r, c) = va(r, c) - vr[c];
    return push(std::move(n));
}

NodeId Tape::mul_row(NodeId a, NodeId row) {
    const Tensor& va = val(a);
    const Tensor& vr = val(row);
    require(vr.rows() == 1 && vr.cols() == va.cols(),
            "mul_row: row must be 1x" + std::to_string(va.cols()) + ", got " + vr.shape_str());
    Node n;
    n.op = Op::MulRow;
    n.parents = {a, row};
    n.value = Tensor(va.rows(), va.cols());
    for (int r = 0; r < va.rows(); ++r)
        for (int c = 0; c < va.cols(); ++c) n.value(r, c) = va(r, c) * vr[c];
    return push(std::move(n));
}

NodeId Tape::div_row(NodeId a, NodeId row) {
    const Tensor& va = val(a);
    const Tensor& vr = val(row);
    require(vr.rows() == 1 && vr.cols() == va.cols(),
            "div_row: row must be 1x" + std::to_string(va.cols()) + ", got " + vr.shape_str());
    Node n;
    n.op = Op::DivRow;
    n.parents = {a, row};
    n.value = Tensor(va.rows(), va.cols());
    for (int r = 0; r < va.rows(); ++r)
        for (int c = 0; c < va.cols(); ++c) n.value(r, c) = va(r, c) / vr[c];
    return push(std::move(n));
}

NodeId Tape::col_sum(NodeId a) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::ColSum;
    n.parents = {a};
    n.value = Tensor(1, va.cols());
    for (int r = 0; r < va.rows(); ++r)
        for (int c = 0; c < va.cols(); ++c) n.value[c] += va(r, c);
    return push(std::move(n));
}

NodeId Tape::sum_all(NodeId a) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::SumAll;
    n.parents = {a};
    n.value = Tensor(1, 1);
    double s = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
    n.value[0] = s;
    return push(std::move(n));
}

NodeId Tape::attn_scores(NodeId query_proj, NodeId score_row, std::span<const NodeId> mem_proj,
                         int k_top, Tensor* raw_out) {
    require(k_top >= 1, "attn_scores: k_top must be >= 1");
    require(!mem_proj.empty(), "attn_scores: empty memory");
    const Tensor& vq = val(query_proj);
    const Tensor& vw = val(score_row);
    require(vw.rows() == 1 && vw.cols() == vq.rows(),
            "attn_scores: score row must be 1x" + std::to_string(vq.rows()) + ", got " +
                vw.shape_str());
    for (NodeId m : mem_proj)
        check_same_shape(val(m), vq, "attn_scores");
    Node n;
    n.op = Op::AttnScores;
    n.parents.reserve(mem_proj.size() + 2);
    n.parents.push_back(query_proj);
    n.parents.push_back(score_row);
    n.parents.insert(n.parents.end(), mem_proj.begin(), mem_proj.end());
    detail::attn_scores_forward(*this, n, k_top, raw_out);
    return push(std::move(n));
}

NodeId Tape::attn_mix(NodeId weights, std::span<const NodeId> memories) {
    require(!memories.empty(), "attn_mix: empty memory");
    const Tensor& vw = val(weights);
    require(vw.rows() == int(memories.size()),
            "attn_mix: weight rows " + std::to_string(vw.rows()) + " != memory count " +
                std::to_string(memories.size()));
    for (NodeId m : memories)
        require(val(m).cols() == vw.cols(), "attn_mix: column mismatch " + val(m).shape_str());
    Node n;
    n.op = Op::AttnMix;
    n.parents.reserve(memories.size() + 1);
    n.parents.push_back(weights);
    n.parents.insert(n.parents.end(), memories.begin(), memories.end());
    detail::attn_mix_forward(*this, n);
    return push(std::move(n));
}

NodeId Tape::softmax_xent_mean(NodeId logits, std::span<const std::int32_t> targets) {
    const Tensor& vl = val(logits);
    require(int(targets.size()) == vl.cols(), "softmax_xent_mean: one target per column");
    Node n;
    n.op = Op::SoftmaxXentMean;
    n.parents = {logits};
    n.aux.assign(targets.begin(), targets.end());
    n.value = Tensor(1, 1);
    const int v = vl.rows(), bsz = vl.cols();
    double total = 0.0;
    for (int c = 0; c < bsz; ++c) {
        require(targets[c] >= 0 && targets[c] < v, "softmax_xent_mean: target out of range");
        double mx = vl(0, c);
        for (int r = 1; r < v; ++r) mx = std::max(mx, vl(r, c));
        double lse = 0.0;
        for (int r = 0; r < v; ++r) lse += std::exp(vl(r, c) - mx);
        total += std::log(lse) - (vl(targets[c], c) - mx);
    }
    n.value[0] = total / bsz;
    return push(std::move(n));
}

NodeId Tape::mse_mean(NodeId pred, NodeId target) {
    const Tensor& vp = val(pred);
    const Tensor& vt = val(target);
    check_same_shape(vp, vt, "mse_mean");
    Node n;
    n.op = Op::MseMean;
    n.parents = {pred, target};
    n.value = Tensor(1, 1);
    double total = 0.0;
    for (std::size_t i = 0; i < vp.size(); ++i) {
        const double d = vp[i] - vt[i];
        total += d * d;
    }
    n.value[0] = total / double(vp.size());
    return push(std::move(n));
}

Tensor& Tape::ensure_grad(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
}

Tensor Tape::grad_or_zero(NodeId id) const {
    const Node& n = nodes_[id];
    if (!n.grad.empty()) return n.grad;
    return Tensor(n.value.rows(), n.value.cols());
}

void Tape::zero_grads() {
    for (Node& n : nodes_)
        if (!n.grad.empty()) n.grad.zero();
}

void Tape::backward(NodeId root) {
    require(root >= 0 && root < size(), "backward: bad root id");
    {
        const Tensor& rv = val(root);
        require(rv.rows() == 1 && rv.cols() == 1,
                "backward: root must be 1x1, got " + rv.shape_str());
    }
    ensure_grad(root)[0] = 1.0;

    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;  // unreached
        if (n.blocked || n.op == Op::Leaf) continue;
        const Tensor& g = n.grad;

        switch (n.op) {
            case Op::MatMul: {
                const Tensor& va = val(n.parents[0]);
                const Tensor& vb = val(n.parents[1]);
                Tensor& ga = ensure_grad(n.parents[0]);
                Tensor& gb = ensure_grad(n.parents[1]);
                // dA += G * B^T ; dB += A^T * G
                kern::gemm(false, true, va.rows(), va.cols(), vb.cols(), 1.0, g.data(), g.cols(),
                           vb.data(), vb.cols(), 1.0, ga.data(), ga.cols());
                kern::gemm(true, false, vb.rows(), vb.cols(), va.rows(), 1.0, va.data(),
                           va.cols(), g.data(), g.cols(), 1.0, gb.data(), gb.cols());
                break;
            }
            case Op::Add: {
                Tensor& ga = ensure_grad(n.parents[0]);
                Tensor& gb = ensure_grad(n.parents[1]);
                kern::axpy(g.size(), 1.0, g.data(), ga.data());
                kern::axpy(g.size(), 1.0, g.data(), gb.data());
                break;
            }
            case Op::Sub: {
                Tensor& ga = ensure_grad(n.parents[0]);
                Tensor& gb = ensure_grad(n.parents[1]);
                kern::axpy(g.size(), 1.0, g.data(), ga.data());
                kern::axpy(g.size(), -1.0, g.data(), gb.data());
                break;
            }
            case Op::Mul: {
                const Tensor& va = val(n.parents[0]);
                const Tensor& vb = val(n.parents[1]);
                Tensor& ga = ensure_grad(n.parents[0]);
                Tensor& gb = ensure_grad(n.parents[1]);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * vb[i];
                    gb[i] += g[i] * va[i];
                }
                break;
            }
            case Op::Scale: {
                Tensor& ga = ensure_grad(n.parents[0]);
                kern::axpy(g.size(), n.scalar, g.data(), ga.data());
                break;
            }
            case Op::AddBias: {
                Tensor& gx = ensure_grad(n.parents[0]);
                Tensor& gb = ensure_grad(n.parents[1]);
                kern::axpy(g.size(), 1.0, g.data(), gx.data());
                for (int r = 0; r < g.rows(); ++r) {
                    double s = 0.0;
                    const double* row = g.data() + std::size_t(r) * g.cols();
                    for (int c = 0; c < g.cols(); ++c) s += row[c];
                    gb[r] += s;
                }
                break;
            }
            case Op::Tanh: {
                Tensor& ga = ensure_grad(n.parents[0]);
                const Tensor& y = n.value;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::Sigmoid: {
                Tensor& ga = ensure_grad(n.parents[0]);
                const Tensor& y = n.value;
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::Relu: {
                // subgradient 0 at exactly 0
                const Tensor& x = val(n.parents[0]);
                Tensor& ga = ensure_grad(n.parents[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (x[i] > 0.0) ga[i] += g[i];
                break;
            }
            case Op::ConcatRows: {
                std::size_t off = 0;
                for (NodeId p : n.parents) {
                    Tensor& gp = ensure_grad(p);
                    kern::axpy(gp.size(), 1.0, g.data() + off, gp.data());
                    off += gp.size();
                }
                break;
            }
            case Op::SliceRows: {
                Tensor& ga = ensure_grad(n.parents[0]);
                const std::size_t off = std::size_t(n.aux[0]) * ga.cols();
                kern::axpy(g.size(), 1.0, g.data(), ga.data() + off);
                break;
            }
            case Op::GatherCols: {
                Tensor& ga = ensure_grad(n.parents[0]);
                for (int c = 0; c < g.cols(); ++c) ga(n.aux[c], c) += g[c];
                break;
            }
            case Op::SubRow: {
                Tensor& ga = ensure_grad(n.parents[0]);
                Tensor& gr = ensure_grad(n.parents[1]);
                kern::axpy(g.size(), 1.0, g.data(), ga.data());
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) gr[c] -= g(r, c);
                break;
            }
            case Op::MulRow: {
                const Tensor& va = val(n.parents[0]);
                const Tensor& vr = val(n.parents[1]);
                Tensor& ga = ensure_grad(n.parents[0]);
                Tensor& gr = ensure_grad(n.parents[1]);
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) {
                        ga(r, c) += g(r, c) * vr[c];
                        gr[c] += g(r, c) * va(r, c);
                    }
                break;
            }
            case Op::DivRow: {
                const Tensor& vr = val(n.parents[1]);
                Tensor& ga = ensure_grad(n.parents[0]);
                Tensor& gr = ensure_grad(n.parents[1]);
                const Tensor& y = n.value;
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) {
                        ga(r, c) += g(r, c) / vr[c];
                        gr[c] -= g(r, c) * y(r, c) / vr[c];
                    }
                break;
            }
            case Op::ColSum: {
                Tensor& ga = ensure_grad(n.parents[0]);
                for (int r = 0; r < ga.rows(); ++r)
                    for (int c = 0; c < ga.cols(); ++c) ga(r, c) += g[c];
                break;
            }
            case Op::SumAll: {
                Tensor& ga = ensure_grad(n.parents[0]);
                const double gv = g[0];
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
                break;
            }
            case Op::AttnScores:
                detail::attn_scores_backward(*this, n);
                break;
            case Op::AttnMix:
                detail::attn_mix_backward(*this, n);
                break;
            case Op::SoftmaxXentMean: {
                const Tensor& vl = val(n.parents[0]);
                Tensor& gl = ensure_grad(n.parents[0]);
                const int v = vl.rows(), bsz = vl.cols();
                const double gv = g[0] / bsz;
                std::vector<double> p(v);
                for (int c = 0; c < bsz; ++c) {
                    double mx = vl(0, c);
                    for (int r = 1; r < v; ++r) mx = std::max(mx, vl(r, c));
                    double lse = 0.0;
                    for (int r = 0; r < v; ++r) {
                        p[r] = std::exp(vl(r, c) - mx);
                        lse += p[r];
                    }
                    for (int r = 0; r < v; ++r) gl(r, c) += gv * (p[r] / lse);
                    gl(n.aux[c], c) -= gv;
                }
                break;
            }
            case Op::MseMean: {
                const Tensor& vp = val(n.parents[0]);
                const Tensor& vt = val(n.parents[1]);
                Tensor& gp = ensure_grad(n.parents[0]);
                Tensor& gt = ensure_grad(n.parents[1]);
                const double gv = 2.0 * g[0] / double(vp.size());
                for (std::size_t i = 0; i < vp.size(); ++i) {
                    const double d = gv * (vp[i] - vt[i]);
                    gp[i] += d;
                    gt[i] -= d;
                }
                break;
            }
            case Op::Leaf:
            case Op::BlockGrad:
                break;
        }
    }
}

}  // namespace sab
