#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sab/tensor.hpp"

namespace sab {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    AddBias,
    Tanh,
    Sigmoid,
    Relu,
    ConcatRows,
    SliceRows,
    BlockGrad,
    GatherCols,
    SubRow,
    MulRow,
    DivRow,
    ColSum,
    SumAll,
    AttnScores,
    AttnMix,
    SoftmaxXentMean,
    MseMean,
};

/// One recorded operation. Parent ids are always strictly smaller than the
/// node's own id, so the node list is topologically ordered by construction.
struct Node {
    Op op = Op::Leaf;
    bool blocked = false;  // backward never writes into parents through this node
    Tensor value;
    Tensor grad;  // empty until backward() reaches this node
    std::vector<NodeId> parents;
    std::vector<std::int32_t> aux;  // op-specific: slice offset, gather rows, targets, ...
    double scalar = 0.0;            // op-specific: scale factor
};

/// Append-only record of differentiable operations over 2-D tensors.
/// A tape is built fresh for every forward pass (the graph is data-dependent),
/// swept once by backward(), then cleared for reuse. Confined to one worker.
class Tape {
public:
    NodeId leaf(Tensor value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // elementwise
    NodeId scale(NodeId a, double factor);
    NodeId add_bias(NodeId x, NodeId bias);  // bias (n x 1) added to every column
    NodeId tanh_(NodeId a);
    NodeId sigmoid_(NodeId a);
    NodeId relu_(NodeId a);
    NodeId concat_rows(NodeId a, NodeId b);
    NodeId concat_rows(std::span<const NodeId> parts);
    NodeId slice_rows(NodeId a, int row0, int nrows);
    NodeId block_gradient(NodeId a);

    // row/column helpers (row operands are 1 x cols)
    NodeId gather_per_column(NodeId a, std::span<const std::int32_t> row_idx);
    NodeId sub_row(NodeId a, NodeId row);
    NodeId mul_row(NodeId a, NodeId row);
    NodeId div_row(NodeId a, NodeId row);
    NodeId col_sum(NodeId a);  // 1 x cols, sums over rows
    NodeId sum_all(NodeId a);  // 1 x 1

    // Fused sparse-attention ops; math lives in attention.cpp.
    // attn_scores: parents [query_proj (n x B), score_row (1 x n), mem_proj_0..M-1 (n x B)],
    // value is the sparsified weight matrix (M x B). raw_out, when given, receives
    // the raw pre-threshold scores.
    NodeId attn_scores(NodeId query_proj, NodeId score_row, std::span<const NodeId> mem_proj,
                       int k_top, Tensor* raw_out = nullptr);
    // attn_mix: parents [weights (M x B), memory_0..M-1 (n x B)], value is the
    // normalized weighted sum per column; columns whose weights sum to zero fall
    // back to the most recent memory.
    NodeId attn_mix(NodeId weights, std::span<const NodeId> memories);

    // Fused losses (both return 1 x 1 means over the batch)
    NodeId softmax_xent_mean(NodeId logits, std::span<const std::int32_t> targets);
    NodeId mse_mean(NodeId pred, NodeId target);

    /// Reverse sweep from a scalar root: populates grad of every reachable,
    /// non-blocked ancestor, visiting each node once in reverse id order.
    /// Gradients accumulate additively across multiple consumers.
    void backward(NodeId root);

    void clear() { nodes_.clear(); }
    void zero_grads();

    int size() const { return int(nodes_.size()); }
    const Node& node(NodeId id) const { return nodes_[id]; }
    Node& node(NodeId id) { return nodes_[id]; }
    const Tensor& val(NodeId id) const { return nodes_[id].value; }
    /// Gradient of a node; empty tensor if backward never reached it.
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    /// Gradient, or zeros of the value's shape if unreached.
    Tensor grad_or_zero(NodeId id) const;

    /// Allocates (zeroed) grad storage if missing. Internal to backward rules.
    Tensor& ensure_grad(NodeId id);

private:
    NodeId push(Node n);
    std::vector<Node> nodes_;
};

}  // namespace sab
