#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sab/tape.hpp"
#include "sab/tensor.hpp"

namespace sab {

/// Sparse-retrieval parameters: the scoring MLP (a_i = w3 . tanh(w1 m_i + w2 h))
/// and the affine output transform (y = v1 h + v2 s + b).
struct AttentionWeights {
    Tensor w1, w2;  // n x n
    Tensor w3;      // 1 x n
    Tensor v1, v2;  // n_out x n
    Tensor b;       // n_out x 1
};

/// Per-timestep record of one retrieval decision, per batch column.
/// Fallback columns (all sparse weights zero: single memory, or all raw
/// weights equal) attend to the most recent memory with weight 1.
struct AttentionTrace {
    int timestep = 0;
    Tensor raw;                             // M x B raw scores
    Tensor sparse;                          // M x B sparsified weights
    Tensor normalized;                      // M x B, each column sums to 1
    std::vector<std::int32_t> theta_index;  // per column: index of the threshold element
    std::vector<std::uint8_t> fallback;     // per column
    std::vector<int> mem_timesteps;         // source timestep per memory slot

    /// Memory indices with nonzero normalized weight in this column. Equals
    /// the k_top largest raw weights when weights are distinct and |M| > k_top.
    std::vector<int> selected(int col) const;
};

// ---------- single-vector semantics (one batch column; used by tests too) ----------

/// Index of the threshold element under (value desc, index asc) ordering:
/// the (k_top+1)-th largest raw weight when |raw| > k_top, else the minimum.
int threshold_index(std::span<const double> raw, int k_top);

/// relu(a_i - a_theta): at most k_top nonzeros when |raw| > k_top; entries
/// tied with the threshold subtract to exactly 0.
std::vector<double> sparsify(std::span<const double> raw, int k_top);

/// Weights rescaled to sum to 1. All-zero input falls back to weight 1 on the
/// last (most recent) entry.
std::vector<double> normalize_sparse(std::span<const double> sparse, bool* fallback = nullptr);

/// a_i = w3 . tanh(w1 m_i + w2 h_hat) in storage order (single column).
std::vector<double> raw_attention(const Tensor& w1, const Tensor& w2, const Tensor& w3,
                                  std::span<const Tensor> memories, const Tensor& h_hat);

struct Summary {
    Tensor s;                        // n x 1
    std::vector<double> normalized;  // sums to 1
    bool fallback = false;
};
/// s = sum_i sparse_i m_i / sum_i sparse_i, touching only nonzero entries;
/// all-zero weights yield the most recent memory (never a division by zero).
Summary summarize(std::span<const Tensor> memories, std::span<const double> sparse);

// ---------- batched kernels shared by the tape ops and the no-tape eval path ----------

/// raw[i,b] = score_row . tanh(mem_proj[i][:,b] + query_proj[:,b])
void score_memories_batch(std::span<const double* const> mem_proj, const double* query_proj,
                          const double* score_row, int n, int batch, double* raw);

/// Column-wise sparsify of raw (M x B); also records each column's threshold index.
void sparsify_batch(const double* raw, int m, int batch, int k_top, double* sparse,
                    std::int32_t* theta_idx);

/// s[:,b] = sum_i w[i,b] m_i[:,b] / sum_i w[i,b]; all-zero columns copy the last memory.
void mix_batch(const double* weights, std::span<const double* const> memories, int m, int n,
               int batch, double* s_out);

/// Column-normalized weights; fallback columns become a one-hot on the last row.
void normalize_batch(const double* sparse, int m, int batch, double* normalized);

// ---------- fused tape ops (dispatched from Tape) ----------
namespace detail {
void attn_scores_forward(Tape& tape, Node& n, int k_top, Tensor* raw_out);
void attn_scores_backward(Tape& tape, const Node& n);
void attn_mix_forward(Tape& tape, Node& n);
void attn_mix_backward(Tape& tape, const Node& n);
}  // namespace detail

}  // namespace sab
