#include "sab/cell.hpp"

#include <algorithm>

#include "sab/math_kernels.hpp"

namespace sab {

namespace {

void fill_trace(AttentionTrace& trace, int t, Tensor raw, Tensor sparse,
                const std::int32_t* theta, std::vector<int> mem_timesteps) {
    const int m = sparse.rows(), batch = sparse.cols();
    trace.timestep = t;
    trace.normalized = Tensor(m, batch);
    normalize_batch(sparse.data(), m, batch, trace.normalized.data());
    trace.theta_index.assign(theta, theta + batch);
    trace.fallback.assign(batch, 0);
    for (int b = 0; b < batch; ++b) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += sparse(i, b);
        trace.fallback[b] = s > 0.0 ? 0 : 1;
    }
    trace.raw = std::move(raw);
    trace.sparse = std::move(sparse);
    trace.mem_timesteps = std::move(mem_timesteps);
}

// Nesting depth of the microstate produced at this step: one past the deepest
// memory that could carry gradient out of this step's retrieval. Only needed
// when a skip-depth cap is active.
int attended_depth(const Tensor& sparse, const std::int32_t* theta, const TapeMemoryBank& bank) {
    const int m = sparse.rows(), batch = sparse.cols();
    int deepest = -1;
    bool any_fallback = false;
    for (int b = 0; b < batch; ++b) {
        double colsum = 0.0;
        for (int i = 0; i < m; ++i) {
            if (sparse(i, b) > 0.0) deepest = std::max(deepest, bank.entry(i).depth);
            colsum += sparse(i, b);
        }
        if (colsum > 0.0)
            deepest = std::max(deepest, bank.entry(theta[b]).depth);
        else
            any_fallback = true;
    }
    if (any_fallback) deepest = std::max(deepest, bank.entry(m - 1).depth);
    return deepest + 1;
}

}  // namespace

std::vector<NodeId> TapeMemoryBank::states() const {
    std::vector<NodeId> out(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) out[i] = entries_[i].state;
    return out;
}

std::vector<NodeId> TapeMemoryBank::projections() const {
    std::vector<NodeId> out(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) out[i] = entries_[i].proj;
    return out;
}

std::vector<int> TapeMemoryBank::timesteps() const {
    std::vector<int> out(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) out[i] = entries_[i].timestep;
    return out;
}

SabStepOut sab_step(Tape& tape, const SabCellIds& p, TapeMemoryBank& bank, NodeId h_prev,
                    NodeId c_prev, NodeId x, int t, int k_top, int k_att,
                    const ReplayPolicy& policy, bool want_output, AttentionTrace* trace) {
    const NodeId hp = gate_sequential(tape, h_prev, t, policy);
    const NodeId cp = gate_sequential(tape, c_prev, t, policy);
    auto [h_hat, c] = lstm_step(tape, p.lstm, hp, cp, x);

    SabStepOut out;
    out.c = c;
    NodeId h = h_hat;
    NodeId summary = -1;
    int depth = 0;

    const bool attend = policy.attention_enabled() && bank.count() >= 1;
    if (attend) {
        const NodeId query = tape.matmul(p.w2, h_hat);
        const int k_eff = policy.dense_selection() ? bank.count() : k_top;
        const auto projs = bank.projections();
        Tensor raw;
        const NodeId scores =
            tape.attn_scores(query, p.w3, projs, k_eff, trace ? &raw : nullptr);
        const auto states = bank.states();
        summary = tape.attn_mix(scores, states);
        h = tape.add(h_hat, summary);
        const Node& sn = tape.node(scores);
        if (policy.skip_depth_cap > 0) depth = attended_depth(sn.value, sn.aux.data(), bank);
        if (trace)
            fill_trace(*trace, t, std::move(raw), sn.value, sn.aux.data(), bank.timesteps());
    }
    out.h = h;

    if (want_output) {
        if (summary >= 0)
            out.y = tape.add_bias(tape.add(tape.matmul(p.v1, h), tape.matmul(p.v2, summary)),
                                  p.b_out);
        else
            out.y = tape.add_bias(tape.matmul(p.v1, h), p.b_out);
    }

    if (policy.attention_enabled() && t % k_att == 0) {
        const NodeId read = gate_memory_read(tape, h, depth, policy);
        const NodeId proj = tape.matmul(p.w1, read);
        bank.append({t, read, proj, depth});
    }
    return out;
}

// ---------------- no-tape evaluation mirror ----------------

void EvalMemoryBank::append(EvalMemoryEntry e) {
    entries_.push_back(std::move(e));
    state_ptrs_.push_back(entries_.back().state.data());
    proj_ptrs_.push_back(entries_.back().proj.data());
}

std::vector<int> EvalMemoryBank::timesteps() const {
    std::vector<int> out(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) out[i] = entries_[i].timestep;
    return out;
}

void EvalMemoryBank::clear() {
    entries_.clear();
    state_ptrs_.clear();
    proj_ptrs_.clear();
}

void SabEvalScratch::resize(int hidden, int batch) {
    if (h_hat.rows() == hidden && h_hat.cols() == batch) return;
    h_hat = Tensor(hidden, batch);
    c_next = Tensor(hidden, batch);
    query = Tensor(hidden, batch);
    summary = Tensor(hidden, batch);
    h_next = Tensor(hidden, batch);
    yv1 = Tensor(hidden, batch);
    yv2 = Tensor(hidden, batch);
    ysum = Tensor(hidden, batch);
}

void sab_step_eval(const LstmWeights& lstm, const AttentionWeights& attn, EvalMemoryBank& bank,
                   Tensor& h, Tensor& c, const Tensor& x, int t, const SabEvalStepConfig& cfg,
                   SabEvalScratch& s, Tensor* y_out, AttentionTrace* trace) {
    const int n = lstm.hidden;
    const int batch = h.cols();
    s.resize(n, batch);

    lstm_step_eval(lstm, h, c, x, s.lstm, s.h_hat, s.c_next);

    const bool attend = cfg.attention && bank.count() >= 1;
    const int m = bank.count();
    if (attend) {
        kern::gemm(false, false, n, batch, n, 1.0, attn.w2.data(), n, s.h_hat.data(), batch,
                   0.0, s.query.data(), batch);
        if (s.raw.rows() != m || s.raw.cols() != batch) {
            s.raw = Tensor(m, batch);
            s.sparse = Tensor(m, batch);
        }
        s.theta.resize(batch);
        score_memories_batch(bank.proj_ptrs(), s.query.data(), attn.w3.data(), n, batch,
                             s.raw.data());
        const int k_eff = cfg.dense ? m : cfg.k_top;
        sparsify_batch(s.raw.data(), m, batch, k_eff, s.sparse.data(), s.theta.data());
        mix_batch(s.sparse.data(), bank.state_ptrs(), m, n, batch, s.summary.data());
        kern::vadd(s.h_hat.data(), s.summary.data(), s.h_next.data(), s.h_next.size());
        if (trace)
            fill_trace(*trace, t, s.raw, s.sparse, s.theta.data(), bank.timesteps());
    } else {
        std::copy(s.h_hat.data(), s.h_hat.data() + s.h_hat.size(), s.h_next.data());
    }

    if (y_out) {
        kern::gemm(false, false, n, batch, n, 1.0, attn.v1.data(), n, s.h_next.data(), batch,
                   0.0, s.yv1.data(), batch);
        if (attend) {
            kern::gemm(false, false, n, batch, n, 1.0, attn.v2.data(), n, s.summary.data(),
                       batch, 0.0, s.yv2.data(), batch);
            kern::vadd(s.yv1.data(), s.yv2.data(), s.ysum.data(), s.ysum.size());
            kern::add_bias_rows(s.ysum.data(), attn.b.data(), y_out->data(), n, batch);
        } else {
            kern::add_bias_rows(s.yv1.data(), attn.b.data(), y_out->data(), n, batch);
        }
    }

    std::swap(h, s.h_next);
    std::swap(c, s.c_next);

    if (cfg.attention && t % cfg.k_att == 0) {
        EvalMemoryEntry e;
        e.timestep = t;
        e.state = h;
        e.proj = Tensor(n, batch);
        kern::gemm(false, false, n, batch, n, 1.0, attn.w1.data(), n, e.state.data(), batch,
                   0.0, e.proj.data(), batch);
        bank.append(std::move(e));
    }
}

}  // namespace sab
