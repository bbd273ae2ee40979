#pragma once

#include <vector>

#include "sab/attention.hpp"
#include "sab/lstm.hpp"
#include "sab/replay.hpp"

namespace sab {

/// Tape handles for all cell parameters during one forward pass.
struct SabCellIds {
    LstmStepIds lstm;
    NodeId w1, w2, w3;       // attention MLP
    NodeId v1, v2, b_out;    // output transform
};

struct TapeMemoryEntry {
    int timestep;
    NodeId state;  // the stored microstate as read (gradient gate applied)
    NodeId proj;   // cached w1 * state
    int depth;     // nesting depth of skip reads feeding this microstate
};

/// Ordered store of microstates: every k_att-th hidden state, in step order.
class TapeMemoryBank {
public:
    int count() const { return int(entries_.size()); }
    const TapeMemoryEntry& entry(int i) const { return entries_[i]; }
    void append(TapeMemoryEntry e) { entries_.push_back(e); }
    std::vector<NodeId> states() const;
    std::vector<NodeId> projections() const;
    std::vector<int> timesteps() const;

private:
    std::vector<TapeMemoryEntry> entries_;
};

struct SabStepOut {
    NodeId h = -1;
    NodeId c = -1;
    NodeId y = -1;  // -1 when the caller skipped the output transform
};

/// One step of the attention-augmented cell on the tape (t is 1-based):
/// runs the LSTM, retrieves a sparse subset of stored microstates, adds the
/// summary into the provisional hidden state, applies the output transform,
/// and appends the final hidden state to the bank when t % k_att == 0.
/// With an empty bank (or attention disabled by the policy) h = h_hat and
/// y = v1 h + b. `trace`, when given, receives the retrieval record.
SabStepOut sab_step(Tape& tape, const SabCellIds& p, TapeMemoryBank& bank, NodeId h_prev,
                    NodeId c_prev, NodeId x, int t, int k_top, int k_att,
                    const ReplayPolicy& policy, bool want_output, AttentionTrace* trace);

// ---------------- no-tape evaluation mirror ----------------

struct EvalMemoryEntry {
    int timestep;
    Tensor state;
    Tensor proj;
};

class EvalMemoryBank {
public:
    int count() const { return int(entries_.size()); }
    const EvalMemoryEntry& entry(int i) const { return entries_[i]; }
    void append(EvalMemoryEntry e);
    const std::vector<const double*>& state_ptrs() const { return state_ptrs_; }
    const std::vector<const double*>& proj_ptrs() const { return proj_ptrs_; }
    std::vector<int> timesteps() const;
    void clear();

private:
    std::vector<EvalMemoryEntry> entries_;
    std::vector<const double*> state_ptrs_, proj_ptrs_;
};

struct SabEvalScratch {
    LstmEvalScratch lstm;
    Tensor h_hat, c_next, query, summary, h_next, yv1, yv2, ysum;
    Tensor raw, sparse;
    std::vector<std::int32_t> theta;
    void resize(int hidden, int batch);
};

struct SabEvalStepConfig {
    int k_top = 1;
    int k_att = 1;
    bool attention = true;
    bool dense = false;
};

/// Mirror of sab_step over plain tensors (same kernels, same order, bitwise
/// identical values). h and c are updated in place; y_out may be null when no
/// output is needed this step.
void sab_step_eval(const LstmWeights& lstm, const AttentionWeights& attn, EvalMemoryBank& bank,
                   Tensor& h, Tensor& c, const Tensor& x, int t, const SabEvalStepConfig& cfg,
                   SabEvalScratch& s, Tensor* y_out, AttentionTrace* trace);

}  // namespace sab
