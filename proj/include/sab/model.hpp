#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sab/cell.hpp"
#include "sab/tasks.hpp"

namespace sab {

struct ModelDims {
    int hidden = 128;
    int input = kCopyInputDim;
    int out_classes = kCopyClasses;  // task head rows (1 for adding)
};

/// All trainable tensors. Weight matrices start uniform in
/// [-1/sqrt(hidden), 1/sqrt(hidden)] (draw order = named() order); biases
/// start at zero except the LSTM forget gate.
struct SabWeights {
    ModelDims dims;
    LstmWeights lstm;
    AttentionWeights attn;
    Tensor head_w, head_b;

    static SabWeights init(const ModelDims& dims, std::uint64_t seed);
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

/// Parameter gradients aligned with SabWeights::named() order.
struct GradSet {
    std::vector<Tensor> grads;
    double global_norm() const;
    void scale_down_to(double max_norm);  // no-op when the norm is within bounds
    bool all_finite() const;
};

/// Builds the unrolled graph for one batch under a replay policy and runs the
/// deferred backward from the total loss. Reused across steps; the tape is
/// rebuilt every call (the skip topology is data-dependent).
class TrainGraph {
public:
    double forward_loss(const SabWeights& w, const TaskBatch& b, const ReplayPolicy& policy,
                        int k_top, int k_att);

    struct Result {
        double loss = 0;
        GradSet grads;
    };
    Result forward_backward(const SabWeights& w, const TaskBatch& b, const ReplayPolicy& policy,
                            int k_top, int k_att);

    /// Builds forward only and returns the loss node; state exposed for tests.
    NodeId build(const SabWeights& w, const TaskBatch& b, const ReplayPolicy& policy, int k_top,
                 int k_att, std::vector<AttentionTrace>* traces = nullptr);
    Tape& tape() { return tape_; }
    const std::vector<NodeId>& param_ids() const { return param_ids_; }
    const std::vector<NodeId>& input_ids() const { return input_ids_; }
    const std::vector<NodeId>& logit_ids() const { return logit_ids_; }

private:
    Tape tape_;
    std::vector<NodeId> param_ids_, input_ids_, logit_ids_;
};

struct EvalOptions {
    int k_top = 1;
    int k_att = 1;
    bool attention = true;
    bool dense = false;
    bool keep_logits = false;
    bool collect_traces = false;
};

struct EvalResult {
    CopyMetrics copy;                    // copy task
    double mse = 0;                      // adding task
    Tensor predictions;                  // adding: 1 x batch
    std::vector<Tensor> logits;          // when keep_logits
    std::vector<AttentionTrace> traces;  // when collect_traces (attention steps only)
};

/// Forward-only evaluation over plain tensors; kernel-for-kernel identical to
/// the tape path, with memory growing freely with sequence length.
class EvalRunner {
public:
    EvalResult run(const SabWeights& w, const TaskBatch& b, const EvalOptions& opt);

private:
    SabEvalScratch scratch_;
    EvalMemoryBank bank_;
};

}  // namespace sab
