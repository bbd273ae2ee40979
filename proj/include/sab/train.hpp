#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sab/config.hpp"
#include "sab/model.hpp"

namespace sab {

struct TrainRecord {
    std::int64_t step = 0;
    double loss = 0;                     // training batch loss at this step
    double acc10 = 0, ce10 = 0, ce = 0;  // copy eval
    double eval_loss = 0;                // adding eval
    double wall_ms = 0;
    bool diverged = false;
};

struct AdamState {
    Tensor m, v;
    std::int64_t t = 0;
};

/// Standard Adam with beta1=0.9, beta2=0.999, eps=1e-8, bias-corrected moments.
void adam_update(Tensor& param, const Tensor& grad, AdamState& st, double lr);

struct TrainResult {
    SabWeights weights;
    std::vector<TrainRecord> records;
    std::int64_t steps = 0;  // optimizer steps actually run
    bool diverged = false;
    std::string stop_reason;  // target | patience | max-steps | diverged
    TrainRecord final_record;
};

/// Full optimization loop: generate batch, forward under the replay policy,
/// deferred backward, optional global-norm clip, Adam. Evaluates on a fixed
/// held-out stream every eval_every steps, emitting one JSONL record per
/// evaluation when a stream is given. Bitwise reproducible for a fixed
/// (seed, config) on one platform.
TrainResult train(const SabConfig& cfg, std::ostream* metrics_jsonl);

struct EvalSummary {
    double acc10 = 0, ce10 = 0, ce = 0;  // copy
    double eval_loss = 0;                // adding
};

/// Held-out evaluation at sequence parameter T (eval seeds, eval_batches batches).
EvalSummary evaluate_model(const SabWeights& w, const SabConfig& cfg, int T, int batches);

/// Per-T acc10 on fresh held-out batches; memory grows with T, no retraining.
std::vector<std::pair<int, double>> transfer_eval(const SabWeights& w, const SabConfig& cfg,
                                                  const std::vector<int>& T_list);

void write_jsonl_record(std::ostream& os, const std::string& task, const TrainRecord& r);

}  // namespace sab
