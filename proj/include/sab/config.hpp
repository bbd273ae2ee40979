#pragma once

#include <cstdint>
#include <string>

#include "sab/replay.hpp"
#include "sab/tasks.hpp"

namespace sab {

/// Hyperparameters and run controls for one training run.
struct SabConfig {
    std::string task = "copy";  // copy | adding
    int T = 100;
    int k_top = 5;
    int k_att = 1;
    int k_trunc = 5;
    int hidden = 128;
    double lr = 1e-3;
    int batch = 64;
    std::int64_t max_steps = 50000;
    std::uint64_t seed = 0;
    ReplayMode mode = ReplayMode::Sab;
    double clip_norm = 0.0;   // 0 = no clipping
    int skip_depth_cap = 0;   // 0 = unlimited

    // evaluation cadence and stopping
    int eval_every = 50;
    int eval_batches = 4;
    int patience = 10;         // evaluations without improvement; <=0 disables
    double stop_acc10 = 0.999; // copy target stop (0 disables)
    double stop_ce10 = 0.005;
    double stop_loss = 5e-4;   // adding target stop (0 disables)

    void validate() const;  // throws std::invalid_argument
    int input_dim() const { return task == "copy" ? kCopyInputDim : kAddingInputDim; }
    int out_classes() const { return task == "copy" ? kCopyClasses : 1; }
    int seq_len() const { return task == "copy" ? T + 20 : T; }
    ReplayPolicy policy() const { return {k_trunc, mode, skip_depth_cap}; }

    std::string to_json() const;
    static SabConfig from_json(const std::string& text);
};

/// Held-out evaluation stream: disjoint from every training-step seed.
inline constexpr std::uint64_t kEvalSeedOffset = 1000000;

TaskBatch make_batch(const SabConfig& cfg, int T, std::uint64_t seed);

}  // namespace sab
