#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sab/tensor.hpp"

namespace sab {

// Copy-task vocabulary: inputs are one-hot over {blank=0, digits 1..8,
// marker=9}; outputs classify over {blank, digits} only.
inline constexpr int kCopyBlank = 0;
inline constexpr int kCopyMarker = 9;
inline constexpr int kCopyInputDim = 10;
inline constexpr int kCopyClasses = 9;
inline constexpr int kAddingInputDim = 2;  // value row + mask row

/// One generated batch: timestep-major inputs (input_dim x batch per step),
/// per-step class targets (copy) or a final scalar target (adding), and a
/// per-step loss mask.
struct TaskBatch {
    std::string task;  // "copy" | "adding"
    int T = 0;
    int seq_len = 0;
    int batch = 0;
    int input_dim = 0;
    std::uint64_t seed = 0;
    std::vector<Tensor> inputs;
    std::vector<std::vector<std::int32_t>> targets;  // copy: [seq_len][batch]
    Tensor target_value;                             // adding: 1 x batch
    std::vector<double> loss_mask;                   // per step
};

/// Copy memory problem, sequence length T+20: 10 random digits, T blanks, a
/// marker, 9 blanks; the model must emit the digits over the final 10 steps.
TaskBatch gen_copy(int T, int batch, std::uint64_t seed);

/// Adding problem, length T: a value row uniform in [0,1] and a mask row with
/// exactly two ones, one in each half; target is the sum of the two masked
/// values, queried at the final step.
TaskBatch gen_adding(int T, int batch, std::uint64_t seed);

struct CopyMetrics {
    double acc10 = 0;  // argmax accuracy over the final 10 positions
    double ce10 = 0;   // mean cross-entropy (nats) over the final 10
    double ce = 0;     // mean cross-entropy over all positions
};
CopyMetrics copy_metrics(const std::vector<Tensor>& logits,
                         const std::vector<std::vector<std::int32_t>>& targets);

/// Squared error (prediction - target)^2.
double adding_loss(double prediction, double target);

/// Fixture dump: header "task,T,batch,seed", then one line per
/// (row, timestep, symbol) for copy or (row, timestep, value, mask) for adding.
void dump_batch(const TaskBatch& b, std::ostream& os);

}  // namespace sab
