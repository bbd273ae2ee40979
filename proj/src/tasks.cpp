#include "sab/tasks.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "sab/rng.hpp"

namespace sab {

TaskBatch gen_copy(int T, int batch, std::uint64_t seed) {
    if (T < 1) throw std::invalid_argument("gen_copy: T must be >= 1");
    if (batch < 1) throw std::invalid_argument("gen_copy: batch must be >= 1");
    Rng rng(seed);
    TaskBatch b;
    b.task = "copy";
    b.T = T;
    b.seq_len = T + 20;
    b.batch = batch;
    b.input_dim = kCopyInputDim;
    b.seed = seed;
    b.inputs.assign(b.seq_len, Tensor(kCopyInputDim, batch));
    b.targets.assign(b.seq_len, std::vector<std::int32_t>(batch, kCopyBlank));
    b.loss_mask.assign(b.seq_len, 1.0);

    // per row: 10 digit draws; layout is fixed (digits, blanks, marker, blanks)
    for (int col = 0; col < batch; ++col) {
        int digits[10];
        for (int& d : digits) d = 1 + int(rng.next_below(8));
        for (int t = 1; t <= b.seq_len; ++t) {
            int symbol = kCopyBlank;
            if (t <= 10) symbol = digits[t - 1];
            else if (t == T + 11) symbol = kCopyMarker;
            b.inputs[t - 1](symbol, col) = 1.0;
            if (t >= T + 11) b.targets[t - 1][col] = digits[t - (T + 11)];
        }
    }
    return b;
}

TaskBatch gen_adding(int T, int batch, std::uint64_t seed) {
    if (T < 2) throw std::invalid_argument("gen_adding: T must be >= 2");
    if (batch < 1) throw std::invalid_argument("gen_adding: batch must be >= 1");
    Rng rng(seed);
    TaskBatch b;
    b.task = "adding";
    b.T = T;
    b.seq_len = T;
    b.batch = batch;
    b.input_dim = kAddingInputDim;
    b.seed = seed;
    b.inputs.assign(T, Tensor(kAddingInputDim, batch));
    b.target_value = Tensor(1, batch);
    b.loss_mask.assign(T, 0.0);
    b.loss_mask.back() = 1.0;

    const int lo_count = (T + 1) / 2;  // positions 0..lo_count-1 are the first half
    for (int col = 0; col < batch; ++col) {
        std::vector<double> vals(T);
        for (int t = 0; t < T; ++t) {
            vals[t] = rng.next_unit();
            b.inputs[t](0, col) = vals[t];
        }
        const int p1 = int(rng.next_below(std::uint64_t(lo_count)));
        const int p2 = lo_count + int(rng.next_below(std::uint64_t(T - lo_count)));
        b.inputs[p1](1, col) = 1.0;
        b.inputs[p2](1, col) = 1.0;
        b.target_value(0, col) = vals[p1] + vals[p2];
    }
    return b;
}

CopyMetrics copy_metrics(const std::vector<Tensor>& logits,
                         const std::vector<std::vector<std::int32_t>>& targets) {
    if (logits.size() != targets.size())
        throw std::invalid_argument("copy_metrics: logits/targets length mismatch");
    const int steps = int(logits.size());
    if (steps < 10) throw std::invalid_argument("copy_metrics: need at least 10 positions");

    CopyMetrics m;
    double ce_all = 0.0, ce_last = 0.0;
    long correct = 0, counted_all = 0, counted_last = 0;
    for (int t = 0; t < steps; ++t) {
        const Tensor& l = logits[t];
        const auto& tg = targets[t];
        const int v = l.rows(), batch = l.cols();
        const bool in_last10 = t >= steps - 10;
        for (int b = 0; b < batch; ++b) {
            double mx = l(0, b);
            int arg = 0;
            for (int r = 1; r < v; ++r)
                if (l(r, b) > mx) {
                    mx = l(r, b);
                    arg = r;
                }
            double lse = 0.0;
            for (int r = 0; r < v; ++r) lse += std::exp(l(r, b) - mx);
            const double ce = std::log(lse) - (l(tg[b], b) - mx);
            ce_all += ce;
            ++counted_all;
            if (in_last10) {
                ce_last += ce;
                ++counted_last;
                if (arg == tg[b]) ++correct;
            }
        }
    }
    m.ce = ce_all / counted_all;
    m.ce10 = ce_last / counted_last;
    m.acc10 = double(correct) / counted_last;
    return m;
}

double adding_loss(double prediction, double target) {
    const double d = prediction - target;
    return d * d;
}

void dump_batch(const TaskBatch& b, std::ostream& os) {
    os << b.task << "," << b.T << "," << b.batch << "," << b.seed << "\n";
    for (int col = 0; col < b.batch; ++col) {
        for (int t = 0; t < b.seq_len; ++t) {
            if (b.task == "copy") {
                int symbol = 0;
                for (int r = 0; r < b.input_dim; ++r)
                    if (b.inputs[t](r, col) == 1.0) symbol = r;
                os << col << "," << t + 1 << "," << symbol << "\n";
            } else {
                os << col << "," << t + 1 << "," << b.inputs[t](0, col) << ","
                   << int(b.inputs[t](1, col)) << "\n";
            }
        }
    }
}

}  // namespace sab
