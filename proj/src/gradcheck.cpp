#include "sab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sab/model.hpp"
#include "sab/rng.hpp"

namespace sab {

namespace {

constexpr int kInputDim = 6;
constexpr int kClasses = 5;
constexpr int kBatch = 2;
constexpr double kEps = 1e-5;
constexpr double kMarginTol = 1e-3;

TaskBatch synthetic_batch(int T, std::uint64_t seed) {
    Rng rng(seed + 7);
    TaskBatch b;
    b.task = "copy";  // classification losses at every step
    b.T = T;
    b.seq_len = T;
    b.batch = kBatch;
    b.input_dim = kInputDim;
    b.seed = seed;
    b.inputs.assign(T, Tensor(kInputDim, kBatch));
    b.targets.assign(T, std::vector<std::int32_t>(kBatch, 0));
    b.loss_mask.assign(T, 1.0);
    for (int t = 0; t < T; ++t) {
        for (int r = 0; r < kInputDim; ++r)
            for (int c = 0; c < kBatch; ++c) b.inputs[t](r, c) = rng.next_uniform(-1.0, 1.0);
        for (int c = 0; c < kBatch; ++c) b.targets[t][c] = int(rng.next_below(kClasses));
    }
    return b;
}

// Smallest gap between raw weights adjacent to the threshold rank; the
// finite-difference step must not flip the selection or the threshold index.
double selection_margin(const std::vector<AttentionTrace>& traces, int k_top, bool dense) {
    double margin = 1e300;
    for (const auto& tr : traces) {
        if (tr.timestep == 0 || tr.raw.empty()) continue;
        const int m = tr.raw.rows();
        const int k_eff = dense ? m : k_top;
        std::vector<double> col(m);
        for (int c = 0; c < tr.raw.cols(); ++c) {
            for (int i = 0; i < m; ++i) col[i] = tr.raw(i, c);
            std::sort(col.begin(), col.end(), std::greater<>());
            if (m > k_eff) {
                margin = std::min(margin, col[k_eff - 1] - col[k_eff]);
                if (k_eff + 1 < m) margin = std::min(margin, col[k_eff] - col[k_eff + 1]);
            } else if (m >= 2) {
                margin = std::min(margin, col[m - 2] - col[m - 1]);
            }
        }
    }
    return margin;
}

}  // namespace

GradcheckReport gradcheck_mode(ReplayMode mode, std::uint64_t seed, int hidden, int T) {
    GradcheckReport rep;
    rep.mode = mode;

    const int k_top = 2, k_att = 1, k_trunc = 3;
    const ReplayPolicy policy{k_trunc, mode, 0};
    const ModelDims dims{hidden, kInputDim, kClasses};

    SabWeights w;
    TaskBatch batch;
    TrainGraph graph;
    std::uint64_t s = seed;
    for (int attempt = 0;; ++attempt) {
        w = SabWeights::init(dims, s);
        batch = synthetic_batch(T, s);
        if (!policy.attention_enabled()) break;
        std::vector<AttentionTrace> traces;
        graph.build(w, batch, policy, k_top, k_att, &traces);
        if (selection_margin(traces, k_top, policy.dense_selection()) >= kMarginTol) break;
        if (attempt >= 25) break;  // give up bumping; the check itself will tell
        s += 1000;
        ++rep.reseeds;
    }
    rep.seed_used = s;

    const auto analytic = graph.forward_backward(w, batch, policy, k_top, k_att);
    auto named = w.named();
    for (std::size_t p = 0; p < named.size(); ++p) {
        Tensor& t = *named[p].second;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double keep = t[i];
            t[i] = keep + kEps;
            const double lp = graph.forward_loss(w, batch, policy, k_top, k_att);
            t[i] = keep - kEps;
            const double lm = graph.forward_loss(w, batch, policy, k_top, k_att);
            t[i] = keep;
            const double numeric = (lp - lm) / (2.0 * kEps);
            const double a = analytic.grads.grads[p][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param =
                    named[p].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return rep;
}

}  // namespace sab
