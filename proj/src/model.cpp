#include "sab/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sab/math_kernels.hpp"
#include "sab/rng.hpp"

namespace sab {

namespace {

Tensor uniform_matrix(int rows, int cols, double bound, Rng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(-bound, bound);
    return t;
}

}  // namespace

SabWeights SabWeights::init(const ModelDims& dims, std::uint64_t seed) {
    if (dims.hidden < 1 || dims.input < 1 || dims.out_classes < 1)
        throw std::invalid_argument("SabWeights: bad dims");
    Rng rng(seed);
    const int n = dims.hidden;
    const double bound = 1.0 / std::sqrt(double(n));
    SabWeights w;
    w.dims = dims;
    w.lstm = LstmWeights::init(n, dims.input, rng);
    w.attn.w1 = uniform_matrix(n, n, bound, rng);
    w.attn.w2 = uniform_matrix(n, n, bound, rng);
    w.attn.w3 = uniform_matrix(1, n, bound, rng);
    w.attn.v1 = uniform_matrix(n, n, bound, rng);
    w.attn.v2 = uniform_matrix(n, n, bound, rng);
    w.attn.b = Tensor(n, 1);
    w.head_w = uniform_matrix(dims.out_classes, n, bound, rng);
    w.head_b = Tensor(dims.out_classes, 1);
    return w;
}

std::vector<std::pair<std::string, Tensor*>> SabWeights::named() {
    return {{"lstm.wx", &lstm.wx}, {"lstm.wh", &lstm.wh}, {"lstm.b", &lstm.bias},
            {"attn.w1", &attn.w1}, {"attn.w2", &attn.w2}, {"attn.w3", &attn.w3},
            {"out.v1", &attn.v1},  {"out.v2", &attn.v2},  {"out.b", &attn.b},
            {"head.w", &head_w},   {"head.b", &head_b}};
}

std::vector<std::pair<std::string, const Tensor*>> SabWeights::named() const {
    auto mut = const_cast<SabWeights*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

double GradSet::global_norm() const {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    return std::sqrt(sq);
}

void GradSet::scale_down_to(double max_norm) {
    const double norm = global_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double f = max_norm / norm;
    for (Tensor& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= f;
}

bool GradSet::all_finite() const {
    for (const Tensor& g : grads)
        if (!g.all_finite()) return false;
    return true;
}

NodeId TrainGraph::build(const SabWeights& w, const TaskBatch& b, const ReplayPolicy& policy,
                         int k_top, int k_att, std::vector<AttentionTrace>* traces) {
    tape_.clear();
    param_ids_.clear();
    input_ids_.clear();
    logit_ids_.clear();

    for (auto& [name, t] : w.named()) param_ids_.push_back(tape_.leaf(*t));
    const SabCellIds ids{{param_ids_[0], param_ids_[1], param_ids_[2]},
                         param_ids_[3], param_ids_[4], param_ids_[5],
                         param_ids_[6], param_ids_[7], param_ids_[8]};
    const NodeId head_w = param_ids_[9], head_b = param_ids_[10];

    const int n = w.dims.hidden;
    NodeId h = tape_.leaf(Tensor(n, b.batch));
    NodeId c = tape_.leaf(Tensor(n, b.batch));
    TapeMemoryBank bank;

    NodeId target_leaf = -1;
    if (b.task == "adding") target_leaf = tape_.leaf(b.target_value);

    NodeId acc = -1;
    double mask_total = 0.0;
    if (traces) traces->assign(b.seq_len, {});

    for (int t = 1; t <= b.seq_len; ++t) {
        const NodeId x = tape_.leaf(b.inputs[t - 1]);
        input_ids_.push_back(x);
        const double mask = b.loss_mask[t - 1];
        AttentionTrace* trace = traces ? &(*traces)[t - 1] : nullptr;
        const auto step = sab_step(tape_, ids, bank, h, c, x, t, k_top, k_att, policy,
                                   mask != 0.0, trace);
        h = step.h;
        c = step.c;
        if (mask == 0.0) continue;

        const NodeId logits = tape_.add_bias(tape_.matmul(head_w, step.y), head_b);
        logit_ids_.push_back(logits);
        NodeId term;
        if (b.task == "adding")
            term = tape_.mse_mean(logits, target_leaf);
        else
            term = tape_.softmax_xent_mean(logits, b.targets[t - 1]);
        if (mask != 1.0) term = tape_.scale(term, mask);
        acc = acc < 0 ? term : tape_.add(acc, term);
        mask_total += mask;
    }
    if (acc < 0) throw std::invalid_argument("TrainGraph: loss mask selects no steps");
    return tape_.scale(acc, 1.0 / mask_total);
}

double TrainGraph::forward_loss(const SabWeights& w, const TaskBatch& b,
                                const ReplayPolicy& policy, int k_top, int k_att) {
    return tape_.val(build(w, b, policy, k_top, k_att))[0];
}

TrainGraph::Result TrainGraph::forward_backward(const SabWeights& w, const TaskBatch& b,
                                                const ReplayPolicy& policy, int k_top,
                                                int k_att) {
    const NodeId loss = build(w, b, policy, k_top, k_att);
    tape_.backward(loss);
    Result r;
    r.loss = tape_.val(loss)[0];
    r.grads.grads.reserve(param_ids_.size());
    for (NodeId id : param_ids_) r.grads.grads.push_back(tape_.grad_or_zero(id));
    return r;
}

EvalResult EvalRunner::run(const SabWeights& w, const TaskBatch& b, const EvalOptions& opt) {
    const int n = w.dims.hidden;
    const int batch = b.batch;
    bank_.clear();
    scratch_.resize(n, batch);

    Tensor h(n, batch), c(n, batch);
    Tensor y(n, batch), ytmp(w.dims.out_classes, batch);
    const bool is_copy = b.task == "copy";

    EvalResult res;
    std::vector<Tensor> logits;
    const SabEvalStepConfig scfg{opt.k_top, opt.k_att, opt.attention, opt.dense};

    for (int t = 1; t <= b.seq_len; ++t) {
        const bool want = b.loss_mask[t - 1] != 0.0 || (is_copy && opt.keep_logits);
        AttentionTrace trace;
        const bool attended = opt.attention && bank_.count() >= 1;
        sab_step_eval(w.lstm, w.attn, bank_, h, c, b.inputs[t - 1], t, scfg, scratch_,
                      want ? &y : nullptr,
                      (opt.collect_traces && attended) ? &trace : nullptr);
        if (opt.collect_traces && attended) res.traces.push_back(std::move(trace));
        if (!want) continue;

        kern::gemm(false, false, w.dims.out_classes, batch, n, 1.0, w.head_w.data(), n,
                   y.data(), batch, 0.0, ytmp.data(), batch);
        Tensor step_logits(w.dims.out_classes, batch);
        kern::add_bias_rows(ytmp.data(), w.head_b.data(), step_logits.data(),
                            w.dims.out_classes, batch);
        if (is_copy) {
            logits.push_back(std::move(step_logits));
        } else if (t == b.seq_len) {
            res.predictions = std::move(step_logits);
        }
    }

    if (is_copy) {
        res.copy = copy_metrics(logits, b.targets);
        if (opt.keep_logits) res.logits = std::move(logits);
    } else {
        double total = 0.0;
        for (int col = 0; col < batch; ++col)
            total += adding_loss(res.predictions(0, col), b.target_value(0, col));
        res.mse = total / batch;
    }
    return res;
}

}  // namespace sab
