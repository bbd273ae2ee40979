#include "sab/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace sab {

void adam_update(Tensor& param, const Tensor& grad, AdamState& st, double lr) {
    check_same_shape(param, grad, "adam_update");
    if (st.m.empty()) {
        st.m = Tensor(param.rows(), param.cols());
        st.v = Tensor(param.rows(), param.cols());
    }
    check_same_shape(param, st.m, "adam_update");
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(beta2, double(st.t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
        st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void write_jsonl_record(std::ostream& os, const std::string& task, const TrainRecord& r) {
    char buf[512];
    if (r.diverged) {
        std::snprintf(buf, sizeof buf,
                      R"({"step":%lld,"diverged":true,"wall_ms":%.1f})",
                      (long long)r.step, r.wall_ms);
    } else if (task == "copy") {
        std::snprintf(
            buf, sizeof buf,
            R"({"step":%lld,"loss":%.8g,"acc10":%.6f,"ce10":%.8g,"ce":%.8g,"wall_ms":%.1f})",
            (long long)r.step, r.loss, r.acc10, r.ce10, r.ce, r.wall_ms);
    } else {
        std::snprintf(buf, sizeof buf,
                      R"({"step":%lld,"loss":%.8g,"eval_loss":%.8g,"wall_ms":%.1f})",
                      (long long)r.step, r.loss, r.eval_loss, r.wall_ms);
    }
    os << buf << "\n" << std::flush;
}

EvalSummary evaluate_model(const SabWeights& w, const SabConfig& cfg, int T, int batches) {
    EvalRunner runner;
    EvalOptions opt;
    opt.k_top = cfg.k_top;
    opt.k_att = cfg.k_att;
    opt.attention = cfg.policy().attention_enabled();
    opt.dense = cfg.policy().dense_selection();
    EvalSummary s;
    for (int j = 0; j < batches; ++j) {
        const TaskBatch b = make_batch(cfg, T, cfg.seed + kEvalSeedOffset + std::uint64_t(j));
        const EvalResult r = runner.run(w, b, opt);
        if (cfg.task == "copy") {
            s.acc10 += r.copy.acc10;
            s.ce10 += r.copy.ce10;
            s.ce += r.copy.ce;
        } else {
            s.eval_loss += r.mse;
        }
    }
    s.acc10 /= batches;
    s.ce10 /= batches;
    s.ce /= batches;
    s.eval_loss /= batches;
    return s;
}

TrainResult train(const SabConfig& cfg, std::ostream* metrics_jsonl) {
    cfg.validate();
    const ModelDims dims{cfg.hidden, cfg.input_dim(), cfg.out_classes()};

    TrainResult out;
    out.weights = SabWeights::init(dims, cfg.seed);
    auto named = out.weights.named();
    std::vector<AdamState> adam(named.size());

    TrainGraph graph;
    const ReplayPolicy policy = cfg.policy();
    const auto t0 = std::chrono::steady_clock::now();
    auto wall_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    const bool is_copy = cfg.task == "copy";
    double best_metric = 1e300;
    int evals_since_best = 0;
    out.stop_reason = "max-steps";

    for (std::int64_t step = 0; step < cfg.max_steps; ++step) {
        const TaskBatch batch = make_batch(cfg, cfg.T, cfg.seed + 1 + std::uint64_t(step));
        auto res = graph.forward_backward(out.weights, batch, policy, cfg.k_top, cfg.k_att);
        out.steps = step + 1;

        if (!std::isfinite(res.loss)) {
            TrainRecord r;
            r.step = step + 1;
            r.loss = res.loss;
            r.diverged = true;
            r.wall_ms = wall_ms();
            out.records.push_back(r);
            out.final_record = r;
            out.diverged = true;
            out.stop_reason = "diverged";
            if (metrics_jsonl) write_jsonl_record(*metrics_jsonl, cfg.task, r);
            return out;
        }

        if (cfg.clip_norm > 0.0) res.grads.scale_down_to(cfg.clip_norm);
        for (std::size_t i = 0; i < named.size(); ++i)
            adam_update(*named[i].second, res.grads.grads[i], adam[i], cfg.lr);

        const bool last = step + 1 == cfg.max_steps;
        if ((step + 1) % cfg.eval_every != 0 && !last) continue;

        const EvalSummary ev = evaluate_model(out.weights, cfg, cfg.T, cfg.eval_batches);
        TrainRecord r;
        r.step = step + 1;
        r.loss = res.loss;
        r.acc10 = ev.acc10;
        r.ce10 = ev.ce10;
        r.ce = ev.ce;
        r.eval_loss = ev.eval_loss;
        r.wall_ms = wall_ms();
        out.records.push_back(r);
        out.final_record = r;
        if (metrics_jsonl) write_jsonl_record(*metrics_jsonl, cfg.task, r);

        const double metric = is_copy ? ev.ce10 : ev.eval_loss;
        if (!std::isfinite(metric)) {
            out.diverged = true;
            out.stop_reason = "diverged";
            return out;
        }
        if (metric < best_metric - 1e-9) {
            best_metric = metric;
            evals_since_best = 0;
        } else {
            ++evals_since_best;
        }

        const bool target_hit =
            is_copy ? (cfg.stop_acc10 > 0.0 && ev.acc10 >= cfg.stop_acc10 &&
                       ev.ce10 <= cfg.stop_ce10)
                    : (cfg.stop_loss > 0.0 && ev.eval_loss <= cfg.stop_loss);
        if (target_hit) {
            out.stop_reason = "target";
            return out;
        }
        if (cfg.patience > 0 && evals_since_best >= cfg.patience) {
            out.stop_reason = "patience";
            return out;
        }
    }
    return out;
}

std::vector<std::pair<int, double>> transfer_eval(const SabWeights& w, const SabConfig& cfg,
                                                  const std::vector<int>& T_list) {
    std::vector<std::pair<int, double>> out;
    out.reserve(T_list.size());
    for (int T : T_list) {
        const EvalSummary s = evaluate_model(w, cfg, T, cfg.eval_batches);
        out.emplace_back(T, cfg.task == "copy" ? s.acc10 : s.eval_loss);
    }
    return out;
}

}  // namespace sab
