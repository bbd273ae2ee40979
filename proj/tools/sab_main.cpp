#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sab/checkpoint.hpp"
#include "sab/gradcheck.hpp"
#include "sab/math_kernels.hpp"
#include "sab/train.hpp"
#include "sab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const fs::path& dir, const sab::SabConfig& cfg, const std::string& started,
                    const std::string& ended, const sab::TrainResult* result) {
    json j;
    j["version"] = sab::kVersion;
    j["started_at"] = started;
    j["ended_at"] = ended.empty() ? json() : json(ended);
    j["config"] = json::parse(cfg.to_json());
    j["outputs"] = {{"metrics", "metrics.jsonl"},
                    {"checkpoint", "checkpoint"},
                    {"manifest", "manifest.json"}};
    if (result) {
        j["steps"] = result->steps;
        j["stop_reason"] = result->stop_reason;
        j["diverged"] = result->diverged;
        if (!result->diverged) {
            if (cfg.task == "copy") {
                j["final"] = {{"acc10", result->final_record.acc10},
                              {"ce10", result->final_record.ce10},
                              {"ce", result->final_record.ce}};
            } else {
                j["final"] = {{"eval_loss", result->final_record.eval_loss}};
            }
        }
    }
    std::ofstream(dir / "manifest.json") << j.dump(2) << "\n";
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::string cur;
    for (char ch : text + ",") {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return out;
}

struct TrainFlags {
    sab::SabConfig cfg;
    std::string mode = "sab";
    std::string out_dir = "sab-run";
    bool k_top_given = false;
};

int run_train(TrainFlags& f) {
    const auto mode = sab::parse_replay_mode(f.mode);
    if (!mode) {
        std::cerr << "error: unknown mode '" << f.mode << "'\n";
        return kExitUsage;
    }
    f.cfg.mode = *mode;
    if (f.cfg.mode == sab::ReplayMode::Dense && f.k_top_given) {
        std::cerr << "error: --mode dense attends to the whole memory; --k-top is invalid\n";
        return kExitUsage;
    }
    try {
        f.cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    const fs::path dir(f.out_dir);
    fs::create_directories(dir);
    const std::string started = utc_now();
    write_manifest(dir, f.cfg, started, "", nullptr);

    std::ofstream metrics(dir / "metrics.jsonl");
    std::cout << "train: task=" << f.cfg.task << " T=" << f.cfg.T << " mode=" << f.mode
              << " k_top=" << f.cfg.k_top << " k_att=" << f.cfg.k_att
              << " k_trunc=" << f.cfg.k_trunc << " hidden=" << f.cfg.hidden
              << " batch=" << f.cfg.batch << " out=" << dir.string() << "\n";

    const sab::TrainResult result = sab::train(f.cfg, &metrics);
    sab::save_checkpoint((dir / "checkpoint").string(), result.weights, f.cfg);
    write_manifest(dir, f.cfg, started, utc_now(), &result);

    if (result.diverged) {
        std::cerr << "diverged at step " << result.steps << " (non-finite loss)\n";
        return kExitDiverged;
    }
    std::cout << "done: steps=" << result.steps << " stop=" << result.stop_reason;
    if (f.cfg.task == "copy")
        std::cout << " acc10=" << result.final_record.acc10
                  << " ce10=" << result.final_record.ce10;
    else
        std::cout << " eval_loss=" << result.final_record.eval_loss;
    std::cout << "\n";
    return kExitOk;
}

int run_transfer(const std::string& ckpt, const std::string& t_list, const std::string& out_dir,
                 int batches) {
    sab::LoadedCheckpoint loaded;
    try {
        loaded = sab::load_checkpoint(ckpt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    sab::SabConfig cfg = loaded.config;
    if (batches > 0) cfg.eval_batches = batches;
    const std::vector<int> ts = parse_int_list(t_list);
    if (ts.empty()) {
        std::cerr << "error: empty --T-list\n";
        return kExitUsage;
    }

    const auto rows = sab::transfer_eval(loaded.weights, cfg, ts);
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "transfer.csv");
    csv << "T,acc10\n";
    std::printf("%8s  %s\n", "T", cfg.task == "copy" ? "acc10" : "eval_loss");
    for (const auto& [T, v] : rows) {
        std::printf("%8d  %.4f\n", T, v);
        csv << T << "," << v << "\n";
    }
    std::cout << "wrote " << (fs::path(out_dir) / "transfer.csv").string() << "\n";
    return kExitOk;
}

int run_dump_attention(const std::string& ckpt, const std::string& task, int T,
                       std::uint64_t seed, const std::string& out_dir) {
    sab::LoadedCheckpoint loaded;
    try {
        loaded = sab::load_checkpoint(ckpt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    sab::SabConfig cfg = loaded.config;
    if (!task.empty() && task != cfg.task) {
        std::cerr << "error: checkpoint was trained on task '" << cfg.task << "'\n";
        return kExitUsage;
    }
    if (T > 0) cfg.T = T;
    if (!cfg.policy().attention_enabled()) {
        std::cerr << "error: checkpoint mode '" << sab::replay_mode_name(cfg.mode)
                  << "' has no attention path\n";
        return kExitUsage;
    }

    const sab::TaskBatch batch = sab::make_batch(cfg, cfg.T, seed + sab::kEvalSeedOffset);
    sab::EvalRunner runner;
    sab::EvalOptions opt;
    opt.k_top = cfg.k_top;
    opt.k_att = cfg.k_att;
    opt.dense = cfg.policy().dense_selection();
    opt.collect_traces = true;
    const sab::EvalResult res = runner.run(loaded.weights, batch, opt);

    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "attention.csv";
    std::ofstream csv(path);
    csv << "t,mem_timestep,weight\n";
    for (const auto& tr : res.traces) {
        const int m = tr.normalized.rows(), bsz = tr.normalized.cols();
        for (int i = 0; i < m; ++i) {
            double w = 0.0;
            for (int b = 0; b < bsz; ++b) w += tr.normalized(i, b);
            w /= bsz;
            if (w > 0.0)
                csv << tr.timestep << "," << tr.mem_timesteps[i] << "," << w << "\n";
        }
    }
    std::cout << "wrote " << path.string() << " (" << res.traces.size()
              << " timesteps with attention)\n";
    return kExitOk;
}

int run_gradcheck(std::uint64_t seed, int size, int T, int seeds, double tol) {
    const sab::ReplayMode modes[] = {sab::ReplayMode::Sab, sab::ReplayMode::NoMentalUpdates,
                                     sab::ReplayMode::Dense, sab::ReplayMode::FullBptt};
    double worst = 0.0;
    std::string worst_desc;
    for (int s = 0; s < seeds; ++s) {
        for (const auto mode : modes) {
            const auto rep = sab::gradcheck_mode(mode, seed + std::uint64_t(s), size, T);
            std::printf("mode=%-10s seed=%llu max_rel_err=%.3e (%s)\n",
                        sab::replay_mode_name(mode), (unsigned long long)rep.seed_used,
                        rep.max_rel_err, rep.worst_param.c_str());
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_desc = std::string(sab::replay_mode_name(mode)) + " " + rep.worst_param;
            }
        }
    }
    std::printf("max relative error: %.3e (tolerance %.1e)\n", worst, tol);
    if (worst >= tol) {
        std::cerr << "gradcheck FAILED at " << worst_desc << "\n";
        return kExitCheckFailed;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    sab::kern::pin_blas_single_thread();

    CLI::App app{"sequence learner with sparse attentive backtracking"};
    app.set_version_flag("--version", std::string(sab::kVersion));
    app.require_subcommand(1);

    // train
    TrainFlags tf;
    auto* train = app.add_subcommand("train", "train a model and write run artifacts");
    train->add_option("--task", tf.cfg.task, "copy | adding")->required();
    train->add_option("--T", tf.cfg.T, "task length parameter")->required();
    auto* ktop_opt = train->add_option("--k-top", tf.cfg.k_top, "memories attended per step");
    train->add_option("--k-att", tf.cfg.k_att, "stride between stored microstates");
    train->add_option("--k-trunc", tf.cfg.k_trunc, "truncation window length");
    train->add_option("--hidden", tf.cfg.hidden, "hidden units");
    train->add_option("--lr", tf.cfg.lr, "Adam learning rate");
    train->add_option("--batch", tf.cfg.batch, "batch size");
    train->add_option("--steps", tf.cfg.max_steps, "max optimizer steps");
    train->add_option("--seed", tf.cfg.seed, "run seed");
    train->add_option("--mode", tf.mode, "sab | no-mu | dense | full-bptt | tbptt");
    train->add_option("--clip", tf.cfg.clip_norm, "global-norm gradient clip (0 = off)");
    train->add_option("--skip-depth-cap", tf.cfg.skip_depth_cap,
                      "cap on nested skip replay (0 = unlimited)");
    train->add_option("--out", tf.out_dir, "output directory");
    train->add_option("--eval-every", tf.cfg.eval_every, "steps between evaluations");
    train->add_option("--eval-batches", tf.cfg.eval_batches, "held-out batches per evaluation");
    train->add_option("--patience", tf.cfg.patience,
                      "evaluations without improvement before stopping (0 = off)");
    train->add_option("--stop-acc10", tf.cfg.stop_acc10, "copy: stop at this acc10 (0 = off)");
    train->add_option("--stop-ce10", tf.cfg.stop_ce10, "copy: ce10 required at the stop");
    train->add_option("--stop-loss", tf.cfg.stop_loss, "adding: stop at this eval loss (0 = off)");

    // transfer
    std::string ckpt, t_list, out_dir = ".";
    int batches = 0;
    auto* transfer = app.add_subcommand("transfer", "evaluate a checkpoint at other lengths");
    transfer->add_option("--ckpt", ckpt, "checkpoint prefix or file")->required();
    transfer->add_option("--T-list", t_list, "comma-separated lengths")->required();
    transfer->add_option("--out", out_dir, "directory for transfer.csv");
    transfer->add_option("--batches", batches, "eval batches per length");

    // dump-attention
    std::string da_ckpt, da_task, da_out = ".";
    int da_T = 0;
    std::uint64_t da_seed = 0;
    auto* dump = app.add_subcommand("dump-attention", "write per-timestep attention weights");
    dump->add_option("--ckpt", da_ckpt, "checkpoint prefix or file")->required();
    dump->add_option("--task", da_task, "must match the checkpoint task");
    dump->add_option("--T", da_T, "override task length");
    dump->add_option("--seed", da_seed, "held-out batch seed");
    dump->add_option("--out", da_out, "directory for attention.csv");

    // gradcheck
    std::uint64_t gc_seed = 0;
    int gc_size = 8, gc_T = 12, gc_seeds = 1;
    double gc_tol = 1e-4;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the backward");
    gradcheck->add_option("--seed", gc_seed, "base seed");
    gradcheck->add_option("--size", gc_size, "hidden units");
    gradcheck->add_option("--T", gc_T, "sequence length");
    gradcheck->add_option("--seeds", gc_seeds, "number of seeds");
    gradcheck->add_option("--tol", gc_tol, "max relative error allowed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    tf.k_top_given = ktop_opt->count() > 0;
    try {
        if (train->parsed()) return run_train(tf);
        if (transfer->parsed()) return run_transfer(ckpt, t_list, out_dir, batches);
        if (dump->parsed()) return run_dump_attention(da_ckpt, da_task, da_T, da_seed, da_out);
        if (gradcheck->parsed()) return run_gradcheck(gc_seed, gc_size, gc_T, gc_seeds, gc_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
