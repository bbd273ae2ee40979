#include "sab/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sab {

using nlohmann::json;

void SabConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
    if (task != "copy" && task != "adding") fail("task must be copy or adding");
    if (task == "copy" && T < 1) fail("copy needs T >= 1");
    if (task == "adding" && T < 2) fail("adding needs T >= 2");
    if (k_top < 1) fail("k_top must be >= 1");
    if (k_att < 1) fail("k_att must be >= 1");
    if (k_trunc < 1) fail("k_trunc must be >= 1");
    if (hidden < 1) fail("hidden must be >= 1");
    if (batch < 1) fail("batch must be >= 1");
    if (max_steps < 1) fail("steps must be >= 1");
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (clip_norm < 0.0) fail("clip must be >= 0");
    if (eval_every < 1) fail("eval-every must be >= 1");
    if (eval_batches < 1) fail("eval-batches must be >= 1");
}

std::string SabConfig::to_json() const {
    json j{{"task", task},
           {"T", T},
           {"k_top", k_top},
           {"k_att", k_att},
           {"k_trunc", k_trunc},
           {"hidden", hidden},
           {"lr", lr},
           {"batch", batch},
           {"max_steps", max_steps},
           {"seed", seed},
           {"mode", replay_mode_name(mode)},
           {"clip_norm", clip_norm},
           {"skip_depth_cap", skip_depth_cap},
           {"eval_every", eval_every},
           {"eval_batches", eval_batches},
           {"patience", patience},
           {"stop_acc10", stop_acc10},
           {"stop_ce10", stop_ce10},
           {"stop_loss", stop_loss}};
    return j.dump();
}

SabConfig SabConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    SabConfig c;
    c.task = j.at("task").get<std::string>();
    c.T = j.at("T").get<int>();
    c.k_top = j.at("k_top").get<int>();
    c.k_att = j.at("k_att").get<int>();
    c.k_trunc = j.at("k_trunc").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.lr = j.at("lr").get<double>();
    c.batch = j.at("batch").get<int>();
    c.max_steps = j.at("max_steps").get<std::int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto mode = parse_replay_mode(j.at("mode").get<std::string>());
    if (!mode) throw std::invalid_argument("config: unknown mode");
    c.mode = *mode;
    c.clip_norm = j.value("clip_norm", 0.0);
    c.skip_depth_cap = j.value("skip_depth_cap", 0);
    c.eval_every = j.value("eval_every", 50);
    c.eval_batches = j.value("eval_batches", 4);
    c.patience = j.value("patience", 10);
    c.stop_acc10 = j.value("stop_acc10", 0.999);
    c.stop_ce10 = j.value("stop_ce10", 0.005);
    c.stop_loss = j.value("stop_loss", 5e-4);
    return c;
}

TaskBatch make_batch(const SabConfig& cfg, int T, std::uint64_t seed) {
    return cfg.task == "copy" ? gen_copy(T, cfg.batch, seed) : gen_adding(T, cfg.batch, seed);
}

namespace {

std::string strip_known_suffix(const std::string& path) {
    for (const char* suffix : {".manifest", ".bin"}) {
        const std::string s(suffix);
        if (path.size() > s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0)
            return path.substr(0, path.size() - s.size());
    }
    return path;
}

}  // namespace

void save_checkpoint(const std::string& prefix, const SabWeights& weights,
                     const SabConfig& cfg) {
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: cannot write " + prefix + ".bin");
    std::ofstream man(prefix + ".manifest");
    if (!man) throw std::runtime_error("checkpoint: cannot write " + prefix + ".manifest");

    man << "# sabtrack checkpoint v1\n";
    man << "# config " << cfg.to_json() << "\n";
    std::size_t offset = 0;
    for (const auto& [name, t] : weights.named()) {
        bin.write(reinterpret_cast<const char*>(t->data()),
                  std::streamsize(t->size() * sizeof(double)));
        man << name << " " << t->rows() << " " << t->cols() << " " << offset << "\n";
        offset += t->size();
    }
    if (!bin || !man) throw std::runtime_error("checkpoint: short write under " + prefix);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const std::string prefix = strip_known_suffix(path);
    std::ifstream man(prefix + ".manifest");
    if (!man) throw std::runtime_error("checkpoint: cannot open " + prefix + ".manifest");

    LoadedCheckpoint out;
    bool have_config = false;
    struct Row {
        std::string name;
        int rows, cols;
        std::size_t offset;
    };
    std::vector<Row> rows;
    std::string line;
    while (std::getline(man, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string tag = "# config ";
            if (line.rfind(tag, 0) == 0) {
                out.config = SabConfig::from_json(line.substr(tag.size()));
                have_config = true;
            }
            continue;
        }
        std::istringstream is(line);
        Row r;
        if (!(is >> r.name >> r.rows >> r.cols >> r.offset))
            throw std::runtime_error("checkpoint: bad manifest line: " + line);
        rows.push_back(r);
    }
    if (!have_config) throw std::runtime_error("checkpoint: manifest missing config header");

    const ModelDims dims{out.config.hidden, out.config.input_dim(), out.config.out_classes()};
    out.weights = SabWeights::init(dims, out.config.seed);

    std::ifstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: cannot open " + prefix + ".bin");
    auto named = out.weights.named();
    for (const Row& r : rows) {
        Tensor* dst = nullptr;
        for (auto& [name, t] : named)
            if (name == r.name) dst = t;
        if (!dst) throw std::runtime_error("checkpoint: unknown tensor " + r.name);
        if (dst->rows() != r.rows || dst->cols() != r.cols)
            throw std::runtime_error("checkpoint: shape mismatch for " + r.name);
        bin.seekg(std::streamoff(r.offset * sizeof(double)));
        bin.read(reinterpret_cast<char*>(dst->data()),
                 std::streamsize(dst->size() * sizeof(double)));
        if (!bin) throw std::runtime_error("checkpoint: short read for " + r.name);
    }
    return out;
}

}  // namespace sab
