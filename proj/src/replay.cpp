#include "sab/replay.hpp"

namespace sab {

std::optional<ReplayMode> parse_replay_mode(std::string_view name) {
    if (name == "sab") return ReplayMode::Sab;
    if (name == "no-mu") return ReplayMode::NoMentalUpdates;
    if (name == "dense") return ReplayMode::Dense;
    if (name == "full-bptt") return ReplayMode::FullBptt;
    if (name == "tbptt") return ReplayMode::TbpttBaseline;
    return std::nullopt;
}

const char* replay_mode_name(ReplayMode mode) {
    switch (mode) {
        case ReplayMode::Sab: return "sab";
        case ReplayMode::NoMentalUpdates: return "no-mu";
        case ReplayMode::Dense: return "dense";
        case ReplayMode::FullBptt: return "full-bptt";
        case ReplayMode::TbpttBaseline: return "tbptt";
    }
    return "?";
}

NodeId gate_sequential(Tape& tape, NodeId state_prev, int t, const ReplayPolicy& policy) {
    if (!policy.blocks_sequential(t)) return state_prev;
    return tape.block_gradient(state_prev);
}

NodeId gate_memory_read(Tape& tape, NodeId microstate, int mem_depth, const ReplayPolicy& policy) {
    if (!policy.blocks_memory_read(mem_depth)) return microstate;
    return tape.block_gradient(microstate);
}

}  // namespace sab
