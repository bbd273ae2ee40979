#pragma once

#include <optional>
#include <string_view>

#include "sab/tape.hpp"

namespace sab {

enum class ReplayMode { Sab, NoMentalUpdates, Dense, FullBptt, TbpttBaseline };

std::optional<ReplayMode> parse_replay_mode(std::string_view name);
const char* replay_mode_name(ReplayMode mode);

/// Decides which edges of the unrolled graph carry gradient. Sequential
/// truncation happens at fixed absolute window boundaries (multiples of
/// k_trunc, 1-based steps); a stored microstate read through the attention
/// path passes gradient into its producer unless mental updates are off, so
/// replay continues back to that microstate's own window boundary.
struct ReplayPolicy {
    int k_trunc = 1;
    ReplayMode mode = ReplayMode::Sab;
    int skip_depth_cap = 0;  // 0 = unlimited nesting through chained skip reads

    bool attention_enabled() const { return mode != ReplayMode::TbpttBaseline; }
    bool dense_selection() const { return mode == ReplayMode::Dense; }

    /// True when the edge from step t back to t-1 crosses a window boundary.
    bool blocks_sequential(int t) const {
        if (mode == ReplayMode::FullBptt) return false;
        return t >= 2 && (t - 1) % k_trunc == 0;
    }
    bool blocks_memory_read(int mem_depth) const {
        if (mode == ReplayMode::NoMentalUpdates) return true;
        return skip_depth_cap > 0 && mem_depth >= skip_depth_cap;
    }
};

/// Gate on the sequential edge entering step t (applies to both h and c).
/// Inside a window the node passes through untouched; at a boundary a
/// gradient block is inserted (forward value unchanged).
NodeId gate_sequential(Tape& tape, NodeId state_prev, int t, const ReplayPolicy& policy);

/// Gate on a stored microstate entering the attention path.
NodeId gate_memory_read(Tape& tape, NodeId microstate, int mem_depth, const ReplayPolicy& policy);

}  // namespace sab
