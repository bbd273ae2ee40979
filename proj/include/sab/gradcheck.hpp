#pragma once

#include <cstdint>
#include <string>

#include "sab/replay.hpp"

namespace sab {

struct GradcheckReport {
    ReplayMode mode = ReplayMode::Sab;
    double max_rel_err = 0;
    std::string worst_param;
    std::uint64_t seed_used = 0;  // bumped when the draw lands near a selection tie
    int reseeds = 0;
};

/// Central finite differences (eps 1e-5) against the tape backward for every
/// parameter entry of a small random network under one replay mode. Relative
/// error uses |a-n| / max(|a|, |n|, 1e-6). Seeds whose raw attention weights
/// come within 1e-3 of a selection tie are bumped deterministically so the
/// difference quotient stays on a single branch of the sparsifier.
GradcheckReport gradcheck_mode(ReplayMode mode, std::uint64_t seed, int hidden, int T);

}  // namespace sab
