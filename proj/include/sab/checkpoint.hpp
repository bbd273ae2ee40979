#pragma once

#include <string>

#include "sab/config.hpp"
#include "sab/model.hpp"

namespace sab {

/// Checkpoints are a flat binary of 64-bit floats (prefix.bin) plus a text
/// manifest (prefix.manifest): '#'-prefixed header lines carrying the run
/// config as JSON, then one "name rows cols offset" line per tensor, offsets
/// counted in doubles.
void save_checkpoint(const std::string& prefix, const SabWeights& weights,
                     const SabConfig& cfg);

struct LoadedCheckpoint {
    SabWeights weights;
    SabConfig config;
};
/// Accepts the prefix used at save time or the path of either file.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace sab
