#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "shufflerl/network.hpp"

namespace shufflerl {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ActorCritic network;
  /// Caller-supplied context (env config, agent spec, permutation, ...).
  nlohmann::json metadata;
};

// A checkpoint is a directory holding manifest.json (architecture, seed,
// parameter names and counts in blob order, metadata) and params.bin, every
// parameter and BN running statistic as little-endian IEEE-754 doubles.

void save_checkpoint(const std::filesystem::path& dir, ActorCritic& network,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Throws DataError if the manifest and blob disagree.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace shufflerl
