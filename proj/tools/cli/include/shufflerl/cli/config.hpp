#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "shufflerl/market_data.hpp"
#include "shufflerl/ppo.hpp"
#include "shufflerl/trading_env.hpp"

namespace shufflerl::cli {

enum class DatasetKind { synthetic, files, archive };

std::string_view to_string(DatasetKind kind);

/// Where a run's market data comes from and how it splits into train/test.
struct DatasetSource {
  DatasetKind kind = DatasetKind::synthetic;
  SyntheticMarketParams synthetic;
  std::filesystem::path prices;
  std::filesystem::path fundamentals;
  std::filesystem::path archive;
  /// First test day. Takes precedence over train_fraction.
  std::optional<Date> split_date;
  /// Fraction of days (rounded down) in the train split, in (0, 1).
  double train_fraction = 0.8;
};

struct RunConfig {
  DatasetSource dataset;
  EnvConfig env;
  std::vector<AgentSpec> agents = {AgentSpec::preset("cnn")};
  PpoConfig ppo;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::filesystem::path output_dir = "runs";
};

/// Strict parse: unknown keys and wrong types raise ConfigError, with a
/// suggestion when a key is a near miss of a known one. Missing keys keep
/// their defaults. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field, defaults included; parse_run_config round-trips it.
nlohmann::json to_json(const RunConfig& config);

nlohmann::json env_to_json(const EnvConfig& env);
EnvConfig env_from_json(const nlohmann::json& j);
nlohmann::json ppo_to_json(const PpoConfig& ppo);
nlohmann::json agent_to_json(const AgentSpec& agent);
AgentSpec agent_from_json(const nlohmann::json& j);

/// Accepts "shuffled-cnn" as an alias of "cnn-shuffled".
AgentSpec agent_preset(std::string_view name);

/// Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Closest candidate within distance 2, if any.
std::optional<std::string> closest_match(std::string_view key,
                                         const std::vector<std::string>& candidates);

}  // namespace shufflerl::cli
