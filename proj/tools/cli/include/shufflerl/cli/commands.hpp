#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shufflerl/cli/archive.hpp"
#include "shufflerl/cli/config.hpp"
#include "shufflerl/metrics.hpp"

namespace shufflerl::cli {

std::string_view code_version();

/// Worker threads for independent runs: SHUFFLERL_THREADS if set (>= 1),
/// else the hardware concurrency.
unsigned worker_threads();

/// Aligns a prices/fundamentals pair and writes it as an archive. Returns the
/// fingerprint.
std::string cmd_ingest(const std::filesystem::path& prices,
                       const std::filesystem::path& fundamentals,
                       const std::filesystem::path& out_dir, std::ostream& log);

/// Writes a synthetic market archive. Warns on `log` when the series is too
/// short to train at `window_length`.
std::string cmd_synth(const SyntheticMarketParams& params, const std::filesystem::path& out_dir,
                      std::ostream& log, std::size_t window_length = EnvConfig{}.window_length);

// Layout of an output directory:
//   manifest.json              written before any training
//   curves.csv                 every run's curve, in config order
//   runs/<agent>/seed-<n>/     run.json, curve.csv, stats.jsonl, checkpoint/

struct RunRecord {
  std::string agent;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  bool reused = false;
  std::vector<CurvePoint> curve;
};

struct TrainSummary {
  std::string fingerprint;
  std::vector<RunRecord> runs;
};

/// One training run per (agent, seed) on the train split. With
/// `reuse_cached`, runs whose directory already holds a finished run with the
/// same key are loaded instead of retrained.
TrainSummary cmd_train(const RunConfig& config, std::ostream& log, unsigned threads,
                       bool reuse_cached = false);

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  Split split = Split::test;
  /// Replaces the env config and split settings stored with the checkpoint.
  std::optional<RunConfig> config;
  std::filesystem::path out_dir;
};

/// Writes metrics.json and trace.csv under out_dir; returns the metrics JSON.
nlohmann::json cmd_evaluate(const EvaluateOptions& options, std::ostream& log);

struct CompareSummary {
  TrainSummary train;
  /// One comparison per seed, in config seed order.
  std::vector<std::pair<std::uint64_t, Comparison>> per_seed;
};

/// Trains (or reuses) every configured agent for each seed and writes
/// comparison.csv, pairwise.csv and aligned.csv. Needs at least two agents.
CompareSummary cmd_compare(const RunConfig& config, std::ostream& log, unsigned threads);

/// The command-line front end; returns the process exit code
/// (0 ok, 1 usage or config, 2 data, 3 runtime).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shufflerl::cli
