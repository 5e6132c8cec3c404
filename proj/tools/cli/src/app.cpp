#include <exception>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/ostream.h>

#include "shufflerl/cli/commands.hpp"
#include "shufflerl/errors.hpp"

namespace shufflerl::cli {

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string prices, fundamentals, out, config, checkpoint, dataset, split = "test", agent,
      start;
  SyntheticMarketParams synth;
  std::size_t window = EnvConfig{}.window_length;
  std::optional<std::uint64_t> seed;
};

RunConfig config_with_overrides(const Options& o) {
  RunConfig config = load_run_config(o.config);
  if (!o.out.empty()) config.output_dir = o.out;
  if (o.seed) config.seeds = {*o.seed};
  if (!o.agent.empty()) config.agents = {agent_preset(o.agent)};
  return config;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Portfolio-trading agents with PPO over a sliding feature window"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> agents = {"mlp", "cnn", "cnn-shuffled", "shuffled-cnn"};

  auto* ingest = app.add_subcommand("ingest", "Align price and fundamentals CSVs into an archive");
  ingest->add_option("--prices", o.prices, "date,ticker,close CSV")->required();
  ingest->add_option("--fundamentals", o.fundamentals, "date,ticker,<ratios> CSV")->required();
  ingest->add_option("--out", o.out, "Archive directory")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic market archive");
  synth->add_option("--seed", o.synth.seed, "Generator seed");
  synth->add_option("--tickers", o.synth.tickers, "Ticker count")->capture_default_str();
  synth->add_option("--days", o.synth.days, "Trading days")->capture_default_str();
  synth->add_option("--drift", o.synth.drift, "Daily log drift")->capture_default_str();
  synth->add_option("--volatility", o.synth.volatility, "Daily log volatility")
      ->capture_default_str();
  synth->add_option("--start", o.start, "First day, YYYY-MM-DD");
  synth->add_option("--window", o.window, "Window length used for the length warning")
      ->capture_default_str();
  synth->add_option("--out", o.out, "Archive directory")->required();

  auto* train = app.add_subcommand("train", "Train every configured agent for every seed");
  train->add_option("--config", o.config, "Run config JSON")->required();
  train->add_option("--out", o.out, "Output directory (overrides output_dir)");
  train->add_option("--seed", o.seed, "Train this seed only");
  train->add_option("--agent", o.agent, "Train this preset only")
      ->check(CLI::IsMember(agents));

  auto* eval = app.add_subcommand("evaluate", "Run a checkpoint's mean policy over a split");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint directory")->required();
  eval->add_option("--dataset", o.dataset, "Dataset archive directory")->required();
  eval->add_option("--split", o.split, "train or test")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
  eval->add_option("--config", o.config, "Run config whose env and split settings to use");
  eval->add_option("--out", o.out, "Directory for metrics.json and trace.csv")->required();

  auto* compare = app.add_subcommand("compare", "Train or reuse runs and compare agents per seed");
  compare->add_option("--config", o.config, "Run config JSON")->required();
  compare->add_option("--out", o.out, "Output directory (overrides output_dir)");
  compare->add_option("--seed", o.seed, "Compare this seed only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : kExitConfig;
  }

  try {
    if (ingest->parsed()) {
      cmd_ingest(o.prices, o.fundamentals, o.out, out);
    } else if (synth->parsed()) {
      if (!o.start.empty()) o.synth.start = Date::from_string(o.start);
      cmd_synth(o.synth, o.out, out, o.window);
    } else if (train->parsed()) {
      cmd_train(config_with_overrides(o), out, worker_threads());
    } else if (eval->parsed()) {
      EvaluateOptions e;
      e.checkpoint = o.checkpoint;
      e.dataset = o.dataset;
      e.split = split_from_string(o.split);
      if (!o.config.empty()) e.config = load_run_config(o.config);
      e.out_dir = o.out;
      cmd_evaluate(e, out);
    } else if (compare->parsed()) {
      if (!o.agent.empty()) throw ConfigError("compare does not take --agent");
      cmd_compare(config_with_overrides(o), out, worker_threads());
    }
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    fmt::print(err, "data error: {}\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return 0;
}

}  // namespace shufflerl::cli
