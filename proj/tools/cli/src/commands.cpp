#include "shufflerl/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "shufflerl/checkpoint.hpp"
#include "shufflerl/errors.hpp"

#ifndef SHUFFLERL_VERSION
#define SHUFFLERL_VERSION "0.0.0"
#endif

namespace shufflerl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view code_version() { return SHUFFLERL_VERSION; }

unsigned worker_threads() {
  if (const char* env = std::getenv("SHUFFLERL_THREADS")) {
    unsigned n = 0;
    const std::string_view text(env);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc{} || ptr != text.data() + text.size() || n == 0)
      throw ConfigError(fmt::format("SHUFFLERL_THREADS must be a positive integer, got '{}'", env));
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

constexpr std::string_view kCurveHeader = "agent,seed,timestep,episode,reward";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(fmt::format("failed writing {}", path.string()));
}

void print_dataset_summary(std::ostream& log, const MarketDataset& d, const std::string& fp) {
  fmt::print(log, "{} tickers, {} days, {} .. {}\nfingerprint {}\n", d.ticker_count(),
             d.day_count(), d.days().front().to_string(), d.days().back().to_string(), fp);
}

json split_to_json(const DatasetSource& source) {
  if (source.split_date) return {{"split_date", source.split_date->to_string()}};
  return {{"train_fraction", source.train_fraction}};
}

DatasetSource split_from_json(const json& j) {
  DatasetSource source;
  if (j.contains("split_date")) source.split_date = Date::from_string(j.at("split_date").get<std::string>());
  if (j.contains("train_fraction")) source.train_fraction = j.at("train_fraction").get<double>();
  return source;
}

std::string curve_rows(const std::string& agent, std::uint64_t seed,
                       const std::vector<CurvePoint>& curve) {
  std::string out;
  for (const auto& p : curve)
    out += fmt::format("{},{},{},{},{}\n", agent, seed, p.timestep, p.episode, p.reward);
  return out;
}

template <typename T>
T parse_field(std::string_view s, const fs::path& file, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ParseError(file, line, fmt::format("bad field '{}'", s));
  return value;
}

std::vector<CurvePoint> read_curve(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader)
    throw ParseError(path, 1, fmt::format("expected header '{}'", kCurveHeader));
  std::vector<CurvePoint> curve;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (std::size_t comma; (comma = rest.find(',')) != std::string_view::npos;) {
      f.push_back(rest.substr(0, comma));
      rest.remove_prefix(comma + 1);
    }
    f.push_back(rest);
    if (f.size() != 5) throw ParseError(path, n, "expected 5 fields");
    curve.push_back({parse_field<std::size_t>(f[2], path, n),
                     parse_field<std::size_t>(f[3], path, n), parse_field<double>(f[4], path, n)});
  }
  return curve;
}

struct RunJob {
  const AgentSpec* agent = nullptr;
  std::uint64_t seed = 0;
  fs::path dir;
  json key;
  bool reused = false;
};

json stats_line(std::size_t update, const UpdateStats& s) {
  return {{"update", update},         {"loss", s.loss},
          {"policy_loss", s.policy_loss}, {"value_loss", s.value_loss},
          {"entropy", s.entropy},     {"clip_fraction", s.clip_fraction},
          {"approx_kl", s.approx_kl}, {"grad_norm", s.grad_norm},
          {"minibatches", s.minibatches}};
}

bool cached(const RunJob& job) {
  std::ifstream in(job.dir / "run.json");
  if (!in) return false;
  try {
    const auto stored = json::parse(in);
    return stored.value("key", json()) == job.key && fs::exists(job.dir / "curve.csv") &&
           fs::exists(job.dir / "checkpoint" / "params.bin");
  } catch (const json::exception&) {
    return false;
  }
}

// Trains one (agent, seed) pair and writes its artifacts. run.json is written
// last and marks the run as finished.
std::vector<CurvePoint> execute(const RunJob& job, const std::shared_ptr<const MarketDataset>& train_set,
                                const RunConfig& config, const EnvConfig& env) {
  fs::create_directories(job.dir);
  fs::remove(job.dir / "run.json");
  PpoConfig ppo = config.ppo;
  ppo.seed = job.seed;

  std::string stats;
  TrainCallbacks callbacks;
  callbacks.on_update = [&](std::size_t u, const UpdateStats& s) {
    stats += stats_line(u, s).dump() + "\n";
  };
  auto result = train(train_set, config.env, *job.agent, ppo, callbacks);

  write_text(job.dir / "curve.csv",
             std::string(kCurveHeader) + "\n" + curve_rows(job.agent->name, job.seed, result.curve));
  write_text(job.dir / "stats.jsonl", stats);
  save_checkpoint(job.dir / "checkpoint", result.network,
                  {{"agent", agent_to_json(*job.agent)},
                   {"env", env_to_json(env)},
                   {"permutation", env.permutation ? json(*env.permutation) : json(nullptr)},
                   {"ppo", ppo_to_json(ppo)},
                   {"dataset", job.key.at("dataset")}});
  write_text(job.dir / "run.json", json{{"key", job.key}, {"updates", result.updates},
                                        {"timesteps", result.timesteps}}
                                           .dump(2) + "\n");
  return result.curve;
}

// Runs jobs on up to `threads` workers. Each job is deterministic on its own,
// so the schedule does not affect any output.
template <typename F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  const auto n = std::min<std::size_t>(threads, count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::string cmd_ingest(const fs::path& prices, const fs::path& fundamentals,
                       const fs::path& out_dir, std::ostream& log) {
  const auto dataset = align_forward_fill(load_prices(prices), load_fundamentals(fundamentals));
  const auto fp = write_archive(out_dir, dataset);
  print_dataset_summary(log, dataset, fp);
  return fp;
}

std::string cmd_synth(const SyntheticMarketParams& params, const fs::path& out_dir,
                      std::ostream& log, std::size_t window_length) {
  if (params.tickers == 0) throw ConfigError("--tickers must be at least 1");
  const auto dataset = generate_synthetic_market(params);
  if (params.days < window_length + 1)
    fmt::print(log, "warning: {} days cannot fill a window of {} plus one step; "
                    "training at that window will be impossible\n",
               params.days, window_length);
  const auto fp = write_archive(out_dir, dataset);
  print_dataset_summary(log, dataset, fp);
  return fp;
}

TrainSummary cmd_train(const RunConfig& config, std::ostream& log, unsigned threads,
                       bool reuse_cached) {
  const auto source = load_source(config.dataset);
  const auto& dataset = *source.dataset;
  auto [train_days, test_days] = split_dataset(dataset, config.dataset);
  const auto train_set = std::make_shared<const MarketDataset>(std::move(train_days));
  const auto tickers = dataset.ticker_count();
  if (train_set->day_count() <= config.env.window_length)
    throw DataError(fmt::format("train split has {} days, window_length is {}",
                                train_set->day_count(), config.env.window_length));

  // Validate every agent before any compute.
  std::vector<EnvConfig> envs;
  for (const auto& agent : config.agents) {
    envs.push_back(configure_env(config.env, agent, tickers));
    make_architecture(agent, envs.back(), tickers).validate();
  }

  const json dataset_key = {{"fingerprint", source.fingerprint},
                            {"split", split_to_json(config.dataset)}};
  std::vector<RunJob> jobs;
  std::vector<std::size_t> job_agent;
  for (std::size_t a = 0; a < config.agents.size(); ++a) {
    for (auto seed : config.seeds) {
      PpoConfig ppo = config.ppo;
      ppo.seed = seed;
      RunJob job;
      job.agent = &config.agents[a];
      job.seed = seed;
      job.dir = config.output_dir / "runs" / config.agents[a].name / fmt::format("seed-{}", seed);
      job.key = {{"code_version", code_version()},
                 {"dataset", dataset_key},
                 {"env", env_to_json(envs[a])},
                 {"permutation", envs[a].permutation ? json(*envs[a].permutation) : json(nullptr)},
                 {"agent", agent_to_json(config.agents[a])},
                 {"ppo", ppo_to_json(ppo)}};
      job.reused = reuse_cached && cached(job);
      jobs.push_back(std::move(job));
      job_agent.push_back(a);
    }
  }

  fs::create_directories(config.output_dir);
  json runs = json::array();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& job = jobs[j];
    const auto rel = fs::relative(job.dir, config.output_dir).generic_string();
    runs.push_back({{"agent", job.agent->name},
                    {"seed", job.seed},
                    {"dir", rel},
                    {"curve", rel + "/curve.csv"},
                    {"stats", rel + "/stats.jsonl"},
                    {"checkpoint", rel + "/checkpoint"},
                    {"permutation", job.key.at("permutation")},
                    {"reused", job.reused}});
  }
  const json manifest = {{"format", "shufflerl-run"},
                         {"code_version", code_version()},
                         {"config", to_json(config)},
                         {"dataset",
                          {{"fingerprint", source.fingerprint},
                           {"tickers", dataset.tickers()},
                           {"days", dataset.day_count()},
                           {"train_days", train_set->day_count()},
                           {"test_days", test_days.day_count()}}},
                         {"seeds", config.seeds},
                         {"runs", runs}};
  write_text(config.output_dir / "manifest.json", manifest.dump(2) + "\n");
  print_dataset_summary(log, dataset, source.fingerprint);

  TrainSummary summary{source.fingerprint, {}};
  summary.runs.resize(jobs.size());
  std::mutex log_mutex;
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    auto& record = summary.runs[j];
    record = {job.agent->name, job.seed, job.dir, job.reused, {}};
    if (job.reused) {
      record.curve = read_curve(job.dir / "curve.csv");
    } else {
      record.curve = execute(job, train_set, config, envs[job_agent[j]]);
    }
    std::lock_guard lock(log_mutex);
    fmt::print(log, "{} seed {}: {} episodes{}{}\n", job.agent->name, job.seed,
               record.curve.size(),
               record.curve.empty() ? "" : fmt::format(", last reward {:.6f}", record.curve.back().reward),
               job.reused ? " (cached)" : "");
    log.flush();
  });

  std::string curves(kCurveHeader);
  curves += "\n";
  for (const auto& r : summary.runs) curves += curve_rows(r.agent, r.seed, r.curve);
  write_text(config.output_dir / "curves.csv", curves);
  return summary;
}

json cmd_evaluate(const EvaluateOptions& options, std::ostream& log) {
  auto checkpoint = load_checkpoint(options.checkpoint);
  const auto& meta = checkpoint.metadata;
  AgentSpec agent;
  EnvConfig env;
  DatasetSource split_source;
  try {
    agent = agent_from_json(meta.at("agent"));
    env = env_from_json(meta.at("env"));
    split_source = split_from_json(meta.at("dataset").at("split"));
    if (const auto& p = meta.at("permutation"); !p.is_null())
      agent.permutation = PermutationSpec(p.get<std::vector<std::size_t>>());
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: checkpoint metadata is incomplete: {}",
                                options.checkpoint.string(), e.what()));
  }
  if (options.config) {
    env = options.config->env;
    split_source = options.config->dataset;
  }

  const auto archive = read_archive(options.dataset);
  auto [train_days, test_days] = split_dataset(*archive.dataset, split_source);
  const auto slice = std::make_shared<const MarketDataset>(
      options.split == Split::train ? std::move(train_days) : std::move(test_days));

  const auto tickers = archive.dataset->ticker_count();
  const auto& arch = checkpoint.network.spec();
  if (arch.input_height != env.window_length)
    throw ConfigError(fmt::format(
        "window length mismatch: checkpoint expects {} rows, configuration gives {}",
        arch.input_height, env.window_length));
  EvaluationReport report;
  try {
    report = evaluate(checkpoint.network, slice, configure_env(env, agent, tickers));
  } catch (const ShapeError& e) {
    throw ConfigError(fmt::format("checkpoint does not fit dataset: {}", e.what()));
  }

  fs::create_directories(options.out_dir);
  json metrics = report.metrics;
  json result = {{"checkpoint", options.checkpoint.generic_string()},
                 {"dataset_fingerprint", archive.fingerprint},
                 {"split", to_string(options.split)},
                 {"first_day", slice->days().front().to_string()},
                 {"last_day", slice->days().back().to_string()},
                 {"cumulative_reward", report.cumulative_reward},
                 {"metrics", metrics}};
  write_text(options.out_dir / "metrics.json", result.dump(2) + "\n");
  std::ofstream trace(options.out_dir / "trace.csv", std::ios::binary);
  write_trace_csv(report.trace, slice->tickers(), trace);

  const auto& m = report.metrics;
  fmt::print(log, "{} split, {} days: cumulative return {:.4f}, sharpe {}, costs {:.2f}\n",
             to_string(options.split), m.n_days, m.cumulative_return,
             m.sharpe ? fmt::format("{:.4f}", *m.sharpe) : std::string("undefined"),
             m.total_costs);
  return result;
}

CompareSummary cmd_compare(const RunConfig& config, std::ostream& log, unsigned threads) {
  if (config.agents.size() < 2)
    throw ConfigError(fmt::format("compare needs at least two agents, got {}", config.agents.size()));
  CompareSummary summary;
  summary.train = cmd_train(config, log, threads, /*reuse_cached=*/true);

  std::string table = "seed,rank,label,final_reward,mean_reward,peak_reward\n";
  std::string pairwise = "seed,a,b,final_diff,mean_diff,peak_diff\n";
  std::string aligned = "seed,timestep,label,reward\n";
  for (auto seed : config.seeds) {
    std::vector<LabeledCurve> curves;
    for (const auto& run : summary.train.runs)
      if (run.seed == seed) curves.push_back({run.agent, run.curve});
    auto comparison = compare_runs(curves);

    fmt::print(log, "\nseed {}\n{:<4} {:<16} {:>14} {:>14} {:>14}\n", seed, "rank", "agent",
               "final", "mean", "peak");
    for (std::size_t i = 0; i < comparison.rows.size(); ++i) {
      const auto& r = comparison.rows[i];
      table += fmt::format("{},{},{},{},{},{}\n", seed, i + 1, r.label, r.final_reward,
                           r.mean_reward, r.peak_reward);
      fmt::print(log, "{:<4} {:<16} {:>14.6f} {:>14.6f} {:>14.6f}\n", i + 1, r.label,
                 r.final_reward, r.mean_reward, r.peak_reward);
    }
    for (const auto& p : comparison.pairwise)
      pairwise += fmt::format("{},{},{},{},{},{}\n", seed, p.a, p.b, p.final_diff, p.mean_diff,
                              p.peak_diff);
    for (const auto& p : comparison.aligned)
      aligned += fmt::format("{},{},{},{}\n", seed, p.timestep, p.label,
                             p.reward ? fmt::format("{}", *p.reward) : std::string());
    summary.per_seed.emplace_back(seed, std::move(comparison));
  }
  write_text(config.output_dir / "comparison.csv", table);
  write_text(config.output_dir / "pairwise.csv", pairwise);
  write_text(config.output_dir / "aligned.csv", aligned);
  return summary;
}

}  // namespace shufflerl::cli
