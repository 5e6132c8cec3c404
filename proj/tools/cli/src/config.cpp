#include "shufflerl/cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "shufflerl/errors.hpp"

namespace shufflerl::cli {

using nlohmann::json;

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::files: return "files";
    case DatasetKind::archive: return "archive";
  }
  return "?";
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::optional<std::string> closest_match(std::string_view key,
                                         const std::vector<std::string>& candidates) {
  std::optional<std::string> best;
  std::size_t best_distance = 3;
  for (const auto& c : candidates) {
    const auto d = edit_distance(key, c);
    if (d < best_distance) {
      best_distance = d;
      best = c;
    }
  }
  return best;
}

namespace {

// Literal integers built in code are signed even when non-negative, while
// parsed text yields unsigned; accept both.
bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::string type_name(const json& v) { return v.type_name(); }

// One JSON object of the config, checked for unknown keys up front. Reads
// leave the target untouched when the key is absent.
class Section {
 public:
  Section(const json& j, std::string path, std::vector<std::string> known)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object())
      throw ConfigError(fmt::format("{}: expected an object, got {}", where(), type_name(j)));
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) != known.end()) continue;
      std::string message = fmt::format("unknown key '{}' in {}", key, where());
      if (auto hint = closest_match(key, known))
        message += fmt::format("; did you mean '{}'?", *hint);
      throw ConfigError(message);
    }
  }

  const json* find(const char* key) const {
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const {
    return path_.empty() ? key : fmt::format("{}.{}", path_, key);
  }

  void read(const char* key, double& out) const {
    if (const auto* v = find(key)) {
      if (!v->is_number()) mismatch(key, "a number", *v);
      out = v->get<double>();
    }
  }
  template <typename U>
    requires std::is_unsigned_v<U>
  void read(const char* key, U& out) const {
    if (const auto* v = find(key)) {
      if (!is_count(*v)) mismatch(key, "a non-negative integer", *v);
      out = v->get<U>();
    }
  }
  void read(const char* key, std::int64_t& out) const {
    if (const auto* v = find(key)) {
      if (!v->is_number_integer()) mismatch(key, "an integer", *v);
      out = v->get<std::int64_t>();
    }
  }
  void read(const char* key, bool& out) const {
    if (const auto* v = find(key)) {
      if (!v->is_boolean()) mismatch(key, "true or false", *v);
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) const {
    if (const auto* v = find(key)) {
      if (!v->is_string()) mismatch(key, "a string", *v);
      out = v->get<std::string>();
    }
  }

  [[noreturn]] void mismatch(const char* key, std::string_view expected, const json& v) const {
    throw ConfigError(fmt::format("{}: expected {}, got {} {}", path(key), expected,
                                  type_name(v), v.dump()));
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
};

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

std::vector<std::size_t> read_sizes(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(fmt::format("{}: expected an array", path));
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!is_count(x))
      throw ConfigError(fmt::format("{}: expected non-negative integers, got {}", path, v.dump()));
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

std::pair<std::size_t, std::size_t> read_pair(const json& v, const std::string& path) {
  if (is_count(v)) return {v.get<std::size_t>(), v.get<std::size_t>()};
  const auto sizes = read_sizes(v, path);
  if (sizes.size() != 2)
    throw ConfigError(fmt::format("{}: expected one integer or [h, w]", path));
  return {sizes[0], sizes[1]};
}

SyntheticMarketParams synthetic_from_json(const json& j, const std::string& path) {
  const Section s(j, path, {"seed", "tickers", "days", "drift", "volatility", "start"});
  SyntheticMarketParams p;
  s.read("seed", p.seed);
  s.read("tickers", p.tickers);
  s.read("days", p.days);
  s.read("drift", p.drift);
  s.read("volatility", p.volatility);
  std::string start;
  s.read("start", start);
  if (!start.empty()) p.start = Date::from_string(start);
  return p;
}

DatasetSource dataset_from_json(const json& j, const std::filesystem::path& base) {
  const Section s(j, "dataset",
                  {"source", "synthetic", "prices", "fundamentals", "archive", "split_date",
                   "train_fraction"});
  DatasetSource d;
  std::string source = "synthetic";
  s.read("source", source);
  if (source == "synthetic") {
    d.kind = DatasetKind::synthetic;
  } else if (source == "files") {
    d.kind = DatasetKind::files;
  } else if (source == "archive") {
    d.kind = DatasetKind::archive;
  } else {
    throw ConfigError(fmt::format(
        "dataset.source: unknown source '{}' (synthetic|files|archive)", source));
  }
  if (const auto* v = s.find("synthetic")) d.synthetic = synthetic_from_json(*v, "dataset.synthetic");
  std::string path;
  if (s.find("prices")) {
    s.read("prices", path);
    d.prices = resolve(path, base);
  }
  if (s.find("fundamentals")) {
    s.read("fundamentals", path);
    d.fundamentals = resolve(path, base);
  }
  if (s.find("archive")) {
    s.read("archive", path);
    d.archive = resolve(path, base);
  }
  if (const auto* v = s.find("split_date"); v && !v->is_null()) {
    std::string date;
    s.read("split_date", date);
    d.split_date = Date::from_string(date);
  }
  s.read("train_fraction", d.train_fraction);

  if (d.kind == DatasetKind::files && (d.prices.empty() || d.fundamentals.empty()))
    throw ConfigError("dataset.source 'files' needs both 'prices' and 'fundamentals'");
  if (d.kind == DatasetKind::archive && d.archive.empty())
    throw ConfigError("dataset.source 'archive' needs 'archive'");
  if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0))
    throw ConfigError(fmt::format("dataset.train_fraction must lie in (0, 1), got {}",
                                  d.train_fraction));
  return d;
}

PpoConfig ppo_from_json(const json& j) {
  const Section s(j, "ppo",
                  {"gamma", "gae_lambda", "clip_epsilon", "learning_rate", "rollout_length",
                   "minibatch_size", "epochs_per_update", "value_coef", "entropy_coef",
                   "max_grad_norm", "total_timesteps", "seed"});
  PpoConfig p;
  s.read("gamma", p.gamma);
  s.read("gae_lambda", p.gae_lambda);
  s.read("clip_epsilon", p.clip_epsilon);
  s.read("learning_rate", p.learning_rate);
  s.read("rollout_length", p.rollout_length);
  s.read("minibatch_size", p.minibatch_size);
  s.read("epochs_per_update", p.epochs_per_update);
  s.read("value_coef", p.value_coef);
  s.read("entropy_coef", p.entropy_coef);
  s.read("max_grad_norm", p.max_grad_norm);
  s.read("total_timesteps", p.total_timesteps);
  s.read("seed", p.seed);
  p.validate();
  return p;
}

json conv_to_json(const std::vector<ConvLayerSpec>& layers) {
  json out = json::array();
  for (const auto& c : layers)
    out.push_back({{"channels", c.channels},
                   {"kernel", {c.kernel_h, c.kernel_w}},
                   {"stride", {c.stride_h, c.stride_w}}});
  return out;
}

std::vector<ConvLayerSpec> conv_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(fmt::format("{}: expected an array", path));
  std::vector<ConvLayerSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto at = fmt::format("{}[{}]", path, i);
    const Section s(j[i], at, {"channels", "kernel", "stride"});
    ConvLayerSpec c;
    s.read("channels", c.channels);
    if (const auto* v = s.find("kernel"))
      std::tie(c.kernel_h, c.kernel_w) = read_pair(*v, at + ".kernel");
    if (const auto* v = s.find("stride"))
      std::tie(c.stride_h, c.stride_w) = read_pair(*v, at + ".stride");
    out.push_back(c);
  }
  return out;
}

}  // namespace

AgentSpec agent_preset(std::string_view name) {
  if (name == "shuffled-cnn") return AgentSpec::preset("cnn-shuffled");
  return AgentSpec::preset(name);
}

json agent_to_json(const AgentSpec& agent) {
  const auto preset = agent.extractor == ExtractorKind::mlp ? "mlp"
                      : agent.layout == LayoutTag::shuffled ? "cnn-shuffled"
                                                             : "cnn";
  json j = {{"name", agent.name}, {"preset", preset}};
  if (agent.permutation) j["permutation"] = *agent.permutation;
  const auto& o = agent.overrides;
  if (o.conv) j["conv"] = conv_to_json(*o.conv);
  if (o.embedding) j["embedding"] = *o.embedding;
  if (o.mlp_hidden) j["mlp_hidden"] = *o.mlp_hidden;
  if (o.separate_value_trunk) j["separate_value_trunk"] = *o.separate_value_trunk;
  return j;
}

AgentSpec agent_from_json(const json& j) {
  if (j.is_string()) return agent_preset(j.get<std::string>());
  const Section s(j, "agents[]",
                  {"name", "preset", "permutation", "conv", "embedding", "mlp_hidden",
                   "separate_value_trunk"});
  std::string preset;
  s.read("preset", preset);
  if (preset.empty()) throw ConfigError("agents[]: an agent object needs 'preset'");
  AgentSpec agent = agent_preset(preset);
  s.read("name", agent.name);
  if (const auto* v = s.find("permutation")) {
    if (agent.layout != LayoutTag::shuffled)
      throw ConfigError(fmt::format("agent '{}': a permutation needs the cnn-shuffled preset",
                                    agent.name));
    agent.permutation = PermutationSpec(read_sizes(*v, "agents[].permutation"));
  }
  if (const auto* v = s.find("conv")) agent.overrides.conv = conv_from_json(*v, "agents[].conv");
  if (s.find("embedding")) {
    std::size_t e = 0;
    s.read("embedding", e);
    agent.overrides.embedding = e;
  }
  if (const auto* v = s.find("mlp_hidden"))
    agent.overrides.mlp_hidden = read_sizes(*v, "agents[].mlp_hidden");
  if (s.find("separate_value_trunk")) {
    bool b = false;
    s.read("separate_value_trunk", b);
    agent.overrides.separate_value_trunk = b;
  }
  return agent;
}

json env_to_json(const EnvConfig& env) {
  return {{"initial_balance", env.initial_balance},
          {"hmax", env.hmax},
          {"cost_rate", env.cost_rate},
          {"reward_scale", env.reward_scale},
          {"balance_scale", env.balance_scale},
          {"window_length", env.window_length},
          {"turbulence_lookback", env.turbulence_lookback}};
}

EnvConfig env_from_json(const json& j) {
  const Section s(j, "env",
                  {"initial_balance", "hmax", "cost_rate", "reward_scale", "balance_scale",
                   "window_length", "turbulence_lookback"});
  EnvConfig env;
  s.read("initial_balance", env.initial_balance);
  s.read("hmax", env.hmax);
  s.read("cost_rate", env.cost_rate);
  s.read("reward_scale", env.reward_scale);
  s.read("balance_scale", env.balance_scale);
  s.read("window_length", env.window_length);
  s.read("turbulence_lookback", env.turbulence_lookback);
  return env;
}

json ppo_to_json(const PpoConfig& p) {
  return {{"gamma", p.gamma},
          {"gae_lambda", p.gae_lambda},
          {"clip_epsilon", p.clip_epsilon},
          {"learning_rate", p.learning_rate},
          {"rollout_length", p.rollout_length},
          {"minibatch_size", p.minibatch_size},
          {"epochs_per_update", p.epochs_per_update},
          {"value_coef", p.value_coef},
          {"entropy_coef", p.entropy_coef},
          {"max_grad_norm", p.max_grad_norm},
          {"total_timesteps", p.total_timesteps},
          {"seed", p.seed}};
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  const Section s(j, "", {"dataset", "env", "agents", "ppo", "seeds", "output_dir"});
  RunConfig c;
  if (const auto* v = s.find("dataset")) c.dataset = dataset_from_json(*v, base_dir);
  if (const auto* v = s.find("env")) c.env = env_from_json(*v);
  if (const auto* v = s.find("ppo")) c.ppo = ppo_from_json(*v);
  if (const auto* v = s.find("agents")) {
    if (!v->is_array() || v->empty())
      throw ConfigError("agents: expected a non-empty array of presets or agent objects");
    c.agents.clear();
    for (const auto& a : *v) c.agents.push_back(agent_from_json(a));
  }
  if (const auto* v = s.find("seeds")) {
    if (!v->is_array() || v->empty())
      throw ConfigError("seeds: expected a non-empty array of non-negative integers");
    c.seeds.clear();
    for (const auto& x : *v) {
      if (!is_count(x))
        throw ConfigError(fmt::format("seeds: expected non-negative integers, got {}", v->dump()));
      c.seeds.push_back(x.get<std::uint64_t>());
    }
  }
  if (s.find("output_dir")) {
    std::string out;
    s.read("output_dir", out);
    c.output_dir = resolve(out, base_dir);
  }

  std::vector<std::string> names;
  for (const auto& a : c.agents) {
    if (std::find(names.begin(), names.end(), a.name) != names.end())
      throw ConfigError(fmt::format("agents: duplicate agent name '{}'", a.name));
    names.push_back(a.name);
  }
  auto seeds = c.seeds;
  std::sort(seeds.begin(), seeds.end());
  if (std::adjacent_find(seeds.begin(), seeds.end()) != seeds.end())
    throw ConfigError("seeds: duplicate seed");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
  return parse_run_config(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  const auto& d = c.dataset;
  json dataset = {{"source", to_string(d.kind)},
                  {"synthetic",
                   {{"seed", d.synthetic.seed},
                    {"tickers", d.synthetic.tickers},
                    {"days", d.synthetic.days},
                    {"drift", d.synthetic.drift},
                    {"volatility", d.synthetic.volatility},
                    {"start", d.synthetic.start.to_string()}}},
                  {"train_fraction", d.train_fraction}};
  if (!d.prices.empty()) dataset["prices"] = d.prices.generic_string();
  if (!d.fundamentals.empty()) dataset["fundamentals"] = d.fundamentals.generic_string();
  if (!d.archive.empty()) dataset["archive"] = d.archive.generic_string();
  dataset["split_date"] = d.split_date ? json(d.split_date->to_string()) : json(nullptr);

  json agents = json::array();
  for (const auto& a : c.agents) agents.push_back(agent_to_json(a));
  return {{"dataset", dataset},
          {"env", env_to_json(c.env)},
          {"agents", agents},
          {"ppo", ppo_to_json(c.ppo)},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir.generic_string()}};
}

}  // namespace shufflerl::cli
