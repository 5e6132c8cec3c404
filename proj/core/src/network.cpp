#include "shufflerl/network.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "shufflerl/errors.hpp"

namespace shufflerl {

std::string_view to_string(ExtractorKind kind) {
  return kind == ExtractorKind::cnn ? "cnn" : "mlp";
}

ExtractorKind extractor_kind_from_string(std::string_view name) {
  if (name == "cnn") return ExtractorKind::cnn;
  if (name == "mlp") return ExtractorKind::mlp;
  throw ConfigError(fmt::format("unknown extractor '{}' (mlp|cnn)", name));
}

void ArchitectureSpec::validate() const {
  if (input_height < 1 || input_width < 1) throw ConfigError("input shape must be non-empty");
  if (action_dim < 1) throw ConfigError("action_dim must be >= 1");
  if (!(log_std_min <= log_std_init && log_std_init <= log_std_max))
    throw ConfigError("log_std_init must lie within [log_std_min, log_std_max]");
  if (kind == ExtractorKind::cnn) {
    if (conv.empty()) throw ConfigError("cnn extractor needs at least one conv layer");
    if (embedding < 1) throw ConfigError("embedding width must be >= 1");
    std::size_t h = input_height, w = input_width;
    for (const auto& c : conv) {
      if (c.channels < 1) throw ConfigError("conv channels must be >= 1");
      h = conv_output_size(h, c.kernel_h, c.stride_h);
      w = conv_output_size(w, c.kernel_w, c.stride_w);
    }
  } else {
    if (mlp_hidden.empty()) throw ConfigError("mlp extractor needs at least one hidden layer");
    for (auto width : mlp_hidden)
      if (width < 1) throw ConfigError("mlp hidden widths must be >= 1");
  }
}

std::size_t embedding_width(const ArchitectureSpec& spec) {
  return spec.kind == ExtractorKind::cnn ? spec.embedding : spec.mlp_hidden.back();
}

void to_json(nlohmann::json& j, const ArchitectureSpec& spec) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& c : spec.conv)
    conv.push_back({{"channels", c.channels},
                    {"kernel", {c.kernel_h, c.kernel_w}},
                    {"stride", {c.stride_h, c.stride_w}}});
  j = {{"extractor", to_string(spec.kind)},
       {"input_height", spec.input_height},
       {"input_width", spec.input_width},
       {"action_dim", spec.action_dim},
       {"conv", conv},
       {"embedding", spec.embedding},
       {"mlp_hidden", spec.mlp_hidden},
       {"separate_value_trunk", spec.separate_value_trunk},
       {"log_std_init", spec.log_std_init},
       {"log_std_min", spec.log_std_min},
       {"log_std_max", spec.log_std_max},
       {"policy_head_gain", spec.policy_head_gain}};
}

void from_json(const nlohmann::json& j, ArchitectureSpec& spec) {
  try {
    spec.kind = extractor_kind_from_string(j.at("extractor").get<std::string>());
    spec.input_height = j.at("input_height").get<std::size_t>();
    spec.input_width = j.at("input_width").get<std::size_t>();
    spec.action_dim = j.at("action_dim").get<std::size_t>();
    spec.conv.clear();
    for (const auto& c : j.at("conv")) {
      ConvLayerSpec layer;
      layer.channels = c.at("channels").get<std::size_t>();
      layer.kernel_h = c.at("kernel").at(0).get<std::size_t>();
      layer.kernel_w = c.at("kernel").at(1).get<std::size_t>();
      layer.stride_h = c.at("stride").at(0).get<std::size_t>();
      layer.stride_w = c.at("stride").at(1).get<std::size_t>();
      spec.conv.push_back(layer);
    }
    spec.embedding = j.at("embedding").get<std::size_t>();
    spec.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
    spec.separate_value_trunk = j.at("separate_value_trunk").get<bool>();
    spec.log_std_init = j.at("log_std_init").get<double>();
    spec.log_std_min = j.at("log_std_min").get<double>();
    spec.log_std_max = j.at("log_std_max").get<double>();
    spec.policy_head_gain = j.at("policy_head_gain").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("invalid architecture: {}", e.what()));
  }
}

namespace {

void fill_normal(std::vector<double>& w, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : w) v = normal(rng);
}

LinearParams make_linear(std::size_t in, std::size_t out, double gain,
                         std::mt19937_64& rng) {
  auto p = LinearParams::zeros(in, out);
  fill_normal(p.weight, gain * std::sqrt(2.0 / static_cast<double>(in)), rng);
  return p;
}

LinearGrads zero_grads(const LinearParams& p) {
  return {std::vector<double>(p.weight.size(), 0.0), std::vector<double>(p.bias.size(), 0.0)};
}

void accumulate(std::vector<double>& into, const std::vector<double>& from) {
  for (std::size_t k = 0; k < into.size(); ++k) into[k] += from[k];
}

double min_abs(const Array4& a, double current) {
  for (double v : a.values()) current = std::min(current, std::abs(v));
  return current;
}

ParamRef ref(std::string name, std::vector<double>& value, std::vector<double>& grad) {
  return {std::move(name), value, grad, true};
}

ParamRef buffer(std::string name, std::vector<double>& value) {
  return {std::move(name), value, {}, false};
}

}  // namespace

CnnExtractor::CnnExtractor(const ArchitectureSpec& spec, std::mt19937_64& rng) {
  std::size_t channels = 1, h = spec.input_height, w = spec.input_width;
  for (const auto& c : spec.conv) {
    auto p = ConvParams::zeros(c.channels, channels, c.kernel_h, c.kernel_w, c.stride_h,
                               c.stride_w);
    const double fan_in = static_cast<double>(channels * c.kernel_h * c.kernel_w);
    fill_normal(p.weight, std::sqrt(2.0 / fan_in), rng);
    conv_grad_.push_back({std::vector<double>(p.weight.size(), 0.0),
                          std::vector<double>(p.bias.size(), 0.0)});
    conv_.push_back(std::move(p));
    bn_.push_back(BatchNormParams::identity(c.channels));
    bn_grad_.push_back({std::vector<double>(c.channels, 0.0),
                        std::vector<double>(c.channels, 0.0)});
    h = conv_output_size(h, c.kernel_h, c.stride_h);
    w = conv_output_size(w, c.kernel_w, c.stride_w);
    channels = c.channels;
  }
  fc_ = make_linear(channels * h * w, spec.embedding, 1.0, rng);
  fc_grad_ = zero_grads(fc_);
}

Array4 CnnExtractor::forward(const Array4& x, BnMode mode) {
  conv_in_.clear();
  bn_cache_.clear();
  bn_out_.clear();
  kink_margin_ = std::numeric_limits<double>::infinity();
  Array4 h = x;
  for (std::size_t l = 0; l < conv_.size(); ++l) {
    auto z = conv2d_forward(h, conv_[l]);
    check_finite(z, fmt::format("conv{}", l + 1));
    conv_in_.push_back(std::move(h));
    bn_[l].mode = mode;
    auto [b, cache] = batchnorm2d(z, bn_[l]);
    check_finite(b, fmt::format("bn{}", l + 1));
    kink_margin_ = min_abs(b, kink_margin_);
    h = relu(b);
    bn_cache_.push_back(std::move(cache));
    bn_out_.push_back(std::move(b));
  }
  fc_in_ = std::move(h);
  fc_out_ = linear_forward(fc_in_, fc_);
  check_finite(fc_out_, "cnn_projection");
  kink_margin_ = min_abs(fc_out_, kink_margin_);
  return relu(fc_out_);
}

Array4 CnnExtractor::infer(const Array4& x) const {
  Array4 h = x;
  for (std::size_t l = 0; l < conv_.size(); ++l) {
    auto z = conv2d_forward(h, conv_[l]);
    check_finite(z, fmt::format("conv{}", l + 1));
    auto b = batchnorm2d_inference(z, bn_[l]);
    check_finite(b, fmt::format("bn{}", l + 1));
    h = relu(b);
  }
  auto out = linear_forward(h, fc_);
  check_finite(out, "cnn_projection");
  return relu(out);
}

Array4 CnnExtractor::backward(const Array4& upstream) {
  if (bn_out_.size() != conv_.size()) throw StateError("cnn backward without forward");
  auto d = relu_backward(fc_out_, upstream);
  auto [dh, fg] = linear_backward(fc_in_, fc_, d);
  accumulate(fc_grad_.weight, fg.weight);
  accumulate(fc_grad_.bias, fg.bias);
  for (std::size_t l = conv_.size(); l-- > 0;) {
    auto db = relu_backward(bn_out_[l], dh);
    auto [dz, bg] = batchnorm2d_backward(bn_cache_[l], db);
    accumulate(bn_grad_[l].gain, bg.gain);
    accumulate(bn_grad_[l].shift, bg.shift);
    auto [dx, cg] = conv2d_backward(conv_in_[l], conv_[l], dz);
    accumulate(conv_grad_[l].weight, cg.weight);
    accumulate(conv_grad_[l].bias, cg.bias);
    dh = std::move(dx);
  }
  return dh;
}

std::vector<Shape4> CnnExtractor::trace_shapes(const Shape4& input) const {
  std::vector<Shape4> shapes;
  Shape4 s = input;
  for (const auto& c : conv_) {
    s = conv2d_output_shape(s, c);
    shapes.push_back(s);
  }
  if (s.item_size() != fc_.in_features)
    throw ShapeError(fmt::format("flattened conv output {} does not match projection input {}",
                                 s.item_size(), fc_.in_features));
  shapes.push_back({input.n, fc_.out_features, 1, 1});
  return shapes;
}

void CnnExtractor::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  for (std::size_t l = 0; l < conv_.size(); ++l) {
    const auto conv_name = fmt::format("{}conv{}", prefix, l + 1);
    const auto bn_name = fmt::format("{}bn{}", prefix, l + 1);
    out.push_back(ref(conv_name + ".weight", conv_[l].weight, conv_grad_[l].weight));
    out.push_back(ref(conv_name + ".bias", conv_[l].bias, conv_grad_[l].bias));
    out.push_back(ref(bn_name + ".gain", bn_[l].gain, bn_grad_[l].gain));
    out.push_back(ref(bn_name + ".shift", bn_[l].shift, bn_grad_[l].shift));
    out.push_back(buffer(bn_name + ".running_mean", bn_[l].running_mean));
    out.push_back(buffer(bn_name + ".running_var", bn_[l].running_var));
  }
  out.push_back(ref(prefix + "projection.weight", fc_.weight, fc_grad_.weight));
  out.push_back(ref(prefix + "projection.bias", fc_.bias, fc_grad_.bias));
}

MlpExtractor::MlpExtractor(const ArchitectureSpec& spec, std::mt19937_64& rng) {
  std::size_t in = spec.input_height * spec.input_width;
  for (auto width : spec.mlp_hidden) {
    layers_.push_back(make_linear(in, width, 1.0, rng));
    grads_.push_back(zero_grads(layers_.back()));
    in = width;
  }
}

Array4 MlpExtractor::forward(const Array4& x, BnMode) {
  inputs_.clear();
  pre_activations_.clear();
  input_shape_ = x.shape();
  kink_margin_ = std::numeric_limits<double>::infinity();
  Array4 h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto z = linear_forward(h, layers_[l]);
    check_finite(z, fmt::format("mlp{}", l + 1));
    kink_margin_ = min_abs(z, kink_margin_);
    inputs_.push_back(std::move(h));
    h = relu(z);
    pre_activations_.push_back(std::move(z));
  }
  return h;
}

Array4 MlpExtractor::infer(const Array4& x) const {
  Array4 h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto z = linear_forward(h, layers_[l]);
    check_finite(z, fmt::format("mlp{}", l + 1));
    h = relu(z);
  }
  return h;
}

Array4 MlpExtractor::backward(const Array4& upstream) {
  if (pre_activations_.size() != layers_.size())
    throw StateError("mlp backward without forward");
  Array4 d = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto dz = relu_backward(pre_activations_[l], d);
    auto [dx, g] = linear_backward(inputs_[l], layers_[l], dz);
    accumulate(grads_[l].weight, g.weight);
    accumulate(grads_[l].bias, g.bias);
    d = std::move(dx);
  }
  return d;
}

std::vector<Shape4> MlpExtractor::trace_shapes(const Shape4& input) const {
  std::vector<Shape4> shapes;
  std::size_t in = input.item_size();
  for (const auto& layer : layers_) {
    if (layer.in_features != in)
      throw ShapeError(fmt::format("mlp layer expects {} inputs, got {}", layer.in_features, in));
    shapes.push_back({input.n, layer.out_features, 1, 1});
    in = layer.out_features;
  }
  return shapes;
}

void MlpExtractor::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto name = fmt::format("{}mlp{}", prefix, l + 1);
    out.push_back(ref(name + ".weight", layers_[l].weight, grads_[l].weight));
    out.push_back(ref(name + ".bias", layers_[l].bias, grads_[l].bias));
  }
}

namespace {

Extractor make_extractor(const ArchitectureSpec& spec, std::mt19937_64& rng) {
  if (spec.kind == ExtractorKind::cnn) return CnnExtractor(spec, rng);
  return MlpExtractor(spec, rng);
}

}  // namespace

ActorCritic::ActorCritic(ArchitectureSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  policy_trunk_ = make_extractor(spec_, rng);
  if (spec_.separate_value_trunk) value_trunk_.push_back(make_extractor(spec_, rng));
  const auto width = embedding_width(spec_);
  policy_head_ = make_linear(width, spec_.action_dim, spec_.policy_head_gain, rng);
  value_head_ = make_linear(width, 1, 1.0, rng);
  policy_head_grad_ = zero_grads(policy_head_);
  value_head_grad_ = zero_grads(value_head_);
  log_std_.assign(spec_.action_dim, spec_.log_std_init);
  log_std_grad_.assign(spec_.action_dim, 0.0);
}

ActorCritic::Output ActorCritic::forward(const Array4& obs, BnMode mode) {
  if (!(obs.shape() == input_shape(obs.shape().n)))
    throw ShapeError(fmt::format("observation {} does not match network input {}",
                                 obs.shape().to_string(),
                                 input_shape(obs.shape().n).to_string()));
  policy_embedding_ = std::visit([&](auto& e) { return e.forward(obs, mode); }, policy_trunk_);
  if (!value_trunk_.empty())
    value_embedding_ =
        std::visit([&](auto& e) { return e.forward(obs, mode); }, value_trunk_.front());
  const Array4& value_in = value_trunk_.empty() ? policy_embedding_ : value_embedding_;
  Output out{linear_forward(policy_embedding_, policy_head_), {}};
  check_finite(out.means, "policy_head");
  const auto v = linear_forward(value_in, value_head_);
  check_finite(v, "value_head");
  out.values.assign(v.values().begin(), v.values().end());
  return out;
}

ActorCritic::Output ActorCritic::infer(const Array4& obs) const {
  if (!(obs.shape() == input_shape(obs.shape().n)))
    throw ShapeError(fmt::format("observation {} does not match network input {}",
                                 obs.shape().to_string(),
                                 input_shape(obs.shape().n).to_string()));
  const auto embedding =
      std::visit([&](const auto& e) { return e.infer(obs); }, policy_trunk_);
  Output out{linear_forward(embedding, policy_head_), {}};
  check_finite(out.means, "policy_head");
  const auto v =
      value_trunk_.empty()
          ? linear_forward(embedding, value_head_)
          : linear_forward(std::visit([&](const auto& e) { return e.infer(obs); },
                                      value_trunk_.front()),
                           value_head_);
  check_finite(v, "value_head");
  out.values.assign(v.values().begin(), v.values().end());
  return out;
}

void ActorCritic::backward(const Array4& d_means, std::span<const double> d_values) {
  const auto batch = policy_embedding_.shape().n;
  if (d_values.size() != batch) throw ShapeError("value gradient does not match batch");
  auto [d_policy_emb, pg] = linear_backward(policy_embedding_, policy_head_, d_means);
  accumulate(policy_head_grad_.weight, pg.weight);
  accumulate(policy_head_grad_.bias, pg.bias);

  const Array4 dv(Shape4{batch, 1, 1, 1},
                  std::vector<double>(d_values.begin(), d_values.end()));
  const Array4& value_in = value_trunk_.empty() ? policy_embedding_ : value_embedding_;
  auto [d_value_emb, vg] = linear_backward(value_in, value_head_, dv);
  accumulate(value_head_grad_.weight, vg.weight);
  accumulate(value_head_grad_.bias, vg.bias);

  if (value_trunk_.empty()) {
    for (std::size_t k = 0; k < d_policy_emb.size(); ++k) d_policy_emb[k] += d_value_emb[k];
  } else {
    std::visit([&](auto& e) { e.backward(d_value_emb); }, value_trunk_.front());
  }
  std::visit([&](auto& e) { e.backward(d_policy_emb); }, policy_trunk_);
}

void ActorCritic::clamp_log_std() {
  for (auto& v : log_std_) v = std::clamp(v, spec_.log_std_min, spec_.log_std_max);
}

std::vector<ParamRef> ActorCritic::parameters() {
  std::vector<ParamRef> out;
  std::visit([&](auto& e) { e.collect(out, "trunk."); }, policy_trunk_);
  if (!value_trunk_.empty())
    std::visit([&](auto& e) { e.collect(out, "value_trunk."); }, value_trunk_.front());
  out.push_back(ref("policy_head.weight", policy_head_.weight, policy_head_grad_.weight));
  out.push_back(ref("policy_head.bias", policy_head_.bias, policy_head_grad_.bias));
  out.push_back(ref("value_head.weight", value_head_.weight, value_head_grad_.weight));
  out.push_back(ref("value_head.bias", value_head_.bias, value_head_grad_.bias));
  out.push_back(ref("log_std", log_std_, log_std_grad_));
  return out;
}

void ActorCritic::zero_grad() {
  for (auto& p : parameters())
    if (p.trainable) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

double ActorCritic::kink_margin() const {
  double m = std::visit([](const auto& e) { return e.kink_margin(); }, policy_trunk_);
  if (!value_trunk_.empty())
    m = std::min(m, std::visit([](const auto& e) { return e.kink_margin(); },
                               value_trunk_.front()));
  return m;
}

std::vector<Shape4> ActorCritic::trace_shapes(std::size_t batch) const {
  return std::visit([&](const auto& e) { return e.trace_shapes(input_shape(batch)); },
                    policy_trunk_);
}

}  // namespace shufflerl
