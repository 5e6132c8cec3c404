#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "shufflerl/layers.hpp"
#include "shufflerl/tensor.hpp"

namespace shufflerl {

enum class ExtractorKind { mlp, cnn };

std::string_view to_string(ExtractorKind kind);
ExtractorKind extractor_kind_from_string(std::string_view name);

struct ConvLayerSpec {
  std::size_t channels = 16;
  std::size_t kernel_h = 8, kernel_w = 8;
  std::size_t stride_h = 4, stride_w = 4;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Everything needed to rebuild a network's parameter layout.
struct ArchitectureSpec {
  ExtractorKind kind = ExtractorKind::cnn;
  /// Observation is one channel of input_height x input_width.
  std::size_t input_height = 90;
  std::size_t input_width = 511;
  std::size_t action_dim = 30;
  std::vector<ConvLayerSpec> conv = {{16, 8, 8, 4, 4}, {32, 4, 4, 2, 2}};
  std::size_t embedding = 256;
  std::vector<std::size_t> mlp_hidden = {256, 256};
  bool separate_value_trunk = false;
  double log_std_init = std::log(0.5);
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  /// Policy-head weights are drawn at this multiple of the fan-in scale so
  /// the initial action means start near zero.
  double policy_head_gain = 0.01;

  /// Throws ConfigError or ShapeError if the layers do not chain.
  void validate() const;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Width of the extractor output feeding the heads.
std::size_t embedding_width(const ArchitectureSpec& spec);

void to_json(nlohmann::json& j, const ArchitectureSpec& spec);
void from_json(const nlohmann::json& j, ArchitectureSpec& spec);

/// A named parameter (or non-trainable buffer) and its gradient buffer.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  bool trainable = true;
};

/// conv -> batch norm -> ReLU per conv layer, then flatten -> linear -> ReLU.
class CnnExtractor {
 public:
  CnnExtractor() = default;
  CnnExtractor(const ArchitectureSpec& spec, std::mt19937_64& rng);

  /// Caching forward. Train mode normalizes with batch statistics and
  /// updates the running stats; inference mode reads the running stats.
  Array4 forward(const Array4& x, BnMode mode = BnMode::train);
  /// Inference-mode forward; reads parameters only.
  Array4 infer(const Array4& x) const;
  /// Accumulates parameter gradients; returns the input gradient.
  Array4 backward(const Array4& upstream);

  /// Output shape after each conv block followed by the embedding shape.
  std::vector<Shape4> trace_shapes(const Shape4& input) const;

  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  /// Smallest |pre-activation| seen at any ReLU in the last forward.
  double kink_margin() const { return kink_margin_; }

  std::vector<ConvParams>& conv() { return conv_; }
  std::vector<BatchNormParams>& batch_norm() { return bn_; }
  LinearParams& projection() { return fc_; }

 private:
  std::vector<ConvParams> conv_;
  std::vector<BatchNormParams> bn_;
  LinearParams fc_;
  std::vector<ConvGrads> conv_grad_;
  std::vector<BatchNormGrads> bn_grad_;
  LinearGrads fc_grad_;

  std::vector<Array4> conv_in_;
  std::vector<BatchNormCache> bn_cache_;
  std::vector<Array4> bn_out_;
  Array4 fc_in_;
  Array4 fc_out_;
  double kink_margin_ = 0.0;
};

/// Flatten followed by linear + ReLU hidden layers.
class MlpExtractor {
 public:
  MlpExtractor() = default;
  MlpExtractor(const ArchitectureSpec& spec, std::mt19937_64& rng);

  /// `mode` is accepted for interface parity; there is no batch norm.
  Array4 forward(const Array4& x, BnMode mode = BnMode::train);
  Array4 infer(const Array4& x) const;
  Array4 backward(const Array4& upstream);

  std::vector<Shape4> trace_shapes(const Shape4& input) const;
  void collect(std::vector<ParamRef>& out, const std::string& prefix);
  double kink_margin() const { return kink_margin_; }

  std::vector<LinearParams>& layers() { return layers_; }

 private:
  std::vector<LinearParams> layers_;
  std::vector<LinearGrads> grads_;
  std::vector<Array4> inputs_;
  std::vector<Array4> pre_activations_;
  Shape4 input_shape_{};
  double kink_margin_ = 0.0;
};

using Extractor = std::variant<CnnExtractor, MlpExtractor>;

/// Gaussian policy and value function over a shared (or split) extractor.
/// Action means come from a linear head; log-std is a state-independent
/// parameter vector.
class ActorCritic {
 public:
  struct Output {
    /// (batch, action_dim, 1, 1)
    Array4 means;
    std::vector<double> values;
  };

  /// Fan-in normal weights, zero biases, unit BN gain.
  ActorCritic(ArchitectureSpec spec, std::uint64_t seed);

  const ArchitectureSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  Shape4 input_shape(std::size_t batch) const {
    return {batch, 1, spec_.input_height, spec_.input_width};
  }

  /// Caches for backward. Train mode uses batch statistics in BN and
  /// updates the running stats; inference mode matches infer().
  Output forward(const Array4& obs, BnMode mode = BnMode::train);
  /// Inference mode; never mutates the network.
  Output infer(const Array4& obs) const;
  /// Accumulates gradients of the last forward() given d loss / d means and
  /// d loss / d values. Log-std gradients are accumulated by the caller.
  void backward(const Array4& d_means, std::span<const double> d_values);

  std::span<const double> log_std() const { return log_std_; }
  std::span<double> log_std_grad() { return log_std_grad_; }
  void clamp_log_std();

  /// Trainable parameters and BN running-stat buffers, in a fixed order.
  std::vector<ParamRef> parameters();
  void zero_grad();

  double kink_margin() const;
  bool has_batch_norm() const { return spec_.kind == ExtractorKind::cnn; }
  std::vector<Shape4> trace_shapes(std::size_t batch) const;

  Extractor& policy_extractor() { return policy_trunk_; }

 private:
  ArchitectureSpec spec_;
  std::uint64_t seed_ = 0;
  Extractor policy_trunk_;
  std::vector<Extractor> value_trunk_;  // empty unless separate_value_trunk
  LinearParams policy_head_;
  LinearParams value_head_;
  LinearGrads policy_head_grad_;
  LinearGrads value_head_grad_;
  std::vector<double> log_std_;
  std::vector<double> log_std_grad_;

  Array4 policy_embedding_;
  Array4 value_embedding_;
};

}  // namespace shufflerl
