#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "shufflerl/tensor.hpp"

namespace shufflerl {

// Layer kernels with explicit backward passes. Each *_backward takes the
// forward input (or cache) plus the upstream gradient and returns the input
// gradient together with the parameter gradients.

struct ConvParams {
  std::size_t out_channels = 0, in_channels = 0;
  std::size_t kernel_h = 0, kernel_w = 0;
  std::size_t stride_h = 1, stride_w = 1;
  /// (out_channels, in_channels, kernel_h, kernel_w), row-major.
  std::vector<double> weight;
  std::vector<double> bias;

  static ConvParams zeros(std::size_t out_channels, std::size_t in_channels,
                          std::size_t kernel_h, std::size_t kernel_w,
                          std::size_t stride_h, std::size_t stride_w);
};

/// Output extent of a valid (unpadded) strided window: floor((in-k)/s)+1.
std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride);

Shape4 conv2d_output_shape(const Shape4& input, const ConvParams& p);

/// Valid cross-correlation with stride.
Array4 conv2d_forward(const Array4& x, const ConvParams& p);

struct ConvGrads {
  std::vector<double> weight;
  std::vector<double> bias;
};

std::pair<Array4, ConvGrads> conv2d_backward(const Array4& x, const ConvParams& p,
                                             const Array4& upstream);

enum class BnMode { train, inference };

struct BatchNormParams {
  std::size_t channels = 0;
  std::vector<double> gain;
  std::vector<double> shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  /// running = (1 - momentum) * running + momentum * batch
  double momentum = 0.1;
  double epsilon = 1e-5;
  BnMode mode = BnMode::train;

  /// Unit gain, zero shift, running mean 0 and variance 1.
  static BatchNormParams identity(std::size_t channels);
};

struct BatchNormCache {
  Shape4 shape;
  BnMode mode = BnMode::train;
  Array4 normalized;
  std::vector<double> inv_std;
  std::vector<double> gain;
};

/// Train mode normalizes each channel over (batch, h, w) with the biased
/// batch variance and folds the unbiased variance into the running stats.
/// Inference mode uses the running stats and leaves `p` untouched.
std::pair<Array4, BatchNormCache> batchnorm2d(const Array4& x, BatchNormParams& p);

/// Inference-mode normalization on const parameters.
Array4 batchnorm2d_inference(const Array4& x, const BatchNormParams& p);

struct BatchNormGrads {
  std::vector<double> gain;
  std::vector<double> shift;
};

std::pair<Array4, BatchNormGrads> batchnorm2d_backward(const BatchNormCache& cache,
                                                       const Array4& upstream);

Array4 relu(const Array4& x);
Array4 relu_backward(const Array4& x, const Array4& upstream);

struct LinearParams {
  std::size_t in_features = 0, out_features = 0;
  /// (out_features, in_features), row-major.
  std::vector<double> weight;
  std::vector<double> bias;

  static LinearParams zeros(std::size_t in_features, std::size_t out_features);
};

/// Treats each batch item's c*h*w values as the input vector; the result has
/// shape (n, out_features, 1, 1).
Array4 linear_forward(const Array4& x, const LinearParams& p);

struct LinearGrads {
  std::vector<double> weight;
  std::vector<double> bias;
};

std::pair<Array4, LinearGrads> linear_backward(const Array4& x, const LinearParams& p,
                                               const Array4& upstream);

}  // namespace shufflerl
