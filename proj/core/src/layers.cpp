#include "shufflerl/layers.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "shufflerl/errors.hpp"

namespace shufflerl {

ConvParams ConvParams::zeros(std::size_t out_channels, std::size_t in_channels,
                             std::size_t kernel_h, std::size_t kernel_w,
                             std::size_t stride_h, std::size_t stride_w) {
  ConvParams p{out_channels, in_channels, kernel_h, kernel_w, stride_h, stride_w, {}, {}};
  p.weight.assign(out_channels * in_channels * kernel_h * kernel_w, 0.0);
  p.bias.assign(out_channels, 0.0);
  return p;
}

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride) {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  if (kernel < 1 || kernel > input)
    throw ShapeError(fmt::format("kernel {} does not fit input {}", kernel, input));
  return (input - kernel) / stride + 1;
}

Shape4 conv2d_output_shape(const Shape4& input, const ConvParams& p) {
  if (input.c != p.in_channels)
    throw ShapeError(fmt::format("conv expects {} input channels, got shape {}",
                                 p.in_channels, input.to_string()));
  if (p.weight.size() != p.out_channels * p.in_channels * p.kernel_h * p.kernel_w ||
      p.bias.size() != p.out_channels)
    throw ShapeError("conv parameter buffers do not match their declared shape");
  return {input.n, p.out_channels, conv_output_size(input.h, p.kernel_h, p.stride_h),
          conv_output_size(input.w, p.kernel_w, p.stride_w)};
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

// Unfolds one item into (in_c * kh * kw) x (out_h * out_w) patch columns.
void im2col(const double* x, const Shape4& in, const ConvParams& p, const Shape4& out,
            RowMatrix& cols) {
  cols.resize(static_cast<Eigen::Index>(in.c * p.kernel_h * p.kernel_w),
              static_cast<Eigen::Index>(out.h * out.w));
  double* dst = cols.data();
  for (std::size_t ic = 0; ic < in.c; ++ic)
    for (std::size_t ky = 0; ky < p.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < p.kernel_w; ++kx) {
        const double* plane = x + ic * in.h * in.w + ky * in.w + kx;
        for (std::size_t oy = 0; oy < out.h; ++oy) {
          const double* src = plane + oy * p.stride_h * in.w;
          for (std::size_t ox = 0; ox < out.w; ++ox) *dst++ = src[ox * p.stride_w];
        }
      }
}

// Adjoint of im2col: scatters patch columns back onto one item.
void col2im(const RowMatrix& cols, const Shape4& in, const ConvParams& p,
            const Shape4& out, double* dx) {
  const double* src = cols.data();
  for (std::size_t ic = 0; ic < in.c; ++ic)
    for (std::size_t ky = 0; ky < p.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < p.kernel_w; ++kx) {
        double* plane = dx + ic * in.h * in.w + ky * in.w + kx;
        for (std::size_t oy = 0; oy < out.h; ++oy) {
          double* row = plane + oy * p.stride_h * in.w;
          for (std::size_t ox = 0; ox < out.w; ++ox) row[ox * p.stride_w] += *src++;
        }
      }
}

}  // namespace

Array4 conv2d_forward(const Array4& x, const ConvParams& p) {
  const auto in = x.shape();
  const auto out = conv2d_output_shape(in, p);
  Array4 y(out);
  const auto oc = static_cast<Eigen::Index>(p.out_channels);
  const auto k = static_cast<Eigen::Index>(in.c * p.kernel_h * p.kernel_w);
  const auto plane = static_cast<Eigen::Index>(out.h * out.w);
  const ConstMap w(p.weight.data(), oc, k);
  const Eigen::Map<const Eigen::VectorXd> bias(p.bias.data(), oc);
  RowMatrix cols;
  for (std::size_t n = 0; n < in.n; ++n) {
    im2col(x.item(n).data(), in, p, out, cols);
    Map yn(y.values().data() + n * out.item_size(), oc, plane);
    yn.noalias() = w * cols;
    yn.colwise() += bias;
  }
  return y;
}

std::pair<Array4, ConvGrads> conv2d_backward(const Array4& x, const ConvParams& p,
                                             const Array4& upstream) {
  const auto in = x.shape();
  const auto out = conv2d_output_shape(in, p);
  if (!(upstream.shape() == out))
    throw ShapeError(fmt::format("conv upstream gradient {} does not match output {}",
                                 upstream.shape().to_string(), out.to_string()));
  Array4 dx(in);
  ConvGrads g{std::vector<double>(p.weight.size(), 0.0),
              std::vector<double>(p.bias.size(), 0.0)};
  const auto oc = static_cast<Eigen::Index>(p.out_channels);
  const auto k = static_cast<Eigen::Index>(in.c * p.kernel_h * p.kernel_w);
  const auto plane = static_cast<Eigen::Index>(out.h * out.w);
  const ConstMap w(p.weight.data(), oc, k);
  Map gw(g.weight.data(), oc, k);
  Eigen::Map<Eigen::VectorXd> gb(g.bias.data(), oc);
  RowMatrix cols, dcols;
  for (std::size_t n = 0; n < in.n; ++n) {
    const ConstMap dy(upstream.values().data() + n * out.item_size(), oc, plane);
    im2col(x.item(n).data(), in, p, out, cols);
    gw.noalias() += dy * cols.transpose();
    gb += dy.rowwise().sum();
    dcols.noalias() = w.transpose() * dy;
    col2im(dcols, in, p, out, dx.values().data() + n * in.item_size());
  }
  return {std::move(dx), std::move(g)};
}

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.channels = channels;
  p.gain.assign(channels, 1.0);
  p.shift.assign(channels, 0.0);
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  return p;
}

namespace {

void check_bn_shape(const Shape4& s, const BatchNormParams& p) {
  if (s.c != p.channels || p.gain.size() != p.channels || p.shift.size() != p.channels ||
      p.running_mean.size() != p.channels || p.running_var.size() != p.channels)
    throw ShapeError(fmt::format("batch norm over {} channels got input {}", p.channels,
                                 s.to_string()));
  if (!(p.epsilon > 0.0)) throw ConfigError("batch norm epsilon must be positive");
}

BatchNormCache normalize_with(const Array4& x, const std::vector<double>& mean,
                              const std::vector<double>& inv_std,
                              const BatchNormParams& p, BnMode mode, Array4& y) {
  const auto s = x.shape();
  const auto plane = s.h * s.w;
  BatchNormCache cache{s, mode, Array4(s), inv_std, p.gain};
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double xh = (x[base + k] - mean[c]) * inv_std[c];
        cache.normalized[base + k] = xh;
        y[base + k] = xh * p.gain[c] + p.shift[c];
      }
    }
  }
  return cache;
}

}  // namespace

std::pair<Array4, BatchNormCache> batchnorm2d(const Array4& x, BatchNormParams& p) {
  const auto s = x.shape();
  check_bn_shape(s, p);
  Array4 y(s);
  if (p.mode == BnMode::inference) {
    std::vector<double> inv_std(p.channels);
    for (std::size_t c = 0; c < p.channels; ++c)
      inv_std[c] = 1.0 / std::sqrt(p.running_var[c] + p.epsilon);
    auto cache = normalize_with(x, p.running_mean, inv_std, p, BnMode::inference, y);
    return {std::move(y), std::move(cache)};
  }

  const auto plane = s.h * s.w;
  const auto count = s.n * plane;
  if (count < 2)
    throw ShapeError(fmt::format(
        "train-mode batch norm needs >= 2 values per channel, input {} has {}",
        s.to_string(), count));
  std::vector<double> mean(p.channels, 0.0), var(p.channels, 0.0), inv_std(p.channels);
  for (std::size_t c = 0; c < p.channels; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) sum += x[base + k];
    }
    mean[c] = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double dev = x[base + k] - mean[c];
        sq += dev * dev;
      }
    }
    var[c] = sq / static_cast<double>(count);
    inv_std[c] = 1.0 / std::sqrt(var[c] + p.epsilon);
  }
  auto cache = normalize_with(x, mean, inv_std, p, BnMode::train, y);

  const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
  for (std::size_t c = 0; c < p.channels; ++c) {
    p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean[c];
    p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * var[c] * unbias;
  }
  return {std::move(y), std::move(cache)};
}

Array4 batchnorm2d_inference(const Array4& x, const BatchNormParams& p) {
  const auto s = x.shape();
  check_bn_shape(s, p);
  const auto plane = s.h * s.w;
  Array4 y(s);
  for (std::size_t c = 0; c < p.channels; ++c) {
    const double inv_std = 1.0 / std::sqrt(p.running_var[c] + p.epsilon);
    const double scale = p.gain[c] * inv_std;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * plane;
      for (std::size_t k = 0; k < plane; ++k)
        y[base + k] = (x[base + k] - p.running_mean[c]) * scale + p.shift[c];
    }
  }
  return y;
}

std::pair<Array4, BatchNormGrads> batchnorm2d_backward(const BatchNormCache& cache,
                                                       const Array4& upstream) {
  const auto s = cache.shape;
  if (!(upstream.shape() == s))
    throw ShapeError(fmt::format("batch norm upstream gradient {} does not match cache {}",
                                 upstream.shape().to_string(), s.to_string()));
  const auto plane = s.h * s.w;
  const auto count = static_cast<double>(s.n * plane);
  Array4 dx(s);
  BatchNormGrads g{std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sum_dy += upstream[base + k];
        sum_dy_xh += upstream[base + k] * cache.normalized[base + k];
      }
    }
    g.gain[c] = sum_dy_xh;
    g.shift[c] = sum_dy;
    const double scale = cache.gain[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        if (cache.mode == BnMode::inference) {
          dx[base + k] = upstream[base + k] * scale;
        } else {
          dx[base + k] = scale * (upstream[base + k] - sum_dy / count -
                                  cache.normalized[base + k] * sum_dy_xh / count);
        }
      }
    }
  }
  return {std::move(dx), std::move(g)};
}

Array4 relu(const Array4& x) {
  Array4 y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
  return y;
}

Array4 relu_backward(const Array4& x, const Array4& upstream) {
  if (!(x.shape() == upstream.shape()))
    throw ShapeError(fmt::format("relu upstream gradient {} does not match input {}",
                                 upstream.shape().to_string(), x.shape().to_string()));
  Array4 dx(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) dx[k] = x[k] > 0.0 ? upstream[k] : 0.0;
  return dx;
}

LinearParams LinearParams::zeros(std::size_t in_features, std::size_t out_features) {
  LinearParams p{in_features, out_features, {}, {}};
  p.weight.assign(in_features * out_features, 0.0);
  p.bias.assign(out_features, 0.0);
  return p;
}

namespace {

void check_linear(const Shape4& s, const LinearParams& p) {
  if (s.item_size() != p.in_features)
    throw ShapeError(fmt::format("linear layer expects {} inputs per item, got shape {}",
                                 p.in_features, s.to_string()));
  if (p.weight.size() != p.in_features * p.out_features ||
      p.bias.size() != p.out_features)
    throw ShapeError("linear parameter buffers do not match their declared shape");
}

}  // namespace

Array4 linear_forward(const Array4& x, const LinearParams& p) {
  check_linear(x.shape(), p);
  const auto batch = static_cast<Eigen::Index>(x.shape().n);
  const auto in = static_cast<Eigen::Index>(p.in_features);
  const auto out = static_cast<Eigen::Index>(p.out_features);
  Array4 y(Shape4{x.shape().n, p.out_features, 1, 1});
  const ConstMap xm(x.values().data(), batch, in);
  const ConstMap w(p.weight.data(), out, in);
  Map ym(y.values().data(), batch, out);
  ym.noalias() = xm * w.transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(p.bias.data(), out);
  return y;
}

std::pair<Array4, LinearGrads> linear_backward(const Array4& x, const LinearParams& p,
                                               const Array4& upstream) {
  check_linear(x.shape(), p);
  const auto n = x.shape().n;
  if (upstream.size() != n * p.out_features)
    throw ShapeError(fmt::format("linear upstream gradient {} does not match ({}, {})",
                                 upstream.shape().to_string(), n, p.out_features));
  const auto batch = static_cast<Eigen::Index>(n);
  const auto in = static_cast<Eigen::Index>(p.in_features);
  const auto out = static_cast<Eigen::Index>(p.out_features);
  Array4 dx(x.shape());
  LinearGrads g{std::vector<double>(p.weight.size(), 0.0),
                std::vector<double>(p.bias.size(), 0.0)};
  const ConstMap xm(x.values().data(), batch, in);
  const ConstMap w(p.weight.data(), out, in);
  const ConstMap dy(upstream.values().data(), batch, out);
  Map(dx.values().data(), batch, in).noalias() = dy * w;
  Map(g.weight.data(), out, in).noalias() = dy.transpose() * xm;
  Eigen::Map<Eigen::RowVectorXd>(g.bias.data(), out) = dy.colwise().sum();
  return {std::move(dx), std::move(g)};
}

}  // namespace shufflerl
