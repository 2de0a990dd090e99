#pragma once

#include <optional>
#include <string>

#include "treegraph/graph.hpp"
#include "treegraph/params.hpp"
#include "treegraph/tensor.hpp"

namespace tg {

template <typename Real>
struct BatchNormLayer {
  BasicTensor<Real> gamma, beta;
  BatchNormState<Real> state;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);

  BatchNormLayer() = default;
  BatchNormLayer(ParamRegistry<Real>& reg, const std::string& prefix, int channels)
      : state(channels) {
    gamma = reg.add(prefix + ".gamma", BasicTensor<Real>::full({channels}, Real(1)));
    beta = reg.add(prefix + ".beta", BasicTensor<Real>::zeros({channels}));
    reg.add_state(prefix + ".running_mean", &state.running_mean);
    reg.add_state(prefix + ".running_var", &state.running_var);
  }

  BasicTensor<Real> forward(const BasicTensor<Real>& x, bool training) {
    return batch_norm(x, gamma, beta, state, training, momentum, eps);
  }
};

// 1x1 conv -> batch norm -> LeakyReLU, the building block of every
// convolutional stage.
template <typename Real>
struct ConvBlock {
  BasicTensor<Real> weight;
  BatchNormLayer<Real> bn;
  Real slope = Real(0.2);

  ConvBlock() = default;
  ConvBlock(ParamRegistry<Real>& reg, const std::string& prefix, int in_ch, int out_ch,
            Real leaky_slope, std::mt19937& rng)
      : slope(leaky_slope) {
    weight = reg.add(prefix + ".weight",
                     BasicTensor<Real>::from_data(
                         {out_ch, in_ch},
                         he_uniform<Real>(static_cast<std::size_t>(out_ch) * in_ch,
                                          static_cast<std::size_t>(in_ch), leaky_slope, rng)));
    bn = BatchNormLayer<Real>(reg, prefix + ".bn", out_ch);
  }

  BasicTensor<Real> forward(const BasicTensor<Real>& x, bool training) {
    return leaky_relu(bn.forward(pointwise_conv(x, weight), training), slope);
  }
};

template <typename Real>
struct LinearLayer {
  BasicTensor<Real> weight;
  std::optional<BasicTensor<Real>> bias;

  LinearLayer() = default;
  LinearLayer(ParamRegistry<Real>& reg, const std::string& prefix, int in_f, int out_f,
              bool with_bias, Real leaky_slope, std::mt19937& rng) {
    weight = reg.add(prefix + ".weight",
                     BasicTensor<Real>::from_data(
                         {out_f, in_f},
                         he_uniform<Real>(static_cast<std::size_t>(out_f) * in_f,
                                          static_cast<std::size_t>(in_f), leaky_slope, rng)));
    if (with_bias) bias = reg.add(prefix + ".bias", BasicTensor<Real>::zeros({out_f}));
  }

  BasicTensor<Real> forward(const BasicTensor<Real>& x) {
    return linear(x, weight, bias ? &*bias : nullptr);
  }
};

// Graph convolution over edges of a k-NN graph recomputed in the layer's own
// feature space: per edge the MLP sees [x_i, x_j - x_i], then neighbors are
// max-aggregated.
template <typename Real>
struct EdgeConvLayer {
  ConvBlock<Real> conv;
  int k = 20;

  EdgeConvLayer() = default;
  EdgeConvLayer(ParamRegistry<Real>& reg, const std::string& prefix, int in_ch, int out_ch,
                int neighbors, Real leaky_slope, std::mt19937& rng)
      : conv(reg, prefix, 2 * in_ch, out_ch, leaky_slope, rng), k(neighbors) {}

  BasicTensor<Real> forward(const BasicTensor<Real>& x, bool training) {
    const IndexArray idx = knn_single(x, k);
    auto h = conv.forward(edge_features(x, idx), training);
    return max_over_axis(h, 3);
  }
};

}  // namespace tg
