#include "lwta/layers.hpp"

#include <algorithm>
#include <cmath>

#include "lwta/error.hpp"
#include "lwta/ops.hpp"

namespace lwta {

namespace {

void check_temperature(double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be > 0, got " + std::to_string(temperature));
}

}  // namespace

const char* to_string(SampleMode mode) {
  switch (mode) {
    case SampleMode::hard:
      return "hard";
    case SampleMode::relaxed:
      return "relaxed";
    case SampleMode::argmax:
      return "argmax";
  }
  return "?";
}

Tensor draw_gumbel_noise(const Shape& shape, Rng& rng) {
  std::vector<double> g(shape_numel(shape));
  for (auto& v : g) {
    const double u = std::clamp(rng.uniform(), kUniformClampBound, 1.0 - kUniformClampBound);
    v = -std::log(-std::log(u));
  }
  return Tensor(shape, std::move(g));
}

Tensor gumbel_softmax_with_noise(const Tensor& log_probs, const Tensor& gumbel, double temperature) {
  check_temperature(temperature);
  return softmax(scale(add(log_probs, gumbel), 1.0 / temperature));
}

Tensor sample_gumbel_softmax(const Tensor& log_probs, double temperature, Rng& rng) {
  check_temperature(temperature);
  return gumbel_softmax_with_noise(log_probs, draw_gumbel_noise(log_probs.shape(), rng), temperature);
}

Tensor sample_categorical_hard(const Tensor& probs, Rng& rng) {
  if (probs.rank() == 0) throw DimensionError("sample_categorical_hard: needs a trailing unit axis");
  const std::size_t width = probs.shape().back();
  const std::size_t rows = probs.size() / width;
  std::vector<double> out(probs.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double u = rng.uniform();
    const double* p = probs.data().data() + r * width;
    double cumulative = 0.0;
    std::size_t chosen = width;
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < width; ++k) {
      if (p[k] > 0.0) last_positive = k;
      cumulative += p[k];
      // u on a cumulative edge belongs to the interval to its right
      if (chosen == width && u < cumulative) chosen = k;
    }
    // rounding left the total slightly below u
    if (chosen == width) chosen = last_positive;
    out[r * width + chosen] = 1.0;
  }
  return Tensor(probs.shape(), std::move(out));
}

Tensor winner_mask_argmax(const Tensor& probs) {
  const auto idx = argmax(probs);
  const std::size_t width = probs.rank() ? probs.shape().back() : 1;
  std::vector<double> out(probs.size(), 0.0);
  for (std::size_t r = 0; r < idx.size(); ++r) out[r * width + idx[r]] = 1.0;
  return Tensor(probs.shape(), std::move(out));
}

std::pair<Tensor, WinnerState> compete(const Tensor& responses, SampleMode mode, double temperature, Rng& rng) {
  WinnerState state;
  state.mode = mode;
  state.probs = softmax(responses);
  state.log_probs = log_softmax(responses);
  switch (mode) {
    case SampleMode::relaxed:
      state.sample = sample_gumbel_softmax(state.log_probs, temperature, rng);
      break;
    case SampleMode::hard:
      state.sample = sample_categorical_hard(state.probs, rng);
      break;
    case SampleMode::argmax:
      state.sample = winner_mask_argmax(state.probs);
      break;
  }
  Tensor y = mul(state.sample, responses);
  return {std::move(y), std::move(state)};
}

std::pair<Tensor, WinnerState> dense_lwta_forward(const Tensor& x, const DenseLwtaLayer& layer, SampleMode mode,
                                                  double temperature, Rng& rng) {
  if (mode == SampleMode::relaxed) check_temperature(temperature);
  if (x.rank() != 2 || x.dim(1) != layer.inputs) {
    throw DimensionError("dense LWTA layer expects [N, " + std::to_string(layer.inputs) + "], got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  Tensor h = matmul(x, reshape(layer.weights, {layer.inputs, layer.output_width()}));
  if (layer.bias) h = add_bias(h, reshape(*layer.bias, {layer.output_width()}));
  auto [y, state] = compete(reshape(h, {n, layer.blocks, layer.units}), mode, temperature, rng);
  return {reshape(y, {n, layer.output_width()}), std::move(state)};
}

Tensor conv_lwta_kernel(const ConvLwtaLayer& layer) {
  // [B, h, l, C, U] -> [h, l, C, B, U]
  Tensor w = permute(layer.weights, {1, 2, 3, 0, 4});
  return reshape(w, {layer.kernel_h, layer.kernel_w, layer.channels, layer.output_channels()});
}

std::pair<Tensor, WinnerState> conv_lwta_forward(const Tensor& x, const ConvLwtaLayer& layer, SampleMode mode,
                                                 double temperature, Rng& rng) {
  if (mode == SampleMode::relaxed) check_temperature(temperature);
  if (x.rank() != 4 || x.dim(3) != layer.channels) {
    throw DimensionError("conv LWTA layer expects [N, H, L, " + std::to_string(layer.channels) + "], got " +
                         shape_to_string(x.shape()));
  }
  Tensor h = conv2d(x, conv_lwta_kernel(layer), layer.stride, layer.padding);
  if (layer.bias) h = add_bias(h, reshape(*layer.bias, {layer.output_channels()}));
  const Shape out_shape = h.shape();
  auto [y, state] =
      compete(reshape(h, {out_shape[0], out_shape[1], out_shape[2], layer.blocks, layer.units}), mode, temperature, rng);
  return {reshape(y, out_shape), std::move(state)};
}

}  // namespace lwta
