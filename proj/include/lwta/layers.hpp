#pragma once

#include <cstddef>
#include <optional>
#include <utility>

#include "lwta/rng.hpp"
#include "lwta/tensor.hpp"

namespace lwta {

// How winners are drawn inside each LWTA block.
enum class SampleMode {
  hard,     // exact categorical draw (evaluation, prediction)
  relaxed,  // Gumbel-softmax point on the simplex (training, attacks)
  argmax,   // deterministic highest-probability unit (debugging)
};

const char* to_string(SampleMode mode);

inline constexpr double kDefaultTemperature = 0.67;
inline constexpr double kUniformClampBound = 1e-10;

// Fully connected LWTA layer: input width J, B blocks of U competing units.
struct DenseLwtaLayer {
  std::size_t inputs = 0;
  std::size_t blocks = 0;
  std::size_t units = 0;
  Tensor weights;               // [J, B, U]
  std::optional<Tensor> bias;  // [B, U]

  std::size_t output_width() const { return blocks * units; }
};

// Convolutional LWTA layer: B kernels, each with U competing feature maps.
struct ConvLwtaLayer {
  std::size_t blocks = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t channels = 0;
  std::size_t units = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor weights;               // [B, h, l, C, U]
  std::optional<Tensor> bias;  // [B, U]

  std::size_t output_channels() const { return blocks * units; }
};

// Winner posterior and the drawn indicators for one layer. The trailing axis
// has U entries; leading axes are [N, B] (dense) or [N, H', L', B] (conv).
struct WinnerState {
  Tensor probs;
  Tensor log_probs;
  Tensor sample;
  SampleMode mode = SampleMode::hard;

  std::size_t units() const { return probs.shape().back(); }
  std::size_t batch() const { return probs.dim(0); }
};

// softmax((log_probs + g) / temperature) with g = -log(-log V), V ~ U(0,1)
// clamped to [1e-10, 1 - 1e-10]. Differentiable in log_probs.
Tensor sample_gumbel_softmax(const Tensor& log_probs, double temperature, Rng& rng);

// Same with caller-supplied Gumbel noise.
Tensor gumbel_softmax_with_noise(const Tensor& log_probs, const Tensor& gumbel, double temperature);
Tensor draw_gumbel_noise(const Shape& shape, Rng& rng);

// One-hot rows by inverse CDF on one uniform draw per row.
Tensor sample_categorical_hard(const Tensor& probs, Rng& rng);

// One-hot at the highest probability; ties go to the lowest index.
Tensor winner_mask_argmax(const Tensor& probs);

// Given responses with a trailing U axis, computes the winner posterior,
// draws indicators per `mode` and returns (indicators * responses, state).
std::pair<Tensor, WinnerState> compete(const Tensor& responses, SampleMode mode, double temperature, Rng& rng);

std::pair<Tensor, WinnerState> dense_lwta_forward(const Tensor& x, const DenseLwtaLayer& layer, SampleMode mode,
                                                  double temperature, Rng& rng);

std::pair<Tensor, WinnerState> conv_lwta_forward(const Tensor& x, const ConvLwtaLayer& layer, SampleMode mode,
                                                 double temperature, Rng& rng);

// Kernel rearranged to [h, l, C, B*U] with channel index b*U + u.
Tensor conv_lwta_kernel(const ConvLwtaLayer& layer);

}  // namespace lwta
