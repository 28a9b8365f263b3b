#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lwta/layers.hpp"
#include "lwta/rng.hpp"
#include "lwta/tensor.hpp"

namespace lwta {

enum class Activation { identity, relu };

// Deterministic fully connected layer, used for classifier heads and ReLU twins.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  Activation activation = Activation::identity;
  Tensor weights;               // [J, K]
  std::optional<Tensor> bias;  // [K]
};

// Deterministic convolution, used for ReLU twins and linear references.
struct ConvLayer {
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t channels = 0;
  std::size_t filters = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::identity;
  Tensor weights;               // [h, l, C, F]
  std::optional<Tensor> bias;  // [F]
};

using Layer = std::variant<DenseLwtaLayer, ConvLwtaLayer, DenseLayer, ConvLayer>;

// Per-sample image shape, HWC.
struct InputShape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t numel() const { return height * width * channels; }
  bool operator==(const InputShape&) const = default;
};

enum class WeightPrecision { fp32, fp64 };

// Architecture without weights.
struct DenseLwtaSpec {
  std::size_t blocks = 0;
  std::size_t units = 0;
  bool bias = false;
};
struct ConvLwtaSpec {
  std::size_t blocks = 0;
  std::size_t units = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  bool bias = false;
};
struct DenseSpec {
  std::size_t outputs = 0;
  Activation activation = Activation::identity;
  bool bias = true;
};
struct ConvSpec {
  std::size_t filters = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  Activation activation = Activation::identity;
  bool bias = false;
};
using LayerSpec = std::variant<DenseLwtaSpec, ConvLwtaSpec, DenseSpec, ConvSpec>;

struct NetworkSpec {
  InputShape input;
  std::size_t classes = 10;
  std::vector<LayerSpec> hidden;  // a linear classifier head is appended
  bool head_bias = true;
  double temperature = kDefaultTemperature;
};

// Ordered layer sequence. The last layer produces class logits.
struct Network {
  InputShape input;
  std::size_t classes = 0;
  double temperature = kDefaultTemperature;
  WeightPrecision precision = WeightPrecision::fp32;
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  bool is_stochastic() const;  // any LWTA layer with U > 1
  // All weight and bias tensors in declaration order.
  std::vector<Tensor> parameters() const;
  // Replaces parameters in declaration order (same shapes required).
  void set_parameters(const std::vector<Tensor>& params);
  Network clone() const;
};

struct ForwardOptions {
  SampleMode mode = SampleMode::hard;
  double temperature = kDefaultTemperature;
};

struct ForwardResult {
  Tensor logits;                    // [N, classes]
  std::vector<WinnerState> winners;  // one per LWTA layer, in order
};

// x is [N, H, L, C]; dense layers see it flattened.
ForwardResult forward(const Network& net, const Tensor& x, const ForwardOptions& options, Rng& rng);

enum class InitKind { fan_in_uniform, zeros };

// Weights ~ Uniform(-s, s), s = sqrt(6 / fan_in); fan_in counts the inputs of
// one unit or feature map. Biases start at zero.
Network init_weights(const NetworkSpec& spec, Rng& rng, InitKind kind = InitKind::fan_in_uniform,
                     WeightPrecision precision = WeightPrecision::fp32);

// Preset names: mlp-small, cnn-small. Inline form: comma separated
// dense:B64xU2, conv:B16xU2[xK3][s2][p1], relu:K128, reluconv:F32[xK3][s1][p1].
NetworkSpec parse_architecture(const std::string& arch, const InputShape& input, std::size_t classes);

std::size_t layer_parameter_count(const Layer& layer);
std::string describe(const Network& net);

}  // namespace lwta
