#pragma once

#include "lwta/network.hpp"
#include "lwta/rng.hpp"

namespace lwta {

// Same layer shapes with every LWTA block replaced by B*U ReLU units (dense)
// or B*U ReLU feature maps (conv). Parameter counts match exactly.
NetworkSpec relu_twin_spec(const NetworkSpec& lwta_spec);

Network build_relu_twin(const NetworkSpec& lwta_spec, Rng& rng, InitKind kind = InitKind::fan_in_uniform,
                        WeightPrecision precision = WeightPrecision::fp32);

// Deterministic copy of an LWTA network sharing its weights, with LWTA layers
// turned into dense/conv layers using `activation`.
Network deterministic_twin(const Network& lwta_net, Activation activation);

}  // namespace lwta
