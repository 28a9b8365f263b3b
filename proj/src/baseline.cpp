#include "lwta/baseline.hpp"

#include <variant>

#include "lwta/ops.hpp"

namespace lwta {

NetworkSpec relu_twin_spec(const NetworkSpec& lwta_spec) {
  NetworkSpec twin = lwta_spec;
  twin.hidden.clear();
  for (const auto& ls : lwta_spec.hidden) {
    if (const auto* d = std::get_if<DenseLwtaSpec>(&ls)) {
      twin.hidden.emplace_back(DenseSpec{d->blocks * d->units, Activation::relu, d->bias});
    } else if (const auto* c = std::get_if<ConvLwtaSpec>(&ls)) {
      twin.hidden.emplace_back(ConvSpec{c->blocks * c->units, c->kernel, c->stride, c->padding, Activation::relu, c->bias});
    } else {
      twin.hidden.push_back(ls);
    }
  }
  return twin;
}

Network build_relu_twin(const NetworkSpec& lwta_spec, Rng& rng, InitKind kind, WeightPrecision precision) {
  return init_weights(relu_twin_spec(lwta_spec), rng, kind, precision);
}

Network deterministic_twin(const Network& lwta_net, Activation activation) {
  Network twin = lwta_net;
  twin.layers.clear();
  NoGradGuard no_grad;
  for (const auto& l : lwta_net.layers) {
    if (const auto* d = std::get_if<DenseLwtaLayer>(&l)) {
      DenseLayer layer;
      layer.inputs = d->inputs;
      layer.outputs = d->output_width();
      layer.activation = activation;
      layer.weights = Tensor::parameter({d->inputs, d->output_width()}, d->weights.values());
      if (d->bias) layer.bias = Tensor::parameter({d->output_width()}, d->bias->values());
      twin.layers.emplace_back(std::move(layer));
    } else if (const auto* c = std::get_if<ConvLwtaLayer>(&l)) {
      ConvLayer layer;
      layer.kernel_h = c->kernel_h;
      layer.kernel_w = c->kernel_w;
      layer.channels = c->channels;
      layer.filters = c->output_channels();
      layer.stride = c->stride;
      layer.padding = c->padding;
      layer.activation = activation;
      layer.weights = conv_lwta_kernel(*c).as_parameter();
      if (c->bias) layer.bias = Tensor::parameter({c->output_channels()}, c->bias->values());
      twin.layers.emplace_back(std::move(layer));
    } else {
      twin.layers.push_back(l);
    }
  }
  return twin;
}

}  // namespace lwta
