#include "lwta/network.hpp"

#include <cmath>
#include <regex>
#include <sstream>

#include "lwta/baseline.hpp"
#include "lwta/error.hpp"
#include "lwta/ops.hpp"

namespace lwta {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Tensor flatten(const Tensor& x) {
  if (x.rank() == 2) return x;
  const std::size_t n = x.dim(0);
  return reshape(x, {n, x.size() / std::max<std::size_t>(n, 1)});
}

Tensor activate(const Tensor& x, Activation act) { return act == Activation::relu ? relu(x) : x; }

Tensor make_weights(const Shape& shape, std::size_t fan_in, Rng& rng, InitKind kind, WeightPrecision precision) {
  std::vector<double> values(shape_numel(shape), 0.0);
  if (kind == InitKind::fan_in_uniform) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : values) {
      v = rng.uniform(-s, s);
      if (precision == WeightPrecision::fp32) v = static_cast<float>(v);
    }
  }
  return Tensor::parameter(shape, std::move(values));
}

Tensor make_bias(const Shape& shape) { return Tensor::parameter(shape, std::vector<double>(shape_numel(shape), 0.0)); }

}  // namespace

std::size_t layer_parameter_count(const Layer& layer) {
  return std::visit([](const auto& l) { return l.weights.size() + (l.bias ? l.bias->size() : 0); }, layer);
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += layer_parameter_count(l);
  return total;
}

bool Network::is_stochastic() const {
  for (const auto& l : layers) {
    if (const auto* d = std::get_if<DenseLwtaLayer>(&l); d && d->units > 1) return true;
    if (const auto* c = std::get_if<ConvLwtaLayer>(&l); c && c->units > 1) return true;
  }
  return false;
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    std::visit(
        [&](const auto& layer) {
          out.push_back(layer.weights);
          if (layer.bias) out.push_back(*layer.bias);
        },
        l);
  }
  return out;
}

void Network::set_parameters(const std::vector<Tensor>& params) {
  std::size_t k = 0;
  auto take = [&](Tensor& slot) {
    if (k >= params.size()) throw ContractError("set_parameters: too few tensors");
    if (params[k].shape() != slot.shape()) throw DimensionError("set_parameters: shape mismatch");
    slot = params[k++];
  };
  for (auto& l : layers) {
    std::visit(
        [&](auto& layer) {
          take(layer.weights);
          if (layer.bias) take(*layer.bias);
        },
        l);
  }
  if (k != params.size()) throw ContractError("set_parameters: too many tensors");
}

Network Network::clone() const {
  Network copy = *this;
  std::vector<Tensor> fresh;
  for (const auto& p : parameters()) fresh.push_back(p.as_parameter());
  copy.set_parameters(fresh);
  return copy;
}

ForwardResult forward(const Network& net, const Tensor& x, const ForwardOptions& options, Rng& rng) {
  if (x.rank() != 4 || x.dim(1) != net.input.height || x.dim(2) != net.input.width ||
      x.dim(3) != net.input.channels) {
    throw DimensionError("network expects input [N, " + std::to_string(net.input.height) + ", " +
                         std::to_string(net.input.width) + ", " + std::to_string(net.input.channels) + "], got " +
                         shape_to_string(x.shape()));
  }
  ForwardResult result;
  Tensor h = x;
  for (const auto& l : net.layers) {
    h = std::visit(overloaded{
                       [&](const DenseLwtaLayer& layer) {
                         auto [y, state] = dense_lwta_forward(flatten(h), layer, options.mode, options.temperature, rng);
                         result.winners.push_back(std::move(state));
                         return y;
                       },
                       [&](const ConvLwtaLayer& layer) {
                         auto [y, state] = conv_lwta_forward(h, layer, options.mode, options.temperature, rng);
                         result.winners.push_back(std::move(state));
                         return y;
                       },
                       [&](const DenseLayer& layer) {
                         Tensor in = flatten(h);
                         if (in.dim(1) != layer.inputs) {
                           throw DimensionError("dense layer expects width " + std::to_string(layer.inputs) +
                                                ", got " + std::to_string(in.dim(1)));
                         }
                         Tensor y = matmul(in, layer.weights);
                         if (layer.bias) y = add_bias(y, *layer.bias);
                         return activate(y, layer.activation);
                       },
                       [&](const ConvLayer& layer) {
                         Tensor y = conv2d(h, layer.weights, layer.stride, layer.padding);
                         if (layer.bias) y = add_bias(y, *layer.bias);
                         return activate(y, layer.activation);
                       },
                   },
                   l);
  }
  result.logits = flatten(h);
  return result;
}

Network init_weights(const NetworkSpec& spec, Rng& rng, InitKind kind, WeightPrecision precision) {
  if (spec.classes < 1) throw ParameterError("network needs at least one class");
  Network net;
  net.input = spec.input;
  net.classes = spec.classes;
  net.temperature = spec.temperature;
  net.precision = precision;

  // running activation shape: spatial (h, w, c) until the first dense layer
  std::size_t h = spec.input.height, w = spec.input.width, c = spec.input.channels;
  bool flat = false;
  auto width = [&] { return flat ? c : h * w * c; };
  auto conv_out = [&](std::size_t extent, std::size_t k, std::size_t stride, std::size_t pad) {
    if (stride < 1 || extent + 2 * pad < k || (extent + 2 * pad - k) % stride != 0) {
      throw DimensionError("convolution (k=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
                           ", pad=" + std::to_string(pad) + ") does not tile extent " + std::to_string(extent));
    }
    return (extent + 2 * pad - k) / stride + 1;
  };

  for (const auto& ls : spec.hidden) {
    std::visit(overloaded{
                   [&](const DenseLwtaSpec& s) {
                     if (s.blocks < 1 || s.units < 1) throw ParameterError("LWTA layer needs B >= 1 and U >= 1");
                     DenseLwtaLayer layer;
                     layer.inputs = width();
                     layer.blocks = s.blocks;
                     layer.units = s.units;
                     layer.weights = make_weights({layer.inputs, s.blocks, s.units}, layer.inputs, rng, kind, precision);
                     if (s.bias) layer.bias = make_bias({s.blocks, s.units});
                     flat = true;
                     c = layer.output_width();
                     net.layers.emplace_back(std::move(layer));
                   },
                   [&](const ConvLwtaSpec& s) {
                     if (flat) throw ParameterError("convolution after a dense layer");
                     if (s.blocks < 1 || s.units < 1) throw ParameterError("LWTA layer needs B >= 1 and U >= 1");
                     ConvLwtaLayer layer;
                     layer.blocks = s.blocks;
                     layer.kernel_h = layer.kernel_w = s.kernel;
                     layer.channels = c;
                     layer.units = s.units;
                     layer.stride = s.stride;
                     layer.padding = s.padding;
                     layer.weights = make_weights({s.blocks, s.kernel, s.kernel, c, s.units}, s.kernel * s.kernel * c,
                                                  rng, kind, precision);
                     if (s.bias) layer.bias = make_bias({s.blocks, s.units});
                     h = conv_out(h, s.kernel, s.stride, s.padding);
                     w = conv_out(w, s.kernel, s.stride, s.padding);
                     c = layer.output_channels();
                     net.layers.emplace_back(std::move(layer));
                   },
                   [&](const DenseSpec& s) {
                     if (s.outputs < 1) throw ParameterError("dense layer needs at least one output");
                     DenseLayer layer;
                     layer.inputs = width();
                     layer.outputs = s.outputs;
                     layer.activation = s.activation;
                     layer.weights = make_weights({layer.inputs, s.outputs}, layer.inputs, rng, kind, precision);
                     if (s.bias) layer.bias = make_bias({s.outputs});
                     flat = true;
                     c = s.outputs;
                     net.layers.emplace_back(std::move(layer));
                   },
                   [&](const ConvSpec& s) {
                     if (flat) throw ParameterError("convolution after a dense layer");
                     if (s.filters < 1) throw ParameterError("conv layer needs at least one filter");
                     ConvLayer layer;
                     layer.kernel_h = layer.kernel_w = s.kernel;
                     layer.channels = c;
                     layer.filters = s.filters;
                     layer.stride = s.stride;
                     layer.padding = s.padding;
                     layer.activation = s.activation;
                     layer.weights =
                         make_weights({s.kernel, s.kernel, c, s.filters}, s.kernel * s.kernel * c, rng, kind, precision);
                     if (s.bias) layer.bias = make_bias({s.filters});
                     h = conv_out(h, s.kernel, s.stride, s.padding);
                     w = conv_out(w, s.kernel, s.stride, s.padding);
                     c = s.filters;
                     net.layers.emplace_back(std::move(layer));
                   },
               },
               ls);
  }

  DenseLayer head;
  head.inputs = width();
  head.outputs = spec.classes;
  head.weights = make_weights({head.inputs, spec.classes}, head.inputs, rng, kind, precision);
  if (spec.head_bias) head.bias = make_bias({spec.classes});
  net.layers.emplace_back(std::move(head));
  return net;
}

NetworkSpec parse_architecture(const std::string& arch, const InputShape& input, std::size_t classes) {
  NetworkSpec spec;
  spec.input = input;
  spec.classes = classes;
  const std::string twin_prefix = "relu-twin:";
  if (arch.rfind(twin_prefix, 0) == 0) {
    return relu_twin_spec(parse_architecture(arch.substr(twin_prefix.size()), input, classes));
  }
  if (arch == "mlp-small") {
    spec.hidden = {DenseLwtaSpec{64, 2, false}, DenseLwtaSpec{64, 2, false}};
    return spec;
  }
  if (arch == "linear") return spec;
  if (arch == "cnn-small") {
    spec.hidden = {ConvLwtaSpec{16, 2, 4, 2, 1, false}, ConvLwtaSpec{16, 2, 4, 2, 1, false},
                   DenseLwtaSpec{64, 2, false}};
    return spec;
  }

  static const std::regex dense_re(R"(dense:B(\d+)xU(\d+)(b?))");
  static const std::regex conv_re(R"(conv:B(\d+)xU(\d+)(?:xK(\d+))?(?:s(\d+))?(?:p(\d+))?(b?))");
  static const std::regex relu_re(R"((relu|linear):K(\d+))");
  static const std::regex reluconv_re(R"((reluconv|linconv):F(\d+)(?:xK(\d+))?(?:s(\d+))?(?:p(\d+))?(b?))");
  std::stringstream ss(arch);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::smatch m;
    auto num = [&](std::size_t i, std::size_t fallback) {
      return m[i].matched && m[i].length() > 0 ? static_cast<std::size_t>(std::stoul(m[i].str())) : fallback;
    };
    if (std::regex_match(item, m, dense_re)) {
      spec.hidden.emplace_back(DenseLwtaSpec{num(1, 0), num(2, 0), m[3].length() > 0});
    } else if (std::regex_match(item, m, conv_re)) {
      const auto k = num(3, 3);
      spec.hidden.emplace_back(ConvLwtaSpec{num(1, 0), num(2, 0), k, num(4, 1), num(5, k / 2), m[6].length() > 0});
    } else if (std::regex_match(item, m, relu_re)) {
      spec.hidden.emplace_back(
          DenseSpec{num(2, 0), m[1].str() == "relu" ? Activation::relu : Activation::identity, true});
    } else if (std::regex_match(item, m, reluconv_re)) {
      const auto k = num(3, 3);
      spec.hidden.emplace_back(ConvSpec{num(2, 0), k, num(4, 1), num(5, k / 2),
                                        m[1].str() == "reluconv" ? Activation::relu : Activation::identity,
                                        m[6].length() > 0});
    } else {
      throw ParameterError("unknown architecture element '" + item + "'");
    }
  }
  if (spec.hidden.empty()) throw ParameterError("unknown architecture '" + arch + "'");
  return spec;
}

std::string describe(const Network& net) {
  std::ostringstream os;
  os << "input " << net.input.height << "x" << net.input.width << "x" << net.input.channels << " -> ";
  for (const auto& l : net.layers) {
    std::visit(overloaded{
                   [&](const DenseLwtaLayer& d) { os << "dense-lwta(B" << d.blocks << ",U" << d.units << ") "; },
                   [&](const ConvLwtaLayer& c) {
                     os << "conv-lwta(B" << c.blocks << ",U" << c.units << ",K" << c.kernel_h << ",s" << c.stride
                        << ") ";
                   },
                   [&](const DenseLayer& d) {
                     os << (d.activation == Activation::relu ? "relu" : "linear") << "(" << d.outputs << ") ";
                   },
                   [&](const ConvLayer& c) {
                     os << (c.activation == Activation::relu ? "reluconv" : "linconv") << "(F" << c.filters << ",K"
                        << c.kernel_h << ",s" << c.stride << ") ";
                   },
               },
               l);
  }
  os << "| params " << net.parameter_count();
  return os.str();
}

}  // namespace lwta
