#include "lwta/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <limits>
#include <variant>

#include "lwta/data.hpp"

namespace lwta {

namespace {

enum class LayerKind : std::uint8_t { dense_lwta = 1, conv_lwta = 2, dense = 3, conv = 4 };

constexpr std::size_t kHeaderBytes = 16;  // magic + version + payload length
constexpr std::size_t kTrailerBytes = 4;
constexpr std::uint32_t kMaxDimension = 1U << 24;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void size(std::size_t v) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw ModelIoError("dimension too large for model file");
    u32(static_cast<std::uint32_t>(v));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void blob(const Tensor& t) {
    size(t.size());
    for (double v : t.data()) {
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f)) throw ModelIoError("cannot save non-finite weight");
      f32(f);
    }
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  std::size_t dim() {
    const auto v = u32();
    if (v == 0 || v > kMaxDimension) throw DescriptorError("implausible dimension " + std::to_string(v));
    return v;
  }
  std::size_t count() {
    const auto v = u32();
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool flag() {
    const auto v = u8();
    if (v > 1) throw DescriptorError("flag byte must be 0 or 1");
    return v == 1;
  }
  Tensor blob(const Shape& shape) {
    const std::size_t declared = shape_numel(shape);
    const std::size_t stored = count();
    if (stored != declared) {
      throw ShapeMismatchError("blob holds " + std::to_string(stored) + " values, shape " + shape_to_string(shape) +
                               " needs " + std::to_string(declared));
    }
    need(4 * stored);
    std::vector<double> values(stored);
    for (auto& v : values) {
      const float f = f32();
      if (!std::isfinite(f)) throw DescriptorError("non-finite weight in model file");
      v = f;
    }
    return Tensor::parameter(shape, std::move(values));
  }
  bool at_end() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw ShapeMismatchError("payload ends inside a section");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
  std::size_t end_;
};

Activation read_activation(Reader& r) {
  const auto v = r.u8();
  if (v > 1) throw DescriptorError("unknown activation code");
  return v == 1 ? Activation::relu : Activation::identity;
}

}  // namespace

std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::vector<std::uint8_t> serialize_model(const Network& net) {
  Writer p;
  p.size(net.input.height);
  p.size(net.input.width);
  p.size(net.input.channels);
  p.size(net.classes);
  p.f64(net.temperature);
  p.size(net.layers.size());
  for (const auto& l : net.layers) {
    if (const auto* d = std::get_if<DenseLwtaLayer>(&l)) {
      p.u8(static_cast<std::uint8_t>(LayerKind::dense_lwta));
      p.size(d->inputs);
      p.size(d->blocks);
      p.size(d->units);
      p.u8(d->bias ? 1 : 0);
    } else if (const auto* c = std::get_if<ConvLwtaLayer>(&l)) {
      p.u8(static_cast<std::uint8_t>(LayerKind::conv_lwta));
      p.size(c->blocks);
      p.size(c->kernel_h);
      p.size(c->kernel_w);
      p.size(c->channels);
      p.size(c->units);
      p.size(c->stride);
      p.size(c->padding);
      p.u8(c->bias ? 1 : 0);
    } else if (const auto* dd = std::get_if<DenseLayer>(&l)) {
      p.u8(static_cast<std::uint8_t>(LayerKind::dense));
      p.size(dd->inputs);
      p.size(dd->outputs);
      p.u8(dd->activation == Activation::relu ? 1 : 0);
      p.u8(dd->bias ? 1 : 0);
    } else {
      const auto& cc = std::get<ConvLayer>(l);
      p.u8(static_cast<std::uint8_t>(LayerKind::conv));
      p.size(cc.kernel_h);
      p.size(cc.kernel_w);
      p.size(cc.channels);
      p.size(cc.filters);
      p.size(cc.stride);
      p.size(cc.padding);
      p.u8(cc.activation == Activation::relu ? 1 : 0);
      p.u8(cc.bias ? 1 : 0);
    }
  }
  for (const auto& t : net.parameters()) p.blob(t);

  Writer out;
  out.bytes = {'L', 'W', 'T', 'A'};
  out.u32(kModelFormatVersion);
  out.u64(p.bytes.size());
  out.bytes.insert(out.bytes.end(), p.bytes.begin(), p.bytes.end());
  out.u32(crc32_of(out.bytes));
  return out.bytes;
}

Network deserialize_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw LengthError("file shorter than the magic");
  if (!(bytes[0] == 'L' && bytes[1] == 'W' && bytes[2] == 'T' && bytes[3] == 'A')) {
    throw BadMagicError("not an LWTA model file");
  }
  if (bytes.size() < 8) throw LengthError("file ends inside the header");
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= std::uint32_t{bytes[4 + i]} << (8 * i);
  if (version != kModelFormatVersion) {
    throw VersionError("model format version " + std::to_string(version) + ", expected " +
                       std::to_string(kModelFormatVersion));
  }
  if (bytes.size() < kHeaderBytes + kTrailerBytes) throw LengthError("file ends inside the header");
  std::uint64_t payload = 0;
  for (int i = 0; i < 8; ++i) payload |= std::uint64_t{bytes[8 + i]} << (8 * i);
  if (payload != bytes.size() - kHeaderBytes - kTrailerBytes) {
    throw LengthError("payload length " + std::to_string(payload) + " does not match file size " +
                      std::to_string(bytes.size()));
  }
  const std::size_t crc_at = bytes.size() - kTrailerBytes;
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) stored_crc |= std::uint32_t{bytes[crc_at + i]} << (8 * i);
  const std::vector<std::uint8_t> body(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(crc_at));
  if (crc32_of(body) != stored_crc) throw ChecksumError("model file checksum mismatch");

  Reader r(bytes, kHeaderBytes, crc_at);
  Network net;
  net.precision = WeightPrecision::fp32;
  net.input.height = r.dim();
  net.input.width = r.dim();
  net.input.channels = r.dim();
  net.classes = r.dim();
  net.temperature = r.f64();
  if (!(net.temperature > 0.0) || !std::isfinite(net.temperature)) throw DescriptorError("temperature must be > 0");
  const std::size_t layer_count = r.count();
  if (layer_count > 4096) throw DescriptorError("implausible layer count");

  struct Pending {
    Layer layer;
    Shape weight_shape;
    std::optional<Shape> bias_shape;
  };
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < layer_count; ++i) {
    const auto kind = r.u8();
    switch (static_cast<LayerKind>(kind)) {
      case LayerKind::dense_lwta: {
        DenseLwtaLayer d;
        d.inputs = r.dim();
        d.blocks = r.dim();
        d.units = r.dim();
        const bool bias = r.flag();
        pending.push_back({d, {d.inputs, d.blocks, d.units}, bias ? std::optional<Shape>(Shape{d.blocks, d.units}) : std::nullopt});
        break;
      }
      case LayerKind::conv_lwta: {
        ConvLwtaLayer c;
        c.blocks = r.dim();
        c.kernel_h = r.dim();
        c.kernel_w = r.dim();
        c.channels = r.dim();
        c.units = r.dim();
        c.stride = r.dim();
        c.padding = r.count();
        const bool bias = r.flag();
        pending.push_back({c, {c.blocks, c.kernel_h, c.kernel_w, c.channels, c.units},
                           bias ? std::optional<Shape>(Shape{c.blocks, c.units}) : std::nullopt});
        break;
      }
      case LayerKind::dense: {
        DenseLayer d;
        d.inputs = r.dim();
        d.outputs = r.dim();
        d.activation = read_activation(r);
        const bool bias = r.flag();
        pending.push_back({d, {d.inputs, d.outputs}, bias ? std::optional<Shape>(Shape{d.outputs}) : std::nullopt});
        break;
      }
      case LayerKind::conv: {
        ConvLayer c;
        c.kernel_h = r.dim();
        c.kernel_w = r.dim();
        c.channels = r.dim();
        c.filters = r.dim();
        c.stride = r.dim();
        c.padding = r.count();
        c.activation = read_activation(r);
        const bool bias = r.flag();
        pending.push_back({c, {c.kernel_h, c.kernel_w, c.channels, c.filters},
                           bias ? std::optional<Shape>(Shape{c.filters}) : std::nullopt});
        break;
      }
      default:
        throw DescriptorError("unknown layer kind " + std::to_string(kind));
    }
  }
  for (auto& p : pending) {
    Tensor w = r.blob(p.weight_shape);
    std::optional<Tensor> b;
    if (p.bias_shape) b = r.blob(*p.bias_shape);
    std::visit(
        [&](auto& layer) {
          layer.weights = std::move(w);
          layer.bias = std::move(b);
        },
        p.layer);
    net.layers.push_back(std::move(p.layer));
  }
  if (!r.at_end()) throw ShapeMismatchError("payload has bytes beyond the declared blobs");
  return net;
}

void save_model(const Network& net, const std::filesystem::path& path) { write_file(path, serialize_model(net)); }

Network load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace lwta
