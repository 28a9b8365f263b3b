#include "lwta/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "lwta/error.hpp"

namespace lwta {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const char* what) {
  if (offset + 4 > bytes.size()) throw FormatError(std::string("truncated ") + what, bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::size_t infer_classes(const std::vector<std::size_t>& labels, std::size_t classes) {
  if (classes != 0) return classes;
  std::size_t mx = 0;
  for (auto y : labels) mx = std::max(mx, y);
  return labels.empty() ? 0 : mx + 1;
}

}  // namespace

void Dataset::validate() const {
  if (images.rank() != 4) throw FormatError("dataset images must be [N, H, L, C]", 0);
  if (images.dim(0) != labels.size()) throw CountMismatchError("image count differs from label count", 0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double v = images[i];
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("pixel value outside [0, 1]", i);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw FormatError("label " + std::to_string(labels[i]) + " out of range", i);
  }
}

Dataset parse_idx(const std::vector<std::uint8_t>& image_bytes, const std::vector<std::uint8_t>& label_bytes,
                  std::size_t classes) {
  const auto image_magic = read_be32(image_bytes, 0, "IDX image header");
  if (image_magic != kIdxImageMagic) throw FormatError("bad IDX image magic", 0);
  const auto count = read_be32(image_bytes, 4, "IDX image header");
  const auto rows = read_be32(image_bytes, 8, "IDX image header");
  const auto cols = read_be32(image_bytes, 12, "IDX image header");
  const std::size_t pixels = std::size_t{count} * rows * cols;
  if (image_bytes.size() - 16 < pixels) throw FormatError("truncated IDX image payload", image_bytes.size());
  if (image_bytes.size() - 16 > pixels) throw FormatError("trailing bytes after IDX image payload", 16 + pixels);

  const auto label_magic = read_be32(label_bytes, 0, "IDX label header");
  if (label_magic != kIdxLabelMagic) throw FormatError("bad IDX label magic", 0);
  const auto label_count = read_be32(label_bytes, 4, "IDX label header");
  if (label_count != count) {
    throw CountMismatchError("label count " + std::to_string(label_count) + " != image count " + std::to_string(count),
                             4);
  }
  if (label_bytes.size() - 8 < label_count) throw FormatError("truncated IDX label payload", label_bytes.size());
  if (label_bytes.size() - 8 > label_count) throw FormatError("trailing bytes after IDX label payload", 8 + label_count);

  Dataset d;
  d.name = "idx";
  std::vector<double> values(pixels);
  for (std::size_t i = 0; i < pixels; ++i) values[i] = image_bytes[16 + i] / 255.0;
  d.images = Tensor({count, rows, cols, 1}, std::move(values));
  d.labels.assign(label_bytes.begin() + 8, label_bytes.end());
  d.classes = infer_classes(d.labels, classes);
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] >= d.classes) throw FormatError("label out of range", 8 + i);
  }
  return d;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t classes) {
  Dataset d = parse_idx(read_file(images_path), read_file(labels_path), classes);
  d.name = images_path.filename().string();
  return d;
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& data) {
  if (data.images.rank() != 4 || data.channels() != 1) throw DimensionError("IDX images must be single-channel");
  std::vector<std::uint8_t> out;
  out.reserve(16 + data.images.size());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  put_be32(out, static_cast<std::uint32_t>(data.height()));
  put_be32(out, static_cast<std::uint32_t>(data.width()));
  for (double v : data.images.data()) out.push_back(quantize(v));
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& data) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + data.size());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  for (auto y : data.labels) {
    if (y > 255) throw ParameterError("IDX labels are single bytes");
    out.push_back(static_cast<std::uint8_t>(y));
  }
  return out;
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  write_file(images_path, encode_idx_images(data));
  write_file(labels_path, encode_idx_labels(data));
}

Dataset parse_cifar10_batch(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 batch size " + std::to_string(bytes.size()) + " is not a multiple of 3073",
                      bytes.size() - bytes.size() % kCifarRecordBytes);
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  constexpr std::size_t side = 32, plane = side * side;
  Dataset d;
  d.name = "cifar10";
  d.classes = 10;
  d.labels.resize(n);
  std::vector<double> values(n * plane * 3);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t base = r * kCifarRecordBytes;
    if (bytes[base] > 9) throw FormatError("CIFAR-10 label byte out of range", base);
    d.labels[r] = bytes[base];
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) values[(r * plane + p) * 3 + c] = bytes[base + 1 + c * plane + p] / 255.0;
  }
  d.images = Tensor({n, side, side, 3}, std::move(values));
  return d;
}

Dataset load_cifar10_file(const std::filesystem::path& path) { return parse_cifar10_batch(read_file(path)); }

Dataset load_cifar10_binary(const std::filesystem::path& dir, CifarSplit split) {
  std::vector<std::filesystem::path> files;
  if (split == CifarSplit::train) {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(dir / "test_batch.bin");
  }
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    auto bytes = read_file(f);
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw FormatError(f.string() + ": size is not a multiple of 3073", bytes.size());
    }
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  Dataset d = parse_cifar10_batch(all);
  d.name = split == CifarSplit::train ? "cifar10-train" : "cifar10-test";
  return d;
}

std::vector<std::uint8_t> encode_cifar10_batch(const Dataset& data) {
  if (data.height() != 32 || data.width() != 32 || data.channels() != 3) {
    throw DimensionError("CIFAR-10 records are 32x32x3");
  }
  constexpr std::size_t plane = 32 * 32;
  std::vector<std::uint8_t> out;
  out.reserve(data.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < data.size(); ++r) {
    out.push_back(static_cast<std::uint8_t>(data.labels[r]));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) out.push_back(quantize(data.images[(r * plane + p) * 3 + c]));
  }
  return out;
}

std::vector<std::vector<double>> blob_centres(std::size_t classes, std::size_t dim, double separation) {
  std::size_t bits = 1;
  while ((std::size_t{1} << bits) < classes) ++bits;
  std::vector<std::vector<double>> centres(classes, std::vector<double>(dim));
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double vertex = static_cast<double>((k >> (d % bits)) & 1U);
      centres[k][d] = 0.5 + separation * (vertex - 0.5);
    }
  }
  return centres;
}

Dataset synth_blobs(std::size_t classes, std::size_t n_per_class, std::size_t dim, double separation,
                    std::uint64_t seed, double noise) {
  if (classes < 1 || n_per_class < 1 || dim < 1) throw ParameterError("synth_blobs needs classes, n_per_class, dim >= 1");
  std::size_t bits = 1;
  while ((std::size_t{1} << bits) < classes) ++bits;
  if (dim < bits) throw ParameterError("synth_blobs: dim too small to give every class its own vertex");
  const auto centres = blob_centres(classes, dim, separation);
  Rng rng(seed);
  const std::size_t n = classes * n_per_class;
  Dataset d;
  d.name = "blobs";
  d.classes = classes;
  d.labels.resize(n);
  std::vector<double> values(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    d.labels[i] = k;
    for (std::size_t j = 0; j < dim; ++j) values[i * dim + j] = std::clamp(centres[k][j] + rng.normal(0.0, noise), 0.0, 1.0);
  }
  d.images = Tensor({n, 1, 1, dim}, std::move(values));
  return d;
}

Dataset reshape_images(const Dataset& data, std::size_t height, std::size_t width, std::size_t channels) {
  Dataset d = data;
  d.images = Tensor({data.size(), height, width, channels}, data.images.values());
  return d;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
  Batch b = gather(data, indices);
  Dataset d;
  d.images = b.images;
  d.labels = std::move(b.labels);
  d.classes = data.classes;
  d.name = data.name;
  return d;
}

Dataset head(const Dataset& data, std::size_t count) {
  std::vector<std::size_t> idx(std::min(count, data.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(data, idx);
}

Batch gather(const Dataset& data, const std::vector<std::size_t>& indices) {
  const std::size_t per = data.images.size() / std::max<std::size_t>(data.size(), 1);
  std::vector<double> values(indices.size() * per);
  Batch b;
  b.labels.reserve(indices.size());
  const auto src = data.images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto k = indices[i];
    if (k >= data.size()) throw ContractError("dataset index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(k * per), per, values.begin() + static_cast<std::ptrdiff_t>(i * per));
    b.labels.push_back(data.labels[k]);
  }
  b.images = Tensor({indices.size(), data.height(), data.width(), data.channels()}, std::move(values));
  return b;
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : data_(&data), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
}

std::vector<std::size_t> BatchIterator::permutation(std::size_t epoch) const {
  std::vector<std::size_t> idx(data_->size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (!shuffle_) return idx;
  Rng rng = Rng(seed_).derive(epoch);
  // Fisher-Yates
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::vector<std::vector<std::size_t>> BatchIterator::batches(std::size_t epoch) const {
  const auto perm = permutation(epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < perm.size(); start += batch_size_) {
    const auto end = std::min(perm.size(), start + batch_size_);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::string fingerprint(const Dataset& data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (auto y : data.labels) {
    const auto b = static_cast<Bytef>(y & 0xff);
    crc = crc32(crc, &b, 1);
  }
  const auto values = data.images.data();
  crc = crc32(crc, reinterpret_cast<const Bytef*>(values.data()), static_cast<uInt>(values.size() * sizeof(double)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace lwta
