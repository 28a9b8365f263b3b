#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lwta/rng.hpp"
#include "lwta/tensor.hpp"

namespace lwta {

// Images [N, H, L, C] with values in [0, 1] and integer labels in [0, classes).
struct Dataset {
  Tensor images;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }

  // Throws FormatError when values leave [0, 1] or a label is out of range.
  void validate() const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 3073;

// IDX image/label pair (big-endian headers, unsigned byte payload). Pixels
// are scaled by 1/255. classes == 0 infers max(label) + 1.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t classes = 0);
Dataset parse_idx(const std::vector<std::uint8_t>& image_bytes, const std::vector<std::uint8_t>& label_bytes,
                  std::size_t classes = 0);

// Quantizes to round(255 * v). Requires single-channel images.
void write_idx(const Dataset& data, const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
std::vector<std::uint8_t> encode_idx_images(const Dataset& data);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& data);

// One CIFAR-10 binary batch: records of 1 label byte + 3072 channel-planar
// pixel bytes, converted to [N, 32, 32, 3] HWC.
Dataset parse_cifar10_batch(const std::vector<std::uint8_t>& bytes);
Dataset load_cifar10_file(const std::filesystem::path& path);

enum class CifarSplit { train, test };
// data_batch_1..5.bin (train) or test_batch.bin (test) from `dir`.
Dataset load_cifar10_binary(const std::filesystem::path& dir, CifarSplit split = CifarSplit::train);
std::vector<std::uint8_t> encode_cifar10_batch(const Dataset& data);

// Gaussian clusters centred on scaled hypercube vertices, clamped to [0, 1].
// Shape [N, 1, 1, dim] with N = classes * n_per_class, class-interleaved.
Dataset synth_blobs(std::size_t classes, std::size_t n_per_class, std::size_t dim, double separation,
                    std::uint64_t seed, double noise = 0.1);
// Class centres used by synth_blobs, [classes, dim].
std::vector<std::vector<double>> blob_centres(std::size_t classes, std::size_t dim, double separation);

// Copy with images viewed as [N, height, width, channels].
Dataset reshape_images(const Dataset& data, std::size_t height, std::size_t width, std::size_t channels);
Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);
Dataset head(const Dataset& data, std::size_t count);

struct Batch {
  Tensor images;
  std::vector<std::size_t> labels;
};
Batch gather(const Dataset& data, const std::vector<std::size_t>& indices);

// Per-epoch permutation determined by (seed, epoch).
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed, bool shuffle = true);

  std::vector<std::size_t> permutation(std::size_t epoch) const;
  std::vector<std::vector<std::size_t>> batches(std::size_t epoch) const;
  std::size_t batch_size() const { return batch_size_; }

 private:
  const Dataset* data_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

// CRC32 over label bytes and image values, as a hex string.
std::string fingerprint(const Dataset& data);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace lwta
