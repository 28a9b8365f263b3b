#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lwta/error.hpp"
#include "lwta/network.hpp"

namespace lwta {

// Binary model file, all integers little-endian:
//   "LWTA" | u32 version | u64 payload length | payload | u32 CRC32
// The payload holds the architecture descriptor followed by every weight
// tensor as (u32 element count, f32 values) in declaration order. The CRC
// covers every byte before it.
inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelIoError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public ModelIoError {
 public:
  using ModelIoError::ModelIoError;
};
class VersionError : public ModelIoError {
 public:
  using ModelIoError::ModelIoError;
};
class ChecksumError : public ModelIoError {
 public:
  using ModelIoError::ModelIoError;
};
class LengthError : public ModelIoError {
 public:
  using ModelIoError::ModelIoError;
};
class ShapeMismatchError : public ModelIoError {
 public:
  using ModelIoError::ModelIoError;
};
// Checksum-valid file whose descriptor makes no sense.
class DescriptorError : public ModelIoError {
 public:
  using ModelIoError::ModelIoError;
};

std::vector<std::uint8_t> serialize_model(const Network& net);
// Loaded weights are fp32 values held in the network's double tensors.
Network deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes);

}  // namespace lwta
