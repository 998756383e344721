#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

// On-disk array container shared by every pipeline stage:
//
//   "OATD" | u16 version | u8 dtype | u8 ndim | ndim x u64 dims | payload | u32 crc32(payload)
//
// All integers and payload values are little-endian; the payload is row-major.

namespace oat::io {

inline constexpr std::uint16_t kTensorFileVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

std::size_t dtype_size(DType d);

struct TensorRecord {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::vector<double> f64;  // filled when dtype == f64
  std::vector<float> f32;   // filled when dtype == f32

  std::size_t element_count() const;
  /// Values widened to double regardless of the stored dtype.
  std::vector<double> as_f64() const;
  std::vector<float> as_f32() const;
};

std::vector<std::byte> encode_tensor(std::span<const double> values, std::span<const std::uint64_t> dims);
std::vector<std::byte> encode_tensor(std::span<const float> values, std::span<const std::uint64_t> dims);
/// Throws IoError on bad magic, version, dtype, size or CRC.
TensorRecord decode_tensor(std::span<const std::byte> bytes);

void write_tensor(const std::string& path, std::span<const double> values,
                  std::span<const std::uint64_t> dims);
void write_tensor(const std::string& path, std::span<const float> values,
                  std::span<const std::uint64_t> dims);
TensorRecord read_tensor(const std::string& path);

std::vector<std::byte> read_file_bytes(const std::string& path);
/// Writes through a temporary file and renames, so readers never see partial files.
void write_file_bytes(const std::string& path, std::span<const std::byte> bytes);

}  // namespace oat::io
