#include "oat/io/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"

namespace oat::io {
namespace {

constexpr char kMagic[4] = {'O', 'A', 'T', 'D'};
constexpr std::size_t kMaxDims = 8;

template <class U>
void put_le(std::vector<std::byte>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

template <class U>
U get_le(std::span<const std::byte> in, std::size_t off) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(std::to_integer<unsigned>(in[off + i])) << (8 * i);
  return v;
}

std::uint64_t checked_count(std::span<const std::uint64_t> dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > UINT64_MAX / d) throw IoError("tensor dims overflow");
    n *= d;
  }
  return n;
}

template <class T, class Bits>
std::vector<std::byte> encode_impl(std::span<const T> values, std::span<const std::uint64_t> dims,
                                   DType dtype) {
  if (dims.size() > kMaxDims) throw ShapeError("tensor rank above 8");
  if (checked_count(dims) != values.size()) throw ShapeError("tensor dims do not match value count");
  std::vector<std::byte> out;
  out.reserve(8 + 8 * dims.size() + values.size() * sizeof(T) + 4);
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_le<std::uint16_t>(out, kTensorFileVersion);
  out.push_back(static_cast<std::byte>(dtype));
  out.push_back(static_cast<std::byte>(dims.size()));
  for (auto d : dims) put_le<std::uint64_t>(out, d);
  const std::size_t payload_begin = out.size();
  for (T v : values) put_le<Bits>(out, std::bit_cast<Bits>(v));
  const auto crc = oat::crc32(std::span(out).subspan(payload_begin));
  put_le<std::uint32_t>(out, crc);
  return out;
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32:
      return 4;
    case DType::f64:
      return 8;
  }
  throw IoError("unknown dtype");
}

std::size_t TensorRecord::element_count() const {
  return dtype == DType::f64 ? f64.size() : f32.size();
}

std::vector<double> TensorRecord::as_f64() const {
  if (dtype == DType::f64) return f64;
  return {f32.begin(), f32.end()};
}

std::vector<float> TensorRecord::as_f32() const {
  if (dtype == DType::f32) return f32;
  std::vector<float> out(f64.size());
  for (std::size_t i = 0; i < f64.size(); ++i) out[i] = static_cast<float>(f64[i]);
  return out;
}

std::vector<std::byte> encode_tensor(std::span<const double> values, std::span<const std::uint64_t> dims) {
  return encode_impl<double, std::uint64_t>(values, dims, DType::f64);
}

std::vector<std::byte> encode_tensor(std::span<const float> values, std::span<const std::uint64_t> dims) {
  return encode_impl<float, std::uint32_t>(values, dims, DType::f32);
}

TensorRecord decode_tensor(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 + 4) throw IoError("tensor file truncated (header)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("tensor file: bad magic");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kTensorFileVersion) throw IoError("tensor file: unsupported version " + std::to_string(version));
  const auto dtype_code = std::to_integer<unsigned>(bytes[6]);
  if (dtype_code != 1 && dtype_code != 2) throw IoError("tensor file: bad dtype code");
  const auto ndim = std::to_integer<unsigned>(bytes[7]);
  if (ndim > kMaxDims) throw IoError("tensor file: rank above 8");
  const std::size_t header = 8 + 8 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header + 4) throw IoError("tensor file truncated (dims)");
  TensorRecord rec;
  rec.dtype = static_cast<DType>(dtype_code);
  rec.dims.resize(ndim);
  for (unsigned i = 0; i < ndim; ++i) rec.dims[i] = get_le<std::uint64_t>(bytes, 8 + 8 * i);
  const std::uint64_t count = checked_count(rec.dims);
  const std::size_t esize = dtype_size(rec.dtype);
  if (count > (bytes.size() - header - 4) / esize || header + count * esize + 4 != bytes.size())
    throw IoError("tensor file: payload length does not match dims");
  const auto payload = bytes.subspan(header, count * esize);
  const auto stored_crc = get_le<std::uint32_t>(bytes, header + count * esize);
  if (oat::crc32(payload) != stored_crc) throw IoError("tensor file: CRC mismatch");
  if (rec.dtype == DType::f64) {
    rec.f64.resize(count);
    for (std::size_t i = 0; i < count; ++i) rec.f64[i] = std::bit_cast<double>(get_le<std::uint64_t>(payload, 8 * i));
  } else {
    rec.f32.resize(count);
    for (std::size_t i = 0; i < count; ++i) rec.f32[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload, 4 * i));
  }
  return rec;
}

std::vector<std::byte> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> buf(size);
  in.seekg(0);
  if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size)))
    throw IoError("short read on " + path);
  return buf;
}

void write_file_bytes(const std::string& path, std::span<const std::byte> bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_tensor(const std::string& path, std::span<const double> values, std::span<const std::uint64_t> dims) {
  write_file_bytes(path, encode_tensor(values, dims));
}

void write_tensor(const std::string& path, std::span<const float> values, std::span<const std::uint64_t> dims) {
  write_file_bytes(path, encode_tensor(values, dims));
}

TensorRecord read_tensor(const std::string& path) {
  try {
    return decode_tensor(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace oat::io
