#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oat/core/error.hpp"
#include "oat/image.hpp"
#include "oat/io/pgm.hpp"
#include "oat/io/tensor_file.hpp"

using namespace oat;
using namespace oat::io;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "oat_io_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("tensor files round-trip bit-exactly") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> rank(0, 4), extent(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint64_t> dims(static_cast<std::size_t>(rank(rng)));
    std::size_t count = 1;
    for (auto& d : dims) count *= (d = static_cast<std::uint64_t>(extent(rng)));
    std::vector<double> v(count);
    for (auto& x : v) x = nd(rng);
    if (trial % 2 == 0) {
      const auto rec = decode_tensor(encode_tensor(std::span<const double>(v), dims));
      REQUIRE(rec.dtype == DType::f64);
      REQUIRE(rec.dims == dims);
      REQUIRE(rec.f64 == v);
    } else {
      std::vector<float> f(v.begin(), v.end());
      const auto rec = decode_tensor(encode_tensor(std::span<const float>(f), dims));
      REQUIRE(rec.dtype == DType::f32);
      REQUIRE(rec.f32 == f);
      REQUIRE(rec.as_f64().size() == f.size());
    }
  }
}

TEST_CASE("tensor file layout is little-endian with a trailing crc") {
  const std::vector<double> v{1.0};
  const std::vector<std::uint64_t> dims{1};
  const auto bytes = encode_tensor(std::span<const double>(v), dims);
  REQUIRE(bytes.size() == 4 + 2 + 1 + 1 + 8 + 8 + 4);
  CHECK(static_cast<char>(bytes[0]) == 'O');
  CHECK(static_cast<char>(bytes[3]) == 'D');
  CHECK(static_cast<int>(bytes[4]) == 1);
  CHECK(static_cast<int>(bytes[5]) == 0);
  CHECK(static_cast<int>(bytes[6]) == 2);
  CHECK(static_cast<int>(bytes[7]) == 1);
  CHECK(static_cast<int>(bytes[8]) == 1);
  // 1.0 = 0x3FF0000000000000
  CHECK(static_cast<int>(bytes[23]) == 0x3F);
  CHECK(static_cast<int>(bytes[22]) == 0xF0);
}

TEST_CASE("damaged tensor files are rejected") {
  const std::vector<double> v{1, 2, 3, 4, 5, 6};
  const std::vector<std::uint64_t> dims{2, 3};
  const auto good = encode_tensor(std::span<const double>(v), dims);
  for (std::size_t cut = 0; cut < good.size(); ++cut)
    CHECK_THROWS_AS(decode_tensor(std::span(good).first(cut)), IoError);
  for (std::size_t i = 0; i < good.size(); ++i) {
    auto bad = good;
    bad[i] ^= std::byte{0x40};
    CHECK_THROWS_AS(decode_tensor(bad), IoError);
  }
  auto extra = good;
  extra.push_back(std::byte{0});
  CHECK_THROWS_AS(decode_tensor(extra), IoError);
}

TEST_CASE("tensor files on disk") {
  const auto path = scratch("t.oatd").string();
  const std::vector<double> v{0.5, -0.25};
  const std::vector<std::uint64_t> dims{2};
  write_tensor(path, std::span<const double>(v), dims);
  CHECK(read_tensor(path).f64 == v);
  CHECK_THROWS_AS(read_tensor(scratch("missing.oatd").string()), IoError);
}

TEST_CASE("quantization to 16 bits") {
  CHECK(quantize16(0.0, 0.0, 1.0) == 0u);
  CHECK(quantize16(1.0, 0.0, 1.0) == 65535u);
  CHECK(quantize16(0.5, 0.0, 1.0) == 32768u);
  CHECK(quantize16(3.0, 2.0, 4.0) == 32768u);
  CHECK(quantize16(-1.0, 0.0, 1.0) == 0u);
  CHECK(quantize16(0.7, 1.0, 1.0) == 0u);
  for (int i = 0; i <= 1000; ++i) {
    const double v = i / 1000.0;
    CHECK(quantize16(v, 0.0, 1.0) == static_cast<unsigned>(std::lround(v * 65535.0)));
  }
}

TEST_CASE("pgm write then read recovers the quantized image") {
  Image img(5, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = 2.0 + 0.1 * static_cast<double>(i);
  const auto path = scratch("img.pgm").string();
  write_pgm16(path, img);
  const auto back = read_pgm(path);
  REQUIRE(back.same_shape(img));
  const auto norm = minmax_normalize(img);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.pixels[i] == doctest::Approx(norm.pixels[i]).epsilon(1e-4));
  CHECK(back.pixels.front() == 0.0);
  CHECK(back.pixels.back() == 1.0);
}

TEST_CASE("ascii pgm with comments") {
  const auto path = scratch("ascii.pgm");
  {
    std::ofstream f(path);
    f << "P2\n# made by hand\n3 2\n# max\n10\n0 5 10\n10 5 0\n";
  }
  const auto img = read_pgm(path.string());
  REQUIRE(img.width == 3);
  REQUIRE(img.height == 2);
  CHECK(img.at(1, 0) == doctest::Approx(0.5));
  CHECK(img.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("malformed pgm is rejected") {
  const auto path = scratch("bad.pgm");
  {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n4 4\n255\n\x01\x02";
  }
  CHECK_THROWS_AS(read_pgm(path.string()), IoError);
  {
    std::ofstream f(path);
    f << "P6\n1 1\n255\n";
  }
  CHECK_THROWS_AS(read_pgm(path.string()), IoError);
}

TEST_CASE("image helpers") {
  Image flat(3, 3, 4.0);
  for (double v : minmax_normalize(flat).pixels) CHECK(v == 0.0);
  Image ramp(2, 1);
  ramp.pixels = {-1.0, 3.0};
  CHECK(minmax_normalize(ramp).pixels == std::vector<double>{0.0, 1.0});
  CHECK(clamp(ramp, 0.0, 1.0).pixels == std::vector<double>{0.0, 1.0});
  CHECK(all_finite(ramp.pixels));
  ramp.pixels[0] = std::nan("");
  CHECK_FALSE(all_finite(ramp.pixels));
}
