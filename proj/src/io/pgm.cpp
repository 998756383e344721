#include "oat/io/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "oat/core/error.hpp"
#include "oat/io/tensor_file.hpp"

namespace oat::io {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

std::size_t parse_positive(const std::string& tok, const std::string& what) {
  try {
    const long v = std::stol(tok);
    if (v <= 0) throw IoError("pgm: non-positive " + what);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw IoError("pgm: bad " + what + " '" + tok + "'");
  }
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") throw IoError(path + ": not a portable graymap");
  const std::size_t w = parse_positive(next_token(in), "width");
  const std::size_t h = parse_positive(next_token(in), "height");
  const std::size_t maxval = parse_positive(next_token(in), "maxval");
  if (maxval > 65535) throw IoError(path + ": maxval above 65535");
  Image img(w, h);
  if (magic == "P2") {
    for (auto& v : img.pixels) {
      const std::string tok = next_token(in);
      if (tok.empty()) throw IoError(path + ": truncated pixel data");
      v = static_cast<double>(std::stoul(tok)) / static_cast<double>(maxval);
    }
    return img;
  }
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * bytes_per);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw IoError(path + ": truncated pixel data");
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned v = bytes_per == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

unsigned quantize16(double v, double lo, double hi) noexcept {
  if (!(hi > lo)) return 0;
  const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<unsigned>(std::lround(s * 65535.0));
}

void write_pgm16(const std::string& path, const Image& img) {
  if (img.pixels.empty()) throw ShapeError("pgm: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  std::ostringstream header;
  header << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  const std::string hs = header.str();
  std::vector<std::byte> out;
  out.reserve(hs.size() + 2 * img.pixels.size());
  for (char c : hs) out.push_back(static_cast<std::byte>(c));
  for (double v : img.pixels) {
    const unsigned q = quantize16(v, *lo_it, *hi_it);
    out.push_back(static_cast<std::byte>(q >> 8));
    out.push_back(static_cast<std::byte>(q & 0xff));
  }
  write_file_bytes(path, out);
}

}  // namespace oat::io
