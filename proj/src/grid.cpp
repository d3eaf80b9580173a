#include "stageverify/grid.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "stageverify/core.hpp"

namespace sv {

void validate(const GrayGrid& g) {
  if (g.width <= 0 || g.height <= 0)
    throw ValidationError("grid dimensions must be positive");
  if (g.data.size() != static_cast<std::size_t>(g.width) * g.height)
    throw ValidationError("grid data length does not match dimensions");
  for (double v : g.data)
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("grid intensity outside [0,1]");
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b;
  return n;
}

BinaryMask binarize(const GrayGrid& g, double threshold) {
  BinaryMask m{g.width, g.height, std::vector<std::uint8_t>(g.data.size())};
  for (std::size_t i = 0; i < g.data.size(); ++i)
    m.bits[i] = g.data[i] >= threshold ? 1 : 0;
  return m;
}

GrayGrid to_grid(const BinaryMask& m) {
  GrayGrid g(m.width, m.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i) g.data[i] = m.bits[i];
  return g;
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])))
    ++pos;
  return s.substr(start, pos - start);
}

int header_int(const std::string& s, std::size_t& pos, const char* what) {
  auto tok = header_token(s, pos);
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("PGM: bad {} '{}'", what, tok));
  }
}

}  // namespace

GrayGrid parse_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  if (header_token(bytes, pos) != "P5")
    throw ValidationError("PGM: expected P5 magic");
  const int w = header_int(bytes, pos, "width");
  const int h = header_int(bytes, pos, "height");
  const int maxval = header_int(bytes, pos, "maxval");
  if (w <= 0 || h <= 0) throw ValidationError("PGM: nonpositive dimensions");
  if (maxval != 255) throw ValidationError("PGM: only 8-bit (maxval 255)");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + n) throw ValidationError("PGM: truncated raster");
  GrayGrid g(w, h);
  for (std::size_t i = 0; i < n; ++i)
    g.data[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return g;
}

GrayGrid read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return parse_pgm(bytes);
}

std::string encode_pgm(const GrayGrid& g) {
  validate(g);
  std::string out = fmt::format("P5\n{} {}\n255\n", g.width, g.height);
  out.reserve(out.size() + g.data.size());
  for (double v : g.data)
    out.push_back(static_cast<char>(static_cast<unsigned char>(
        std::lround(v * 255.0))));
  return out;
}

void write_pgm(const std::string& path, const GrayGrid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path));
  out << encode_pgm(g);
}

std::string pack_mask_base64(const BinaryMask& m) {
  std::vector<unsigned char> packed((m.bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    if (m.bits[i]) packed[i / 8] |= static_cast<unsigned char>(0x80u >> (i % 8));
  std::string out(4 * ((packed.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                packed.data(), static_cast<int>(packed.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

BinaryMask unpack_mask_base64(const std::string& b64, int width, int height) {
  if (width <= 0 || height <= 0)
    throw ValidationError("mask dimensions must be positive");
  if (b64.size() % 4 != 0) throw ValidationError("mask: bad base64 length");
  std::vector<unsigned char> raw(b64.size() / 4 * 3);
  int n = EVP_DecodeBlock(raw.data(),
                          reinterpret_cast<const unsigned char*>(b64.data()),
                          static_cast<int>(b64.size()));
  if (n < 0) throw ValidationError("mask: invalid base64");
  // EVP_DecodeBlock keeps the bytes implied by '=' padding
  if (!b64.empty() && b64.back() == '=') --n;
  if (b64.size() >= 2 && b64[b64.size() - 2] == '=') --n;
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  if (static_cast<std::size_t>(n) != (pixels + 7) / 8)
    throw ValidationError("mask: decoded length does not match dimensions");
  BinaryMask m{width, height, std::vector<std::uint8_t>(pixels)};
  for (std::size_t i = 0; i < pixels; ++i)
    m.bits[i] = (raw[i / 8] >> (7 - i % 8)) & 1u;
  return m;
}

}  // namespace sv
