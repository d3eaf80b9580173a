#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sv {

/// Row-major intensity image with values in [0,1].
struct GrayGrid {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayGrid() = default;
  GrayGrid(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int row, int col) {
    return data[static_cast<std::size_t>(row) * width + col];
  }
  double at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
  bool operator==(const GrayGrid&) const = default;
};

/// Throws ValidationError on size mismatch or out-of-range intensities.
void validate(const GrayGrid& g);

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // one byte per pixel, 0 or 1

  std::size_t count() const;
  bool at(int row, int col) const {
    return bits[static_cast<std::size_t>(row) * width + col] != 0;
  }
  bool operator==(const BinaryMask&) const = default;
};

/// Pixel is set when intensity >= threshold.
BinaryMask binarize(const GrayGrid& g, double threshold);
GrayGrid to_grid(const BinaryMask& m);

/// Binary PGM (P5), maxval 255; intensities mapped to [0,1] by /255.
GrayGrid parse_pgm(const std::string& bytes);
GrayGrid read_pgm(const std::string& path);
std::string encode_pgm(const GrayGrid& g);
void write_pgm(const std::string& path, const GrayGrid& g);

/// Row-major bitmap packed MSB-first, then base64.
std::string pack_mask_base64(const BinaryMask& m);
BinaryMask unpack_mask_base64(const std::string& b64, int width, int height);

}  // namespace sv
