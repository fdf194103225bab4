#pragma once

// libpng wrappers shared by image.cpp and mask.cpp.

#include <cstdint>
#include <span>
#include <vector>

namespace iavla::detail {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> png_encode_rgb(int width, int height,
                                         std::span<const std::uint8_t> rgb);

/// `bits` holds one byte (0 or 1) per pixel; written as a 1-bit grayscale PNG.
std::vector<std::uint8_t> png_encode_1bit(int width, int height,
                                          std::span<const std::uint8_t> bits);

/// Throws InputError.
std::vector<std::uint8_t> png_decode_rgb(std::span<const std::uint8_t> png,
                                         int& width, int& height);
GrayImage png_decode_gray(std::span<const std::uint8_t> png);

}  // namespace iavla::detail
