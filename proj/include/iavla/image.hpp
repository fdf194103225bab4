#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iavla {

struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

/// Half-open pixel rectangle [x, x+width) x [y, y+height).
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool operator==(const Rect&) const = default;

  int right() const { return x + width; }
  int bottom() const { return y + height; }
  bool empty() const { return width <= 0 || height <= 0; }
  bool contains(Point p) const {
    return p.x >= x && p.x < right() && p.y >= y && p.y < bottom();
  }
  bool intersects(const Rect& o) const {
    return !empty() && !o.empty() && x < o.right() && o.x < right() &&
           y < o.bottom() && o.y < bottom();
  }
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

/// 8-bit interleaved RGB raster, row-major.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {});
  RgbImage(int width, int height, std::vector<std::uint8_t> interleaved);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const {
    const auto* p = &data_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    auto* p = &data_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<const std::uint8_t> bytes() const noexcept { return data_; }
  std::span<std::uint8_t> bytes() noexcept { return data_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Nearest-neighbour resampling; pixel centres map through
/// src = floor((2*dst + 1) * src_size / (2 * dst_size)).
RgbImage resize_nearest(const RgbImage& image, int new_width, int new_height);

/// Source index of destination index `dst` under nearest-neighbour resampling.
inline int nearest_source_index(int dst, int src_size, int dst_size) {
  return static_cast<int>((2LL * dst + 1) * src_size / (2LL * dst_size));
}

std::vector<std::uint8_t> encode_png(const RgbImage& image);

/// Decodes any PNG libpng understands into RGB. Throws InputError.
RgbImage decode_png(std::span<const std::uint8_t> png);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws InputError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Hex BLAKE2b-128 digest, used for artifact provenance in episode logs.
std::string content_hash(std::span<const std::uint8_t> bytes);
std::string content_hash(std::string_view text);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_file(const std::string& path, std::string_view text);

}  // namespace iavla
