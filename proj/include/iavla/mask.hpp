#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "iavla/image.hpp"

namespace iavla {

enum class Connectivity { Four = 4, Eight = 8 };

/// Background connectivity paired with a foreground connectivity (8 <-> 4).
constexpr Connectivity complement(Connectivity c) {
  return c == Connectivity::Eight ? Connectivity::Four : Connectivity::Eight;
}

Connectivity connectivity_from_int(int value);

/// Two-dimensional boolean grid stored as row-major packed bits.
///
/// Bit i (i = y * width + x) lives in word i / 64. Bits past width*height in
/// the last word are always zero so that word-wise popcounts equal areas.
class BinaryMask {
 public:
  /// All-false mask. Throws DimensionError unless width, height > 0.
  BinaryMask(int width, int height);

  /// One byte per pixel, nonzero = true.
  static BinaryMask from_bytes(int width, int height,
                               std::span<const std::uint8_t> bytes);
  static BinaryMask from_rect(int width, int height, const Rect& r);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  bool get(int x, int y) const noexcept { return test(index(x, y)); }
  void set(int x, int y, bool value = true) noexcept { assign(index(x, y), value); }

  bool test(std::size_t i) const noexcept {
    return (words_[i >> 6] >> (i & 63)) & 1u;
  }
  void assign(std::size_t i, bool value) noexcept {
    const std::uint64_t bit = std::uint64_t{1} << (i & 63);
    if (value) {
      words_[i >> 6] |= bit;
    } else {
      words_[i >> 6] &= ~bit;
    }
  }

  std::size_t area() const noexcept;
  bool empty() const noexcept;
  /// Tight bounding box of the true pixels; nullopt for an empty mask.
  std::optional<Rect> bounding_box() const;

  bool same_shape(const BinaryMask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  BinaryMask& operator&=(const BinaryMask& other);
  BinaryMask& operator|=(const BinaryMask& other);
  /// In place a <- a AND NOT b.
  BinaryMask& subtract_in_place(const BinaryMask& other);
  BinaryMask& invert() noexcept;

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  /// One byte (0/1) per pixel.
  std::vector<std::uint8_t> to_bytes() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }
  void clear_tail() noexcept;

  int width_;
  int height_;
  std::vector<std::uint64_t> words_;
};

BinaryMask operator&(BinaryMask a, const BinaryMask& b);
BinaryMask operator|(BinaryMask a, const BinaryMask& b);
BinaryMask operator~(BinaryMask a);
BinaryMask subtract(BinaryMask a, const BinaryMask& b);

enum class MaskOp { And, Or, Not, Subtract };

/// Pixelwise boolean algebra. `b` is ignored for Not and required otherwise.
/// Throws DimensionError on shape mismatch or a missing operand.
BinaryMask algebra(MaskOp op, const BinaryMask& a, const BinaryMask* b = nullptr);

/// |a AND b| without materialising the intersection.
std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b);

/// Ordered masks sharing one width/height.
class MaskSet {
 public:
  MaskSet() = default;
  explicit MaskSet(std::vector<BinaryMask> masks);

  void push_back(BinaryMask mask);

  std::size_t size() const noexcept { return masks_.size(); }
  bool empty() const noexcept { return masks_.empty(); }
  const BinaryMask& operator[](std::size_t i) const { return masks_[i]; }
  BinaryMask& operator[](std::size_t i) { return masks_[i]; }
  auto begin() const noexcept { return masks_.begin(); }
  auto end() const noexcept { return masks_.end(); }
  const std::vector<BinaryMask>& masks() const noexcept { return masks_; }

  /// Dimensions of the members; 0 when empty.
  int width() const noexcept { return masks_.empty() ? 0 : masks_.front().width(); }
  int height() const noexcept { return masks_.empty() ? 0 : masks_.front().height(); }

  /// Union of all members. Requires a non-empty set.
  BinaryMask union_all() const;

  bool operator==(const MaskSet&) const = default;

 private:
  std::vector<BinaryMask> masks_;
};

/// Disjoint connected regions of `m`, ordered by their first pixel in
/// row-major scan order.
MaskSet connected_components(const BinaryMask& m,
                             Connectivity connectivity = Connectivity::Eight);

struct Hole {
  BinaryMask region;
  /// Index into connected_components(m, connectivity) of the enclosing patch.
  std::size_t parent;
};

/// Background regions (under the complementary connectivity) that do not touch
/// the image border, each with its single enclosing foreground component.
std::vector<Hole> holes(const BinaryMask& m,
                        Connectivity connectivity = Connectivity::Eight);

struct Rle {
  int width = 0;
  int height = 0;
  /// Alternating run lengths, row-major, starting with a (possibly empty)
  /// false run. Every later run is non-empty.
  std::vector<std::uint32_t> runs;

  bool operator==(const Rle&) const = default;
};

Rle rle_encode(const BinaryMask& m);
/// Throws CodecError on a malformed run stream.
BinaryMask rle_decode(const Rle& rle);

nlohmann::json rle_to_json(const Rle& rle);
/// Throws CodecError.
Rle rle_from_json(const nlohmann::json& j);

/// Wire form of a mask: RLE object.
nlohmann::json mask_to_json(const BinaryMask& m);
/// Accepts an RLE object or a base64 PNG string. Throws CodecError.
BinaryMask mask_from_json(const nlohmann::json& j);

nlohmann::json masks_to_json(const MaskSet& masks);
MaskSet masks_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> mask_to_png(const BinaryMask& m);
/// Any PNG; nonzero gray = true. Throws InputError.
BinaryMask mask_from_png(std::span<const std::uint8_t> png);

BinaryMask resize_nearest(const BinaryMask& m, int new_width, int new_height);
MaskSet resize_nearest(const MaskSet& masks, int new_width, int new_height);

/// Copy of `m` shifted by (dx, dy); pixels moved outside are dropped.
BinaryMask translate(const BinaryMask& m, int dx, int dy);

/// Intersection over union; 0 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace iavla
