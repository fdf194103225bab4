#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "iavla/image.hpp"
#include "iavla/mask.hpp"

namespace iavla {

struct TagEntry {
  int tag_id = 0;
  std::size_t mask_index = 0;
  Point anchor;
  Rect box;  // label chip, always clipped to the image
};

/// Numeric tags 1..n, one per candidate mask, in mask order.
struct TagLayout {
  std::vector<TagEntry> entries;

  std::vector<int> tag_ids() const;
  /// Mask index for a tag id, or -1.
  int mask_index_for(int tag_id) const;
};

nlohmann::json to_json(const TagLayout& layout);

struct HighlightStyle {
  double alpha = 0.8;
  Rgb overlay{128, 128, 128};

  /// Throws ConfigError unless 0 <= alpha <= 1.
  void validate() const;
};

nlohmann::json to_json(const HighlightStyle& style);
HighlightStyle highlight_style_from_json(const nlohmann::json& j);

/// Squared Euclidean distance from each pixel of `m` to the nearest pixel
/// outside it (pixels beyond the image count as outside); 0 off the mask.
std::vector<std::int64_t> squared_distance_to_boundary(const BinaryMask& m);

/// Pixel of maximal distance to the mask boundary; the first in row-major
/// order wins ties. Throws AnchorError for an empty mask.
Point deepest_interior_point(const BinaryMask& m);

/// Size of the label chip for a tag id on an image of the given size.
Rect tag_chip_size(int tag_id, int image_width, int image_height);

/// Anchors each mask at its deepest interior point and nudges label chips
/// along a square spiral until they do not overlap earlier chips.
/// Throws AnchorError for an empty mask, DimensionError on a size mismatch.
TagLayout place_tags(const MaskSet& masks, int image_width, int image_height);

/// Draws every mask's 1-px outline and its tag chip (white digits on a dark
/// chip). The source image is not modified.
RgbImage render_annotated(const RgbImage& image, const MaskSet& masks,
                          const TagLayout& layout);

/// Pixels inside the union of `selected` keep their value; every other channel
/// value c becomes round(alpha * overlay + (1 - alpha) * c), halves rounded
/// away from zero.
RgbImage highlight(const RgbImage& image, const MaskSet& selected,
                   const HighlightStyle& style);

/// Composited value of one channel, exposed for tests and lookup tables.
std::uint8_t composite_channel(std::uint8_t value, std::uint8_t overlay, double alpha);

}  // namespace iavla
