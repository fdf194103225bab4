#pragma once

// Byte-grid helpers behind the packed BinaryMask: regions are labelled on a
// padded crop around the mask's bounding box, which keeps every pass
// proportional to the object rather than to the frame.

#include <cstdint>
#include <span>
#include <vector>

#include "iavla/mask.hpp"

namespace iavla::detail {

/// Window of a mask, one byte per cell, surrounded by `pad` cells of false.
/// Cell (cx, cy) maps to image pixel (box.x + cx - pad, box.y + cy - pad).
struct Crop {
  Rect box;
  int pad = 1;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;

  std::uint8_t& at(int cx, int cy) {
    return cells[static_cast<std::size_t>(cy) * width + cx];
  }
  std::uint8_t at(int cx, int cy) const {
    return cells[static_cast<std::size_t>(cy) * width + cx];
  }
};

Crop crop_padded(const BinaryMask& m, const Rect& box, int pad = 1);

/// Two-pass union-find labelling of cells equal to `value`. Labels are 1..n
/// ordered by first cell in row-major order; other cells get 0.
int label_cells(const Crop& crop, std::uint8_t value, Connectivity connectivity,
                std::vector<std::int32_t>& labels);

/// Image-sized mask of crop cells whose label equals `label`.
BinaryMask mask_from_labels(const Crop& crop,
                            const std::vector<std::int32_t>& labels,
                            std::int32_t label, int image_width,
                            int image_height);

/// One image-sized mask per label 1..count, built in a single pass.
std::vector<BinaryMask> masks_from_labels(const Crop& crop,
                                          const std::vector<std::int32_t>& labels,
                                          int count, int image_width,
                                          int image_height);

/// Marks (in `reached`) every cell not in `blocked` that can be reached from
/// the crop border moving with `connectivity`.
void flood_from_border(const Crop& crop, const std::vector<std::uint8_t>& blocked,
                       Connectivity connectivity,
                       std::vector<std::uint8_t>& reached);

}  // namespace iavla::detail
