#include "grid.hpp"

#include <numeric>

namespace iavla::detail {
namespace {

std::int32_t find_root(std::vector<std::int32_t>& parent, std::int32_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

void unite(std::vector<std::int32_t>& parent, std::int32_t a, std::int32_t b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) {
    parent[b] = a;
  } else {
    parent[a] = b;
  }
}

}  // namespace

Crop crop_padded(const BinaryMask& m, const Rect& box, int pad) {
  Crop c;
  c.box = box;
  c.pad = pad;
  c.width = box.width + 2 * pad;
  c.height = box.height + 2 * pad;
  c.cells.assign(static_cast<std::size_t>(c.width) * c.height, 0);
  for (int y = 0; y < box.height; ++y) {
    const int iy = box.y + y;
    for (int x = 0; x < box.width; ++x) {
      if (m.get(box.x + x, iy)) c.at(x + pad, y + pad) = 1;
    }
  }
  return c;
}

int label_cells(const Crop& crop, std::uint8_t value, Connectivity connectivity,
                std::vector<std::int32_t>& labels) {
  const int w = crop.width;
  const int h = crop.height;
  labels.assign(crop.cells.size(), 0);
  std::vector<std::int32_t> parent{0};
  const bool eight = connectivity == Connectivity::Eight;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (crop.cells[i] != value) continue;
      std::int32_t current = 0;
      auto visit = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w) return;
        const std::int32_t l = labels[static_cast<std::size_t>(ny) * w + nx];
        if (l == 0) return;
        if (current == 0) {
          current = l;
        } else {
          unite(parent, current, l);
        }
      };
      visit(x - 1, y);
      visit(x, y - 1);
      if (eight) {
        visit(x - 1, y - 1);
        visit(x + 1, y - 1);
      }
      if (current == 0) {
        current = static_cast<std::int32_t>(parent.size());
        parent.push_back(current);
      }
      labels[i] = current;
    }
  }

  // Provisional labels are created in scan order, so the first appearance of
  // each root during a second scan gives the canonical ordering.
  std::vector<std::int32_t> final_label(parent.size(), 0);
  int count = 0;
  for (auto& l : labels) {
    if (l == 0) continue;
    const std::int32_t r = find_root(parent, l);
    if (final_label[r] == 0) final_label[r] = ++count;
    l = final_label[r];
  }
  return count;
}

BinaryMask mask_from_labels(const Crop& crop,
                            const std::vector<std::int32_t>& labels,
                            std::int32_t label, int image_width,
                            int image_height) {
  BinaryMask out(image_width, image_height);
  for (int cy = 0; cy < crop.height; ++cy) {
    const int y = crop.box.y + cy - crop.pad;
    if (y < 0 || y >= image_height) continue;
    for (int cx = 0; cx < crop.width; ++cx) {
      if (labels[static_cast<std::size_t>(cy) * crop.width + cx] != label) continue;
      const int x = crop.box.x + cx - crop.pad;
      if (x < 0 || x >= image_width) continue;
      out.set(x, y);
    }
  }
  return out;
}

std::vector<BinaryMask> masks_from_labels(const Crop& crop,
                                          const std::vector<std::int32_t>& labels,
                                          int count, int image_width,
                                          int image_height) {
  std::vector<BinaryMask> out(static_cast<std::size_t>(count),
                              BinaryMask(image_width, image_height));
  for (int cy = 0; cy < crop.height; ++cy) {
    const int y = crop.box.y + cy - crop.pad;
    if (y < 0 || y >= image_height) continue;
    for (int cx = 0; cx < crop.width; ++cx) {
      const std::int32_t l = labels[static_cast<std::size_t>(cy) * crop.width + cx];
      if (l == 0) continue;
      const int x = crop.box.x + cx - crop.pad;
      if (x < 0 || x >= image_width) continue;
      out[static_cast<std::size_t>(l - 1)].set(x, y);
    }
  }
  return out;
}

void flood_from_border(const Crop& crop, const std::vector<std::uint8_t>& blocked,
                       Connectivity connectivity,
                       std::vector<std::uint8_t>& reached) {
  const int w = crop.width;
  const int h = crop.height;
  reached.assign(crop.cells.size(), 0);
  std::vector<std::int32_t> stack;
  auto push = [&](int x, int y) {
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (blocked[i] || reached[i]) return;
    reached[i] = 1;
    stack.push_back(static_cast<std::int32_t>(i));
  };
  for (int x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  const bool eight = connectivity == Connectivity::Eight;
  while (!stack.empty()) {
    const std::int32_t i = stack.back();
    stack.pop_back();
    const int x = i % w;
    const int y = i / w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        if (!eight && dx != 0 && dy != 0) continue;
        const int nx = x + dx;
        const int ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        push(nx, ny);
      }
    }
  }
}

}  // namespace iavla::detail
