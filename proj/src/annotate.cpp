#include "iavla/annotate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "grid.hpp"
#include "iavla/errors.hpp"

namespace iavla {
namespace {

// 5x7 digit glyphs; bit 4 is the leftmost column.
constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigits{{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
}};

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;

constexpr std::array<Rgb, 8> kOutlinePalette{{
    {255, 64, 64},
    {64, 200, 255},
    {255, 220, 0},
    {180, 90, 255},
    {0, 230, 120},
    {255, 130, 200},
    {255, 150, 40},
    {140, 255, 255},
}};

constexpr Rgb kChipColor{24, 24, 24};
constexpr Rgb kDigitColor{255, 255, 255};

int glyph_scale(int image_width, int image_height) {
  return std::min(image_width, image_height) >= 200 ? 2 : 1;
}

// Squared distance along one line, Felzenszwalb-Huttenlocher lower envelope.
void edt_line(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& d,
              std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = 0;
    while (true) {
      const int p = v[k];
      s = (static_cast<double>(f[q] + std::int64_t{q} * q) -
           static_cast<double>(f[p] + std::int64_t{p} * p)) /
          (2.0 * (q - p));
      if (s > z[k] || k == 0) break;
      --k;
    }
    if (s <= z[k]) {
      v[k] = q;
      z[k + 1] = std::numeric_limits<double>::infinity();
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const std::int64_t dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<int> TagLayout::tag_ids() const {
  std::vector<int> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.tag_id);
  return ids;
}

int TagLayout::mask_index_for(int tag_id) const {
  for (const auto& e : entries) {
    if (e.tag_id == tag_id) return static_cast<int>(e.mask_index);
  }
  return -1;
}

nlohmann::json to_json(const TagLayout& layout) {
  auto arr = nlohmann::json::array();
  for (const auto& e : layout.entries) {
    arr.push_back({{"tag", e.tag_id},
                   {"mask_index", e.mask_index},
                   {"anchor", {e.anchor.x, e.anchor.y}},
                   {"box", {e.box.x, e.box.y, e.box.width, e.box.height}}});
  }
  return arr;
}

void HighlightStyle::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("highlight alpha must lie in [0, 1]");
  }
}

nlohmann::json to_json(const HighlightStyle& style) {
  return {{"alpha", style.alpha},
          {"overlay", {style.overlay.r, style.overlay.g, style.overlay.b}}};
}

HighlightStyle highlight_style_from_json(const nlohmann::json& j) {
  HighlightStyle s;
  try {
    s.alpha = j.value("alpha", s.alpha);
    if (j.contains("overlay")) {
      const auto c = j.at("overlay").get<std::vector<int>>();
      if (c.size() != 3) throw ConfigError("overlay must be an RGB triple");
      for (int v : c) {
        if (v < 0 || v > 255) throw ConfigError("overlay channels must be 0..255");
      }
      s.overlay = {static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]),
                   static_cast<std::uint8_t>(c[2])};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("highlight style: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<std::int64_t> squared_distance_to_boundary(const BinaryMask& m) {
  std::vector<std::int64_t> out(m.pixel_count(), 0);
  const auto box = m.bounding_box();
  if (!box) return out;

  const auto crop = detail::crop_padded(m, *box, 1);
  const int w = crop.width;
  const int h = crop.height;
  const std::int64_t inf = std::int64_t{1} << 40;
  std::vector<std::int64_t> grid(crop.cells.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = crop.cells[i] ? inf : 0;

  const int n = std::max(w, h);
  std::vector<std::int64_t> f;
  std::vector<std::int64_t> d;
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);

  f.resize(h);
  d.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_line(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  f.resize(w);
  d.resize(w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, w, f.begin());
    edt_line(f, d, v, z);
    std::copy_n(d.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }

  for (int cy = 1; cy < h - 1; ++cy) {
    for (int cx = 1; cx < w - 1; ++cx) {
      if (!crop.at(cx, cy)) continue;
      const int x = box->x + cx - 1;
      const int y = box->y + cy - 1;
      out[static_cast<std::size_t>(y) * m.width() + x] =
          grid[static_cast<std::size_t>(cy) * w + cx];
    }
  }
  return out;
}

Point deepest_interior_point(const BinaryMask& m) {
  const auto box = m.bounding_box();
  if (!box) throw AnchorError("cannot anchor a tag on an empty mask");
  const auto dist = squared_distance_to_boundary(m);
  Point best{box->x, box->y};
  std::int64_t best_d = -1;
  for (int y = box->y; y < box->bottom(); ++y) {
    for (int x = box->x; x < box->right(); ++x) {
      const std::int64_t dv = dist[static_cast<std::size_t>(y) * m.width() + x];
      if (dv > best_d && m.get(x, y)) {
        best_d = dv;
        best = {x, y};
      }
    }
  }
  return best;
}

Rect tag_chip_size(int tag_id, int image_width, int image_height) {
  const int s = glyph_scale(image_width, image_height);
  const int digits = static_cast<int>(std::to_string(tag_id).size());
  const int pad = 2 * s;
  return Rect{0, 0, 2 * pad + digits * kGlyphW * s + (digits - 1) * s,
              2 * pad + kGlyphH * s};
}

namespace {

Rect clamp_box(int cx, int cy, const Rect& size, int image_width, int image_height) {
  Rect r{cx - size.width / 2, cy - size.height / 2, size.width, size.height};
  r.x = std::clamp(r.x, 0, std::max(0, image_width - r.width));
  r.y = std::clamp(r.y, 0, std::max(0, image_height - r.height));
  r.width = std::min(r.width, image_width - r.x);
  r.height = std::min(r.height, image_height - r.y);
  return r;
}

bool overlaps_any(const Rect& r, const std::vector<TagEntry>& placed) {
  return std::any_of(placed.begin(), placed.end(),
                     [&](const TagEntry& e) { return e.box.intersects(r); });
}

}  // namespace

TagLayout place_tags(const MaskSet& masks, int image_width, int image_height) {
  TagLayout layout;
  if (masks.empty()) return layout;
  if (masks.width() != image_width || masks.height() != image_height) {
    throw DimensionError("masks do not match the image size");
  }
  const int step = glyph_scale(image_width, image_height);
  const int max_radius = std::max(image_width, image_height);

  for (std::size_t k = 0; k < masks.size(); ++k) {
    const int tag = static_cast<int>(k) + 1;
    const Point anchor = deepest_interior_point(masks[k]);
    const Rect size = tag_chip_size(tag, image_width, image_height);

    Rect chosen = clamp_box(anchor.x, anchor.y, size, image_width, image_height);
    bool found = !overlaps_any(chosen, layout.entries);
    // Square spiral: ring r visits its perimeter clockwise from the top-left.
    for (int r = step; !found && r <= max_radius; r += step) {
      for (int i = -r; i <= r && !found; i += step) {
        const std::array<Point, 4> offsets{
            Point{i, -r}, Point{r, i}, Point{-i, r}, Point{-r, -i}};
        for (const auto& o : offsets) {
          const Rect cand = clamp_box(anchor.x + o.x, anchor.y + o.y, size,
                                      image_width, image_height);
          if (!overlaps_any(cand, layout.entries)) {
            chosen = cand;
            found = true;
            break;
          }
        }
      }
    }
    layout.entries.push_back({tag, k, anchor, chosen});
  }
  return layout;
}

RgbImage render_annotated(const RgbImage& image, const MaskSet& masks,
                          const TagLayout& layout) {
  RgbImage out = image;
  if (masks.empty()) return out;
  if (masks.width() != image.width() || masks.height() != image.height()) {
    throw DimensionError("masks do not match the image size");
  }

  for (const auto& e : layout.entries) {
    if (e.mask_index >= masks.size()) {
      throw DimensionError("tag layout refers to a missing mask");
    }
    const auto& m = masks[e.mask_index];
    const auto box = m.bounding_box();
    if (!box) continue;
    const Rgb color = kOutlinePalette[static_cast<std::size_t>(e.tag_id - 1) %
                                      kOutlinePalette.size()];
    for (int y = box->y; y < box->bottom(); ++y) {
      for (int x = box->x; x < box->right(); ++x) {
        if (!m.get(x, y)) continue;
        const bool edge = x == 0 || y == 0 || x == m.width() - 1 ||
                          y == m.height() - 1 || !m.get(x - 1, y) ||
                          !m.get(x + 1, y) || !m.get(x, y - 1) || !m.get(x, y + 1);
        if (edge) out.set(x, y, color);
      }
    }
  }

  const int s = glyph_scale(image.width(), image.height());
  for (const auto& e : layout.entries) {
    for (int y = e.box.y; y < e.box.bottom(); ++y) {
      for (int x = e.box.x; x < e.box.right(); ++x) {
        if (out.in_bounds(x, y)) out.set(x, y, kChipColor);
      }
    }
    const std::string digits = std::to_string(e.tag_id);
    int gx = e.box.x + 2 * s;
    const int gy = e.box.y + 2 * s;
    for (char ch : digits) {
      const auto& glyph = kDigits[static_cast<std::size_t>(ch - '0')];
      for (int row = 0; row < kGlyphH; ++row) {
        for (int col = 0; col < kGlyphW; ++col) {
          if (!((glyph[row] >> (kGlyphW - 1 - col)) & 1u)) continue;
          for (int dy = 0; dy < s; ++dy) {
            for (int dx = 0; dx < s; ++dx) {
              const int px = gx + col * s + dx;
              const int py = gy + row * s + dy;
              if (e.box.contains({px, py}) && out.in_bounds(px, py)) {
                out.set(px, py, kDigitColor);
              }
            }
          }
        }
      }
      gx += (kGlyphW + 1) * s;
    }
  }
  return out;
}

std::uint8_t composite_channel(std::uint8_t value, std::uint8_t overlay, double alpha) {
  const double v = alpha * overlay + (1.0 - alpha) * value;
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

RgbImage highlight(const RgbImage& image, const MaskSet& selected,
                   const HighlightStyle& style) {
  style.validate();
  if (!selected.empty() &&
      (selected.width() != image.width() || selected.height() != image.height())) {
    throw DimensionError("selected masks do not match the image size");
  }
  std::array<std::array<std::uint8_t, 256>, 3> lut{};
  const std::array<std::uint8_t, 3> overlay{style.overlay.r, style.overlay.g,
                                            style.overlay.b};
  for (int c = 0; c < 3; ++c) {
    for (int v = 0; v < 256; ++v) {
      lut[c][v] = composite_channel(static_cast<std::uint8_t>(v), overlay[c], style.alpha);
    }
  }

  RgbImage out = image;
  auto px = out.bytes();
  const std::size_t n = static_cast<std::size_t>(image.width()) * image.height();
  if (selected.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) px[3 * i + c] = lut[c][px[3 * i + c]];
    }
    return out;
  }
  const BinaryMask keep = selected.union_all();
  for (std::size_t i = 0; i < n; ++i) {
    if (keep.test(i)) continue;
    for (int c = 0; c < 3; ++c) px[3 * i + c] = lut[c][px[3 * i + c]];
  }
  return out;
}

}  // namespace iavla
