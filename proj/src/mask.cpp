#include "iavla/mask.hpp"

#include <algorithm>
#include <bit>
#include <limits>

#include "grid.hpp"
#include "iavla/errors.hpp"
#include "png_io.hpp"

namespace iavla {
namespace {

std::size_t word_count(int width, int height) {
  return (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) + 63) / 64;
}

void require_same_shape(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("mask dimension mismatch: " + std::to_string(a.width()) +
                         "x" + std::to_string(a.height()) + " vs " +
                         std::to_string(b.width()) + "x" +
                         std::to_string(b.height()));
  }
}

}  // namespace

Connectivity connectivity_from_int(int value) {
  if (value == 4) return Connectivity::Four;
  if (value == 8) return Connectivity::Eight;
  throw ConfigError("connectivity must be 4 or 8, got " + std::to_string(value));
}

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw DimensionError("mask dimensions must be positive");
  }
  words_.assign(word_count(width, height), 0);
}

BinaryMask BinaryMask::from_bytes(int width, int height,
                                  std::span<const std::uint8_t> bytes) {
  BinaryMask m(width, height);
  if (bytes.size() != m.pixel_count()) {
    throw DimensionError("byte buffer size does not match mask dimensions");
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i]) m.words_[i >> 6] |= std::uint64_t{1} << (i & 63);
  }
  return m;
}

BinaryMask BinaryMask::from_rect(int width, int height, const Rect& r) {
  BinaryMask m(width, height);
  const int x0 = std::max(0, r.x);
  const int y0 = std::max(0, r.y);
  const int x1 = std::min(width, r.right());
  const int y1 = std::min(height, r.bottom());
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m.set(x, y);
  }
  return m;
}

void BinaryMask::clear_tail() noexcept {
  const std::size_t used = pixel_count() & 63;
  if (used != 0) words_.back() &= (std::uint64_t{1} << used) - 1;
}

std::size_t BinaryMask::area() const noexcept {
  std::size_t total = 0;
  for (auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

bool BinaryMask::empty() const noexcept {
  return std::all_of(words_.begin(), words_.end(),
                     [](std::uint64_t w) { return w == 0; });
}

std::optional<Rect> BinaryMask::bounding_box() const {
  int x0 = width_;
  int y0 = height_;
  int x1 = -1;
  int y1 = -1;
  const std::size_t n = pixel_count();
  for (std::size_t wi = 0; wi < words_.size(); ++wi) {
    std::uint64_t w = words_[wi];
    while (w != 0) {
      const int bit = std::countr_zero(w);
      w &= w - 1;
      const std::size_t i = wi * 64 + static_cast<std::size_t>(bit);
      if (i >= n) break;
      const int x = static_cast<int>(i % static_cast<std::size_t>(width_));
      const int y = static_cast<int>(i / static_cast<std::size_t>(width_));
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

BinaryMask& BinaryMask::operator&=(const BinaryMask& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

BinaryMask& BinaryMask::operator|=(const BinaryMask& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= other.words_[i];
  return *this;
}

BinaryMask& BinaryMask::subtract_in_place(const BinaryMask& other) {
  require_same_shape(*this, other);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= ~other.words_[i];
  return *this;
}

BinaryMask& BinaryMask::invert() noexcept {
  for (auto& w : words_) w = ~w;
  clear_tail();
  return *this;
}

std::vector<std::uint8_t> BinaryMask::to_bytes() const {
  std::vector<std::uint8_t> out(pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = test(i) ? 1 : 0;
  return out;
}

BinaryMask operator&(BinaryMask a, const BinaryMask& b) { return a &= b; }
BinaryMask operator|(BinaryMask a, const BinaryMask& b) { return a |= b; }

BinaryMask operator~(BinaryMask a) { return a.invert(); }

BinaryMask subtract(BinaryMask a, const BinaryMask& b) {
  return a.subtract_in_place(b);
}

BinaryMask algebra(MaskOp op, const BinaryMask& a, const BinaryMask* b) {
  if (op == MaskOp::Not) return ~a;
  if (b == nullptr) throw DimensionError("binary mask operation needs two operands");
  switch (op) {
    case MaskOp::And:
      return a & *b;
    case MaskOp::Or:
      return a | *b;
    case MaskOp::Subtract:
      return subtract(a, *b);
    case MaskOp::Not:
      break;
  }
  return ~a;
}

std::size_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b);
  const auto wa = a.words();
  const auto wb = b.words();
  std::size_t total = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) {
    total += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
  }
  return total;
}

MaskSet::MaskSet(std::vector<BinaryMask> masks) {
  masks_.reserve(masks.size());
  for (auto& m : masks) push_back(std::move(m));
}

void MaskSet::push_back(BinaryMask mask) {
  if (!masks_.empty()) require_same_shape(masks_.front(), mask);
  masks_.push_back(std::move(mask));
}

BinaryMask MaskSet::union_all() const {
  if (masks_.empty()) throw DimensionError("union of an empty mask set");
  BinaryMask out = masks_.front();
  for (std::size_t i = 1; i < masks_.size(); ++i) out |= masks_[i];
  return out;
}

MaskSet connected_components(const BinaryMask& m, Connectivity connectivity) {
  MaskSet out;
  const auto box = m.bounding_box();
  if (!box) return out;
  const auto crop = detail::crop_padded(m, *box, 0);
  std::vector<std::int32_t> labels;
  const int count = detail::label_cells(crop, 1, connectivity, labels);
  for (auto& c : detail::masks_from_labels(crop, labels, count, m.width(), m.height())) {
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Hole> holes(const BinaryMask& m, Connectivity connectivity) {
  std::vector<Hole> out;
  const auto box = m.bounding_box();
  if (!box) return out;

  const auto crop = detail::crop_padded(m, *box, 1);
  std::vector<std::int32_t> fg_labels;
  detail::label_cells(crop, 1, connectivity, fg_labels);
  std::vector<std::int32_t> bg_labels;
  const int bg_count =
      detail::label_cells(crop, 0, complement(connectivity), bg_labels);

  // The padding ring is one background region touching the crop border; any
  // background region reaching the ring is connected to the image border.
  std::vector<std::uint8_t> touches_border(static_cast<std::size_t>(bg_count) + 1, 0);
  std::vector<std::int32_t> first_cell(static_cast<std::size_t>(bg_count) + 1, -1);
  for (int cy = 0; cy < crop.height; ++cy) {
    for (int cx = 0; cx < crop.width; ++cx) {
      const std::size_t i = static_cast<std::size_t>(cy) * crop.width + cx;
      const std::int32_t l = bg_labels[i];
      if (l == 0) continue;
      if (first_cell[l] < 0) first_cell[l] = static_cast<std::int32_t>(i);
      if (cx == 0 || cy == 0 || cx == crop.width - 1 || cy == crop.height - 1) {
        touches_border[l] = 1;
      }
    }
  }

  auto regions =
      detail::masks_from_labels(crop, bg_labels, bg_count, m.width(), m.height());
  for (int l = 1; l <= bg_count; ++l) {
    if (touches_border[l]) continue;
    // The cell above a hole's first scanned cell is foreground: were it
    // background it would belong to the same region and be scanned earlier.
    const std::int32_t above = first_cell[l] - crop.width;
    const std::int32_t parent = fg_labels[static_cast<std::size_t>(above)];
    out.push_back({std::move(regions[static_cast<std::size_t>(l - 1)]),
                   static_cast<std::size_t>(parent - 1)});
  }
  return out;
}

Rle rle_encode(const BinaryMask& m) {
  Rle rle{m.width(), m.height(), {}};
  bool current = false;
  std::uint32_t run = 0;
  const std::size_t n = m.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const bool v = m.test(i);
    if (v != current) {
      rle.runs.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  rle.runs.push_back(run);
  return rle;
}

BinaryMask rle_decode(const Rle& rle) {
  if (rle.width <= 0 || rle.height <= 0) {
    throw CodecError("RLE dimensions must be positive");
  }
  if (rle.runs.empty()) throw CodecError("RLE run list is empty");
  const std::size_t total =
      static_cast<std::size_t>(rle.width) * static_cast<std::size_t>(rle.height);
  BinaryMask m(rle.width, rle.height);
  std::size_t pos = 0;
  bool value = false;
  for (std::size_t r = 0; r < rle.runs.size(); ++r) {
    const std::size_t len = rle.runs[r];
    if (r > 0 && len == 0) {
      throw CodecError("RLE run " + std::to_string(r) + " is empty");
    }
    if (len > total - pos) throw CodecError("RLE runs exceed width*height");
    if (value) {
      for (std::size_t i = pos; i < pos + len; ++i) m.assign(i, true);
    }
    pos += len;
    value = !value;
  }
  if (pos != total) {
    throw CodecError("RLE runs sum to " + std::to_string(pos) + ", expected " +
                     std::to_string(total));
  }
  return m;
}

nlohmann::json rle_to_json(const Rle& rle) {
  return {{"w", rle.width}, {"h", rle.height}, {"runs", rle.runs}};
}

Rle rle_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("w") || !j.contains("h") ||
      !j.contains("runs") || !j["runs"].is_array()) {
    throw CodecError("RLE object needs integer w, h and a runs array");
  }
  if (!j["w"].is_number_integer() || !j["h"].is_number_integer()) {
    throw CodecError("RLE w/h must be integers");
  }
  Rle rle;
  rle.width = j["w"].get<int>();
  rle.height = j["h"].get<int>();
  for (const auto& r : j["runs"]) {
    if (!r.is_number_integer() || r.get<std::int64_t>() < 0 ||
        r.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
      throw CodecError("RLE runs must be non-negative integers");
    }
    rle.runs.push_back(r.get<std::uint32_t>());
  }
  return rle;
}

nlohmann::json mask_to_json(const BinaryMask& m) { return rle_to_json(rle_encode(m)); }

BinaryMask mask_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    try {
      return mask_from_png(base64_decode(j.get<std::string>()));
    } catch (const InputError& e) {
      throw CodecError(std::string("mask PNG payload: ") + e.what());
    }
  }
  return rle_decode(rle_from_json(j));
}

nlohmann::json masks_to_json(const MaskSet& masks) {
  auto arr = nlohmann::json::array();
  for (const auto& m : masks) arr.push_back(mask_to_json(m));
  return arr;
}

MaskSet masks_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw CodecError("mask list must be a JSON array");
  MaskSet out;
  try {
    for (const auto& item : j) out.push_back(mask_from_json(item));
  } catch (const DimensionError& e) {
    throw CodecError(std::string("mask list: ") + e.what());
  }
  return out;
}

std::vector<std::uint8_t> mask_to_png(const BinaryMask& m) {
  return detail::png_encode_1bit(m.width(), m.height(), m.to_bytes());
}

BinaryMask mask_from_png(std::span<const std::uint8_t> png) {
  auto gray = detail::png_decode_gray(png);
  return BinaryMask::from_bytes(gray.width, gray.height, gray.pixels);
}

BinaryMask resize_nearest(const BinaryMask& m, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) {
    throw DimensionError("resize target must be positive");
  }
  if (new_width == m.width() && new_height == m.height()) return m;
  std::vector<int> src_x(new_width);
  for (int x = 0; x < new_width; ++x) {
    src_x[x] = nearest_source_index(x, m.width(), new_width);
  }
  BinaryMask out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    const int sy = nearest_source_index(y, m.height(), new_height);
    for (int x = 0; x < new_width; ++x) {
      if (m.get(src_x[x], sy)) out.set(x, y);
    }
  }
  return out;
}

MaskSet resize_nearest(const MaskSet& masks, int new_width, int new_height) {
  MaskSet out;
  for (const auto& m : masks) out.push_back(resize_nearest(m, new_width, new_height));
  return out;
}

BinaryMask translate(const BinaryMask& m, int dx, int dy) {
  BinaryMask out(m.width(), m.height());
  const auto box = m.bounding_box();
  if (!box) return out;
  for (int y = box->y; y < box->bottom(); ++y) {
    const int ty = y + dy;
    if (ty < 0 || ty >= m.height()) continue;
    for (int x = box->x; x < box->right(); ++x) {
      const int tx = x + dx;
      if (tx < 0 || tx >= m.width()) continue;
      if (m.get(x, y)) out.set(tx, ty);
    }
  }
  return out;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  const std::size_t inter = intersection_area(a, b);
  const std::size_t uni = a.area() + b.area() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace iavla
