#include <gtest/gtest.h>

#include <random>

#include "iavla/annotate.hpp"
#include "iavla/errors.hpp"
#include "oracles/oracles.hpp"

using namespace iavla;

namespace {

RgbImage gradient(int w, int h) {
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.set(x, y, Rgb{static_cast<std::uint8_t>((x * 7 + y) % 256), static_cast<std::uint8_t>((y * 5) % 256),
                        static_cast<std::uint8_t>((x * y) % 256)});
  return img;
}

MaskSet three_masks(int w, int h) {
  MaskSet s;
  s.push_back(BinaryMask::from_rect(w, h, Rect{5, 5, 30, 20}));
  s.push_back(BinaryMask::from_rect(w, h, Rect{50, 10, 25, 40}));
  s.push_back(BinaryMask::from_rect(w, h, Rect{0, 60, 20, 20}));
  return s;
}

}  // namespace

TEST(DistanceTransform, MatchesBruteForce) {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 150; ++t) {
    const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
    const auto g = t % 2 ? oracle::random_shape(rng, w, h) : oracle::random_noise(rng, w, h, 0.8);
    EXPECT_EQ(squared_distance_to_boundary(oracle::to_mask(g)), oracle::brute_edt(g)) << t;
  }
}

TEST(Anchor, CenteredSquare) {
  const auto m = BinaryMask::from_rect(41, 41, Rect{10, 10, 21, 21});
  EXPECT_EQ(deepest_interior_point(m), (Point{20, 20}));
}

TEST(Anchor, RingAnchorsOnBand) {
  BinaryMask m(60, 60);
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 60; ++x) {
      const int d2 = (x - 30) * (x - 30) + (y - 30) * (y - 30);
      if (d2 <= 25 * 25 && d2 >= 12 * 12) m.set(x, y);
    }
  const auto p = deepest_interior_point(m);
  EXPECT_TRUE(m.get(p.x, p.y));
  const auto dist = squared_distance_to_boundary(m);
  const auto brute = oracle::brute_edt(oracle::from_mask(m));
  EXPECT_EQ(dist[static_cast<std::size_t>(p.y) * 60 + p.x], *std::max_element(brute.begin(), brute.end()));
}

TEST(Anchor, EmptyMaskThrows) {
  EXPECT_THROW(deepest_interior_point(BinaryMask(5, 5)), AnchorError);
  MaskSet s;
  s.push_back(BinaryMask(5, 5));
  EXPECT_THROW(place_tags(s, 5, 5), AnchorError);
}

TEST(PlaceTags, ConsecutiveIdsAndMembership) {
  std::mt19937_64 rng(43);
  MaskSet s;
  for (int k = 0; k < 20; ++k) {
    const int x = static_cast<int>(rng() % 440), y = static_cast<int>(rng() % 440);
    s.push_back(BinaryMask::from_rect(480, 480, Rect{x, y, 20 + static_cast<int>(rng() % 20), 20}));
  }
  const auto layout = place_tags(s, 480, 480);
  ASSERT_EQ(layout.entries.size(), 20u);
  for (std::size_t k = 0; k < 20; ++k) {
    const auto& e = layout.entries[k];
    EXPECT_EQ(e.tag_id, static_cast<int>(k) + 1);
    EXPECT_EQ(e.mask_index, k);
    EXPECT_TRUE(s[k].get(e.anchor.x, e.anchor.y));
    EXPECT_GE(e.box.x, 0);
    EXPECT_GE(e.box.y, 0);
    EXPECT_LE(e.box.right(), 480);
    EXPECT_LE(e.box.bottom(), 480);
    for (std::size_t j = 0; j < k; ++j) EXPECT_FALSE(e.box.intersects(layout.entries[j].box));
  }
  EXPECT_EQ(layout.mask_index_for(7), 6);
  EXPECT_EQ(layout.mask_index_for(21), -1);
}

TEST(PlaceTags, InvariantUnderReserialization) {
  const auto s = three_masks(100, 100);
  const auto again = masks_from_json(nlohmann::json::parse(masks_to_json(s).dump()));
  EXPECT_EQ(to_json(place_tags(s, 100, 100)), to_json(place_tags(again, 100, 100)));
}

TEST(PlaceTags, ChipsStayInBoundsForBorderMasks) {
  std::mt19937_64 rng(47);
  for (int t = 0; t < 100; ++t) {
    const int w = 30 + static_cast<int>(rng() % 300), h = 30 + static_cast<int>(rng() % 300);
    MaskSet s;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int k = 0; k < n; ++k) {
      // masks hugging a random edge
      const int side = static_cast<int>(rng() % 4);
      Rect r{0, 0, 1 + static_cast<int>(rng() % 6), 1 + static_cast<int>(rng() % 6)};
      r.x = side == 1 ? w - r.width : static_cast<int>(rng() % (w - r.width + 1));
      r.y = side == 2 ? h - r.height : side == 3 ? 0 : static_cast<int>(rng() % (h - r.height + 1));
      if (side == 0) r.x = 0;
      s.push_back(BinaryMask::from_rect(w, h, r));
    }
    const auto layout = place_tags(s, w, h);
    for (const auto& e : layout.entries) {
      EXPECT_GE(e.box.x, 0);
      EXPECT_GE(e.box.y, 0);
      EXPECT_LE(e.box.right(), w);
      EXPECT_LE(e.box.bottom(), h);
    }
    EXPECT_NO_THROW(render_annotated(gradient(w, h), s, layout));
  }
}

TEST(RenderAnnotated, ZeroMasksUnchanged) {
  const auto img = gradient(64, 48);
  EXPECT_EQ(render_annotated(img, {}, TagLayout{}), img);
}

TEST(RenderAnnotated, DeterministicAndSourceUntouched) {
  const auto img = gradient(100, 100);
  const auto copy = img;
  const auto masks = three_masks(100, 100);
  const auto layout = place_tags(masks, 100, 100);
  const auto a = render_annotated(img, masks, layout);
  const auto b = render_annotated(img, masks, layout);
  EXPECT_EQ(img, copy);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, img);
  // Golden digest of the rendered raster bytes.
  EXPECT_EQ(content_hash(a.bytes()), "7ad871c5010d7cb372cc5cbddddf9e36");
}

TEST(RenderAnnotated, ChipPixelsAreChipOrDigit) {
  const auto masks = three_masks(100, 100);
  const auto layout = place_tags(masks, 100, 100);
  const auto out = render_annotated(gradient(100, 100), masks, layout);
  for (const auto& e : layout.entries) {
    int white = 0;
    for (int y = e.box.y; y < e.box.bottom(); ++y)
      for (int x = e.box.x; x < e.box.right(); ++x) {
        const auto c = out.at(x, y);
        EXPECT_TRUE(c == (Rgb{24, 24, 24}) || c == (Rgb{255, 255, 255}));
        white += c == Rgb{255, 255, 255};
      }
    EXPECT_GT(white, 0);
  }
}

TEST(Highlight, WorkedExample) {
  EXPECT_EQ(composite_channel(100, 128, 0.8), 122);
  EXPECT_EQ(composite_channel(150, 128, 0.8), 132);
  EXPECT_EQ(composite_channel(200, 128, 0.8), 142);
  RgbImage img(4, 4, Rgb{100, 150, 200});
  MaskSet sel;
  sel.push_back(BinaryMask::from_rect(4, 4, Rect{0, 0, 2, 2}));
  const auto out = highlight(img, sel, HighlightStyle{});
  EXPECT_EQ(out.at(3, 3), (Rgb{122, 132, 142}));
  EXPECT_EQ(out.at(1, 1), (Rgb{100, 150, 200}));
}

TEST(Highlight, HalfRoundsAwayFromZero) {
  // 0.5 * 128 + 0.5 * 1 = 64.5 -> 65
  EXPECT_EQ(composite_channel(1, 128, 0.5), 65);
  EXPECT_EQ(composite_channel(0, 1, 0.5), 1);
}

TEST(Highlight, AlphaZeroIsIdentity) {
  const auto img = gradient(50, 30);
  HighlightStyle s;
  s.alpha = 0.0;
  EXPECT_EQ(highlight(img, {}, s), img);
}

TEST(Highlight, ExactFormulaEverywhere) {
  std::mt19937_64 rng(53);
  const auto img = gradient(97, 61);
  MaskSet sel;
  sel.push_back(oracle::to_mask(oracle::random_shape(rng, 97, 61)));
  sel.push_back(oracle::to_mask(oracle::random_shape(rng, 97, 61)));
  const auto keep = sel.union_all();
  const auto out = highlight(img, sel, HighlightStyle{});
  for (int y = 0; y < 61; ++y)
    for (int x = 0; x < 97; ++x) {
      const auto c = img.at(x, y), o = out.at(x, y);
      if (keep.get(x, y)) {
        EXPECT_EQ(o, c);
      } else {
        // integer form of round(0.8*128 + 0.2*c): (4*128 + c) / 5, half up
        auto f = [](int v) { return static_cast<std::uint8_t>((2 * (4 * 128 + v) + 5) / 10); };
        EXPECT_EQ(o, (Rgb{f(c.r), f(c.g), f(c.b)}));
      }
    }
}

TEST(Highlight, IdempotentOnSelectionAndMonotoneInAlpha) {
  const auto img = gradient(40, 40);
  MaskSet sel;
  sel.push_back(BinaryMask::from_rect(40, 40, Rect{10, 10, 10, 10}));
  HighlightStyle s;
  const auto once = highlight(img, sel, s);
  const auto twice = highlight(once, sel, s);
  for (int y = 10; y < 20; ++y)
    for (int x = 10; x < 20; ++x) EXPECT_EQ(twice.at(x, y), img.at(x, y));
  for (int v = 0; v < 256; v += 5) {
    int prev = v;
    for (double a = 0.0; a <= 1.0; a += 0.1) {
      const int c = composite_channel(static_cast<std::uint8_t>(v), 128, a);
      EXPECT_LE(std::abs(c - 128), std::abs(prev - 128));
      prev = c;
    }
  }
}

TEST(HighlightStyle, Validation) {
  EXPECT_THROW(highlight_style_from_json({{"alpha", 1.5}}), ConfigError);
  EXPECT_THROW(highlight_style_from_json({{"overlay", {1, 2}}}), ConfigError);
  const auto s = highlight_style_from_json({{"alpha", 0.5}, {"overlay", {1, 2, 3}}});
  EXPECT_EQ(s.overlay, (Rgb{1, 2, 3}));
  EXPECT_DOUBLE_EQ(s.alpha, 0.5);
}
