#include "iavla/filters.hpp"

#include <algorithm>
#include <deque>
#include <numeric>

#include <spdlog/spdlog.h>

#include "grid.hpp"
#include "iavla/errors.hpp"

namespace iavla {
namespace {

struct LabelBox {
  int x0, y0, x1, y1;  // inclusive crop coordinates
};

std::vector<LabelBox> label_boxes(const detail::Crop& crop,
                                  const std::vector<std::int32_t>& labels,
                                  int count) {
  std::vector<LabelBox> boxes(static_cast<std::size_t>(count) + 1,
                              LabelBox{crop.width, crop.height, -1, -1});
  for (int cy = 0; cy < crop.height; ++cy) {
    for (int cx = 0; cx < crop.width; ++cx) {
      const std::int32_t l = labels[static_cast<std::size_t>(cy) * crop.width + cx];
      if (l == 0) continue;
      auto& b = boxes[l];
      b.x0 = std::min(b.x0, cx);
      b.y0 = std::min(b.y0, cy);
      b.x1 = std::max(b.x1, cx);
      b.y1 = std::max(b.y1, cy);
    }
  }
  return boxes;
}

// Region `label` plus every cell it encloses: cells that cannot reach the
// outside without crossing the region when moving with `traverse`.
BinaryMask filled_region(const detail::Crop& crop,
                         const std::vector<std::int32_t>& labels,
                         std::int32_t label, const LabelBox& b,
                         Connectivity traverse, int image_width,
                         int image_height) {
  detail::Crop window;
  window.box = Rect{b.x0, b.y0, b.x1 - b.x0 + 1, b.y1 - b.y0 + 1};
  window.pad = 1;
  window.width = window.box.width + 2;
  window.height = window.box.height + 2;
  window.cells.assign(static_cast<std::size_t>(window.width) * window.height, 0);
  for (int y = b.y0; y <= b.y1; ++y) {
    for (int x = b.x0; x <= b.x1; ++x) {
      if (labels[static_cast<std::size_t>(y) * crop.width + x] == label) {
        window.at(x - b.x0 + 1, y - b.y0 + 1) = 1;
      }
    }
  }
  std::vector<std::uint8_t> reached;
  detail::flood_from_border(window, window.cells, traverse, reached);

  BinaryMask out(image_width, image_height);
  const int origin_x = crop.box.x - crop.pad + b.x0 - 1;
  const int origin_y = crop.box.y - crop.pad + b.y0 - 1;
  for (int wy = 0; wy < window.height; ++wy) {
    for (int wx = 0; wx < window.width; ++wx) {
      if (reached[static_cast<std::size_t>(wy) * window.width + wx]) continue;
      const int x = origin_x + wx;
      const int y = origin_y + wy;
      if (x >= 0 && y >= 0 && x < image_width && y < image_height) out.set(x, y);
    }
  }
  return out;
}

}  // namespace

void FilterConfig::validate() const {
  if (!(overlap_lower >= 0.0 && overlap_lower <= overlap_upper &&
        overlap_upper <= 1.0)) {
    throw ConfigError("overlap thresholds must satisfy 0 <= l <= u <= 1");
  }
  if (granularity_levels.empty()) {
    throw ConfigError("at least one granularity level is required");
  }
  for (int level : granularity_levels) {
    if (level < 1 || level > 6) {
      throw ConfigError("granularity levels must lie in 1..6");
    }
  }
}

FilterConfig FilterConfig::tabletop() { return FilterConfig{}; }

FilterConfig FilterConfig::drawers() {
  FilterConfig cfg;
  cfg.granularity_levels = {1, 2, 3, 4};
  cfg.min_area = 400;
  return cfg;
}

nlohmann::json to_json(const FilterConfig& cfg) {
  return {{"granularity", cfg.granularity_levels},
          {"u", cfg.overlap_upper},
          {"l", cfg.overlap_lower},
          {"min_area", cfg.min_area},
          {"connectivity", static_cast<int>(cfg.connectivity)},
          {"coverage_alive_only", cfg.coverage_alive_only}};
}

FilterConfig filter_config_from_json(const nlohmann::json& j) {
  FilterConfig cfg;
  try {
    if (j.contains("granularity")) {
      cfg.granularity_levels = j.at("granularity").get<std::vector<int>>();
    }
    cfg.overlap_upper = j.value("u", cfg.overlap_upper);
    cfg.overlap_lower = j.value("l", cfg.overlap_lower);
    if (j.contains("min_area")) {
      const auto v = j.at("min_area").get<long long>();
      if (v < 0) throw ConfigError("min_area must be non-negative");
      cfg.min_area = static_cast<std::size_t>(v);
    }
    if (j.contains("connectivity")) {
      cfg.connectivity = connectivity_from_int(j.at("connectivity").get<int>());
    }
    cfg.coverage_alive_only = j.value("coverage_alive_only", cfg.coverage_alive_only);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("filter config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<Patch> mask_patches(const BinaryMask& m, Connectivity connectivity) {
  std::vector<Patch> patches;
  const auto box = m.bounding_box();
  if (!box) return patches;

  const auto crop = detail::crop_padded(m, *box, 1);
  const Connectivity background = complement(connectivity);

  std::vector<std::int32_t> fg;
  const int fg_count = detail::label_cells(crop, 1, connectivity, fg);
  const auto fg_boxes = label_boxes(crop, fg, fg_count);
  for (int l = 1; l <= fg_count; ++l) {
    patches.push_back({filled_region(crop, fg, l, fg_boxes[l], background,
                                     m.width(), m.height()),
                       std::nullopt});
  }

  std::vector<std::int32_t> bg;
  const int bg_count = detail::label_cells(crop, 0, background, bg);
  const auto bg_boxes = label_boxes(crop, bg, bg_count);
  for (int l = 1; l <= bg_count; ++l) {
    const auto& b = bg_boxes[l];
    if (b.x0 == 0 || b.y0 == 0 || b.x1 == crop.width - 1 || b.y1 == crop.height - 1) {
      continue;  // reaches the padding ring, so it is open to the border
    }
    std::int32_t first = -1;
    for (int x = b.x0; x <= b.x1 && first < 0; ++x) {
      if (bg[static_cast<std::size_t>(b.y0) * crop.width + x] == l) {
        first = b.y0 * crop.width + x;
      }
    }
    const std::int32_t parent = fg[static_cast<std::size_t>(first - crop.width)];
    patches.push_back({filled_region(crop, bg, l, b, connectivity, m.width(),
                                     m.height()),
                       static_cast<std::size_t>(parent - 1)});
  }
  return patches;
}

MaskSet patch_filter(const MaskSet& masks, Connectivity connectivity) {
  MaskSet out;
  for (const auto& m : masks) {
    const std::size_t base = out.size();
    for (auto& p : mask_patches(m, connectivity)) {
      if (!p.parent) {
        out.push_back(std::move(p.region));
      } else {
        out[base + *p.parent].subtract_in_place(p.region);
      }
    }
  }
  return out;
}

MaskSet overlap_filter(const MaskSet& masks, double u, double l,
                       OverlapOptions options, FilterDiagnostics* diagnostics) {
  if (!(l >= 0.0 && l <= u && u <= 1.0)) {
    throw ConfigError("overlap thresholds must satisfy 0 <= l <= u <= 1");
  }

  std::vector<BinaryMask> M;
  std::vector<std::size_t> areas;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const std::size_t a = masks[k].area();
    if (a == 0) {
      const std::string msg =
          "overlap_filter: dropped zero-area mask at index " + std::to_string(k);
      spdlog::warn(msg);
      if (diagnostics != nullptr) diagnostics->warnings.push_back(msg);
      continue;
    }
    M.push_back(masks[k]);
    areas.push_back(a);
  }

  std::vector<std::size_t> order(M.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return areas[a] > areas[b];
  });

  std::deque<std::size_t> queue(order.begin(), order.end());
  std::vector<std::size_t> keep;
  std::vector<std::uint8_t> alive(M.size(), 1);

  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    if (options.coverage_alive_only) alive[i] = 0;

    BinaryMask coverage(M[i].width(), M[i].height());
    for (std::size_t j = 0; j < M.size(); ++j) {
      if (j == i) continue;
      if (options.coverage_alive_only && !alive[j]) continue;
      coverage |= M[j];
    }
    const double area_i = static_cast<double>(M[i].area());
    const double total_overlap =
        static_cast<double>(intersection_area(coverage, M[i])) / area_i;
    if (total_overlap >= u) continue;

    BinaryMask to_subtract(M[i].width(), M[i].height());
    const std::vector<std::size_t> pending(queue.begin(), queue.end());
    for (const std::size_t j : pending) {
      // M[i] grows as masks are combined, so its area is re-read each time.
      const double pairwise = static_cast<double>(intersection_area(M[i], M[j])) /
                              static_cast<double>(M[i].area());
      if (pairwise > l) {
        M[i] |= M[j];
        queue.erase(std::find(queue.begin(), queue.end(), j));
        if (options.coverage_alive_only) alive[j] = 0;
      } else {
        to_subtract |= M[j];
      }
    }
    M[i].subtract_in_place(to_subtract);
    keep.push_back(i);
    if (options.coverage_alive_only) alive[i] = 1;
  }

  MaskSet out;
  for (const std::size_t k : keep) out.push_back(std::move(M[k]));
  return out;
}

MaskSet area_filter(const MaskSet& masks, std::size_t min_area) {
  MaskSet out;
  for (const auto& m : masks) {
    if (m.area() >= min_area) out.push_back(m);
  }
  return out;
}

FilterTrace filter_pipeline_traced(const MaskSet& masks, const FilterConfig& cfg) {
  cfg.validate();
  FilterTrace trace;
  trace.after_patch = patch_filter(masks, cfg.connectivity);
  trace.after_overlap =
      overlap_filter(trace.after_patch, cfg.overlap_upper, cfg.overlap_lower,
                     {cfg.coverage_alive_only}, &trace.diagnostics);
  trace.after_area = area_filter(trace.after_overlap, cfg.min_area);
  return trace;
}

MaskSet filter_pipeline(const MaskSet& masks, const FilterConfig& cfg,
                        FilterDiagnostics* diagnostics) {
  auto trace = filter_pipeline_traced(masks, cfg);
  if (diagnostics != nullptr) {
    diagnostics->warnings.insert(diagnostics->warnings.end(),
                                 trace.diagnostics.warnings.begin(),
                                 trace.diagnostics.warnings.end());
  }
  return std::move(trace.after_area);
}

}  // namespace iavla
