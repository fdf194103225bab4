#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "iavla/mask.hpp"

namespace iavla {

/// Mask filtering parameters. Granularity levels are forwarded to the
/// segmenter; the rest drive the patch, overlap and area filters.
struct FilterConfig {
  std::vector<int> granularity_levels{1, 2, 3};
  double overlap_upper = 0.8;  // u: discard when total overlap >= u
  double overlap_lower = 0.4;  // l: combine when pairwise overlap > l
  std::size_t min_area = 600;
  Connectivity connectivity = Connectivity::Eight;
  /// Compute coverage from masks still queued or kept instead of every mask.
  bool coverage_alive_only = false;

  /// Throws ConfigError.
  void validate() const;

  static FilterConfig tabletop();
  static FilterConfig drawers();
};

nlohmann::json to_json(const FilterConfig& cfg);
/// Missing keys keep the tabletop defaults. Throws ConfigError.
FilterConfig filter_config_from_json(const nlohmann::json& j);

/// Non-fatal events recorded while filtering.
struct FilterDiagnostics {
  std::vector<std::string> warnings;
};

/// A connected outer region of a mask, or a hole inside one.
///
/// Outer patches carry their filled outline (region plus everything it
/// encloses); holes carry their own filled outline and the index of the outer
/// patch they sit in.
struct Patch {
  BinaryMask region;
  std::optional<std::size_t> parent;
};

/// Outer patches first (row-major order of first pixel), then holes. Islands
/// inside holes appear as further outer patches, so the containment hierarchy
/// is flattened to alternating patch/hole levels.
std::vector<Patch> mask_patches(const BinaryMask& m,
                                Connectivity connectivity = Connectivity::Eight);

/// Splits every mask into its connected patches, subtracting holes from their
/// parent patch.
MaskSet patch_filter(const MaskSet& masks,
                     Connectivity connectivity = Connectivity::Eight);

struct OverlapOptions {
  bool coverage_alive_only = false;
};

/// Discards masks mostly covered by others, merges strongly overlapping masks
/// into the larger one and subtracts weak overlaps. Requires 0 <= l <= u <= 1.
/// Zero-area inputs are dropped with a warning.
MaskSet overlap_filter(const MaskSet& masks, double u, double l,
                       OverlapOptions options = {},
                       FilterDiagnostics* diagnostics = nullptr);

/// Keeps masks whose area is at least `min_area`.
MaskSet area_filter(const MaskSet& masks, std::size_t min_area);

struct FilterTrace {
  MaskSet after_patch;
  MaskSet after_overlap;
  MaskSet after_area;
  FilterDiagnostics diagnostics;
};

/// patch_filter -> overlap_filter -> area_filter, keeping every stage.
FilterTrace filter_pipeline_traced(const MaskSet& masks, const FilterConfig& cfg);

MaskSet filter_pipeline(const MaskSet& masks, const FilterConfig& cfg,
                        FilterDiagnostics* diagnostics = nullptr);

}  // namespace iavla
