#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "iavla/mask.hpp"
#include "iavla/scenesim.hpp"
#include "iavla/select.hpp"
#include "iavla/setting.hpp"

namespace iavla {

enum class FailureMode { Execution, VlmSelection, Masking, Combined };

std::string_view to_string(FailureMode m);
FailureMode failure_mode_from_string(std::string_view s);

/// Wall-clock measurements; kept out of the canonical log form.
struct EpisodeTimings {
  double segment_ms = 0;
  double filter_ms = 0;
  double annotate_ms = 0;
  double select_ms = 0;
  double highlight_ms = 0;
  double preprocess_ms = 0;
  std::vector<double> step_latency_ms;
  std::vector<double> step_overhead_ms;
};

struct EpisodeLog {
  std::string episode_id;
  TaskSetting setting = TaskSetting::Blocks;
  std::string variant = "ia-vla";
  std::string instruction;
  int category = 0;
  std::string effective_instruction;
  std::vector<int> targets;
  /// Objects with a post-filter candidate mask (IoU >= 0.5).
  std::vector<int> masked_ids;
  int candidate_count = 0;
  std::optional<SelectionResult> selection;
  /// Object matched by each selected mask, -1 for none.
  std::vector<int> highlighted_ids;
  std::optional<Outcome> outcome;
  /// Empty on a clean run, else the stage that failed: masking,
  /// vlm_selection, timeout, tracking, backend, input.
  std::string stage;
  std::string error;
  double score = 0.0;
  int frames = 0;
  /// Content hashes of the episode's artifacts.
  std::map<std::string, std::string> artifacts;
  EpisodeTimings timings;
};

nlohmann::json to_json(const EpisodeLog& log, bool with_timings = true);
/// Every field except the timings, serialized with sorted keys.
std::string canonical_json(const EpisodeLog& log);
EpisodeLog episode_log_from_json(const nlohmann::json& j);

/// Throws IoError.
std::vector<EpisodeLog> read_logs_jsonl(const std::string& path);
void write_logs_jsonl(const std::string& path, const std::vector<EpisodeLog>& logs);

/// For every mask, the id of the scene object whose ground-truth mask it
/// matches with IoU >= threshold (best match), else -1.
std::vector<int> matched_object_ids(const SceneSpec& scene, const MaskSet& ground_truth,
                                    const MaskSet& masks, double threshold = 0.5);
/// Sorted ids of objects matched by at least one mask.
std::vector<int> masked_object_ids(const SceneSpec& scene, const MaskSet& ground_truth,
                                   const MaskSet& masks, double threshold = 0.5);

/// 1.0 for success on the targets, 0.5 for a partial run on the targets,
/// else 0.
double score_run(const Outcome& outcome, const std::vector<int>& targets, TaskSetting setting);

/// Score 0 always fails; score 0.5 fails only with `half_counts_as_failure`.
bool is_failed(const EpisodeLog& log, bool half_counts_as_failure = false);

/// masking, then vlm_selection, then combined, then execution. Throws
/// ContractError for a log that did not fail.
FailureMode classify_failure(const EpisodeLog& log, bool half_counts_as_failure = false);

enum class GroupBy { Setting, Category, Variant };
GroupBy group_by_from_string(std::string_view s);

struct AggregateRow {
  std::string setting = "all";
  std::string category = "all";
  std::string variant = "all";
  int runs = 0;
  double points = 0.0;

  double percent() const { return runs ? 100.0 * points / runs : 0.0; }
};

/// Rows keyed by the chosen dimensions (others read "all"), sorted by key.
/// The result does not depend on the order of `logs`.
std::vector<AggregateRow> aggregate(const std::vector<EpisodeLog>& logs,
                                    const std::vector<GroupBy>& by);

/// Nearest integer, halves away from zero.
int rounded_percent(double percent);

struct FailureDistribution {
  int total_runs = 0;
  int failed = 0;
  std::map<FailureMode, int> counts;

  double percent(FailureMode m) const;
};

FailureDistribution failure_distribution(const std::vector<EpisodeLog>& logs,
                                         bool half_counts_as_failure = false);

/// Nearest-rank percentile; 0 for an empty sample.
double percentile(std::vector<double> values, double p);

struct TimingSummary {
  int samples = 0;
  double p50 = 0;
  double p95 = 0;
};

struct Report {
  std::vector<GroupBy> by;
  std::vector<AggregateRow> rows;
  std::map<std::string, int> runs_per_setting;
  FailureDistribution failures;
  TimingSummary preprocess_ms;
  TimingSummary step_latency_ms;
  TimingSummary step_overhead_ms;
};

Report build_report(const std::vector<EpisodeLog>& logs, const std::vector<GroupBy>& by,
                    bool half_counts_as_failure = false);
/// Columns: setting, category, variant, runs, points, percent, percent_rounded.
std::string report_csv(const Report& r);
nlohmann::json report_json(const Report& r);
/// Writes report.csv and report.json into `dir`. Throws IoError.
void write_report(const Report& r, const std::string& dir);

}  // namespace iavla
