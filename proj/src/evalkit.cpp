#include "iavla/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "iavla/errors.hpp"

namespace iavla {
namespace {

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

nlohmann::json timings_json(const EpisodeTimings& t) {
  return {{"segment_ms", t.segment_ms},         {"filter_ms", t.filter_ms},
          {"annotate_ms", t.annotate_ms},       {"select_ms", t.select_ms},
          {"highlight_ms", t.highlight_ms},     {"preprocess_ms", t.preprocess_ms},
          {"step_latency_ms", t.step_latency_ms}, {"step_overhead_ms", t.step_overhead_ms}};
}

EpisodeTimings timings_from_json(const nlohmann::json& j) {
  EpisodeTimings t;
  t.segment_ms = j.value("segment_ms", 0.0);
  t.filter_ms = j.value("filter_ms", 0.0);
  t.annotate_ms = j.value("annotate_ms", 0.0);
  t.select_ms = j.value("select_ms", 0.0);
  t.highlight_ms = j.value("highlight_ms", 0.0);
  t.preprocess_ms = j.value("preprocess_ms", 0.0);
  t.step_latency_ms = j.value("step_latency_ms", std::vector<double>{});
  t.step_overhead_ms = j.value("step_overhead_ms", std::vector<double>{});
  return t;
}

TimingSummary summarize(const std::vector<double>& v) {
  return {static_cast<int>(v.size()), percentile(v, 50), percentile(v, 95)};
}

nlohmann::json summary_json(const TimingSummary& s) {
  return {{"samples", s.samples}, {"p50", s.p50}, {"p95", s.p95}};
}

std::string category_key(int c) { return c > 0 ? std::to_string(c) : "unknown"; }

}  // namespace

std::string_view to_string(FailureMode m) {
  switch (m) {
    case FailureMode::Execution:
      return "execution";
    case FailureMode::VlmSelection:
      return "vlm_selection";
    case FailureMode::Masking:
      return "masking";
    case FailureMode::Combined:
      return "combined";
  }
  return "execution";
}

FailureMode failure_mode_from_string(std::string_view s) {
  for (auto m : {FailureMode::Execution, FailureMode::VlmSelection, FailureMode::Masking,
                 FailureMode::Combined})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown failure mode '" + std::string(s) + "'");
}

nlohmann::json to_json(const EpisodeLog& log, bool with_timings) {
  nlohmann::json j = {{"episode_id", log.episode_id},
                      {"setting", to_string(log.setting)},
                      {"variant", log.variant},
                      {"instruction", log.instruction},
                      {"category", log.category},
                      {"effective_instruction", log.effective_instruction},
                      {"targets", log.targets},
                      {"masked_ids", log.masked_ids},
                      {"candidate_count", log.candidate_count},
                      {"selection", log.selection ? to_json(*log.selection) : nlohmann::json()},
                      {"highlighted_ids", log.highlighted_ids},
                      {"outcome", log.outcome ? to_json(*log.outcome) : nlohmann::json()},
                      {"stage", log.stage},
                      {"error", log.error},
                      {"score", log.score},
                      {"frames", log.frames},
                      {"artifacts", log.artifacts}};
  if (with_timings) j["timings"] = timings_json(log.timings);
  return j;
}

std::string canonical_json(const EpisodeLog& log) { return to_json(log, false).dump(); }

EpisodeLog episode_log_from_json(const nlohmann::json& j) {
  EpisodeLog log;
  try {
    log.episode_id = j.at("episode_id").get<std::string>();
    log.setting = setting_from_string(j.at("setting").get<std::string>());
    log.variant = j.value("variant", "ia-vla");
    log.instruction = j.value("instruction", "");
    log.category = j.value("category", 0);
    log.effective_instruction = j.value("effective_instruction", "");
    log.targets = j.value("targets", std::vector<int>{});
    log.masked_ids = j.value("masked_ids", std::vector<int>{});
    log.candidate_count = j.value("candidate_count", 0);
    if (j.contains("selection") && !j["selection"].is_null()) log.selection = selection_from_json(j["selection"]);
    log.highlighted_ids = j.value("highlighted_ids", std::vector<int>{});
    if (j.contains("outcome") && !j["outcome"].is_null()) log.outcome = outcome_from_json(j["outcome"]);
    log.stage = j.value("stage", "");
    log.error = j.value("error", "");
    log.score = j.value("score", 0.0);
    log.frames = j.value("frames", 0);
    log.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
    if (j.contains("timings")) log.timings = timings_from_json(j["timings"]);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed episode log: ") + e.what());
  }
  if (log.score != 0.0 && log.score != 0.5 && log.score != 1.0)
    throw IoError("episode log score must be 0, 0.5 or 1");
  return log;
}

std::vector<EpisodeLog> read_logs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<EpisodeLog> logs;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError(path + ":" + std::to_string(n) + ": not JSON");
    logs.push_back(episode_log_from_json(j));
  }
  return logs;
}

void write_logs_jsonl(const std::string& path, const std::vector<EpisodeLog>& logs) {
  std::string text;
  for (const auto& l : logs) text += to_json(l).dump() + "\n";
  write_file(path, text);
}

std::vector<int> matched_object_ids(const SceneSpec& scene, const MaskSet& ground_truth,
                                    const MaskSet& masks, double threshold) {
  std::vector<int> out;
  for (const auto& m : masks) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
      const double v = iou(m, ground_truth[i]);
      if (v >= threshold && v > best_iou) {
        best_iou = v;
        best = scene.objects[i].id;
      }
    }
    out.push_back(best);
  }
  return out;
}

std::vector<int> masked_object_ids(const SceneSpec& scene, const MaskSet& ground_truth,
                                   const MaskSet& masks, double threshold) {
  std::set<int> ids;
  for (int id : matched_object_ids(scene, ground_truth, masks, threshold))
    if (id >= 0) ids.insert(id);
  return {ids.begin(), ids.end()};
}

double score_run(const Outcome& outcome, const std::vector<int>& targets, TaskSetting setting) {
  (void)setting;  // the partial condition per setting is carried by ExecResult::Partial
  if (outcome.engaged != targets) return 0.0;
  switch (outcome.result) {
    case ExecResult::Success:
      return 1.0;
    case ExecResult::Partial:
      return 0.5;
    case ExecResult::Fail:
      break;
  }
  return 0.0;
}

bool is_failed(const EpisodeLog& log, bool half_counts_as_failure) {
  return log.score == 0.0 || (half_counts_as_failure && log.score == 0.5);
}

FailureMode classify_failure(const EpisodeLog& log, bool half_counts_as_failure) {
  if (!is_failed(log, half_counts_as_failure))
    throw ContractError("episode " + log.episode_id + " did not fail");
  for (int t : log.targets)
    if (std::find(log.masked_ids.begin(), log.masked_ids.end(), t) == log.masked_ids.end())
      return FailureMode::Masking;

  std::set<int> lit(log.highlighted_ids.begin(), log.highlighted_ids.end());
  const std::set<int> wanted(log.targets.begin(), log.targets.end());
  if (lit != wanted) {
    const bool executed_wrong = !log.highlighted_ids.empty() && log.outcome &&
                                log.outcome->result == ExecResult::Fail &&
                                log.outcome->reason != "no_highlight";
    return executed_wrong ? FailureMode::Combined : FailureMode::VlmSelection;
  }
  return FailureMode::Execution;
}

GroupBy group_by_from_string(std::string_view s) {
  if (s == "setting") return GroupBy::Setting;
  if (s == "category") return GroupBy::Category;
  if (s == "variant") return GroupBy::Variant;
  throw ConfigError("cannot group by '" + std::string(s) + "'");
}

std::vector<AggregateRow> aggregate(const std::vector<EpisodeLog>& logs,
                                    const std::vector<GroupBy>& by) {
  auto has = [&](GroupBy g) { return std::find(by.begin(), by.end(), g) != by.end(); };
  std::map<std::tuple<std::string, std::string, std::string>, AggregateRow> groups;
  for (const auto& l : logs) {
    AggregateRow key;
    if (has(GroupBy::Setting)) key.setting = std::string(to_string(l.setting));
    if (has(GroupBy::Category)) key.category = category_key(l.category);
    if (has(GroupBy::Variant)) key.variant = l.variant;
    auto& row = groups.try_emplace({key.setting, key.category, key.variant}, key).first->second;
    ++row.runs;
    row.points += l.score;
  }
  std::vector<AggregateRow> rows;
  for (auto& [k, row] : groups) rows.push_back(row);
  return rows;
}

int rounded_percent(double percent) { return static_cast<int>(std::lround(percent)); }

double FailureDistribution::percent(FailureMode m) const {
  const auto it = counts.find(m);
  return failed && it != counts.end() ? 100.0 * it->second / failed : 0.0;
}

FailureDistribution failure_distribution(const std::vector<EpisodeLog>& logs,
                                         bool half_counts_as_failure) {
  FailureDistribution d;
  for (auto m : {FailureMode::Execution, FailureMode::VlmSelection, FailureMode::Masking,
                 FailureMode::Combined})
    d.counts[m] = 0;
  for (const auto& l : logs) {
    ++d.total_runs;
    if (!is_failed(l, half_counts_as_failure)) continue;
    ++d.failed;
    ++d.counts[classify_failure(l, half_counts_as_failure)];
  }
  return d;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * values.size()));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

Report build_report(const std::vector<EpisodeLog>& logs, const std::vector<GroupBy>& by,
                    bool half_counts_as_failure) {
  Report r;
  r.by = by;
  r.rows = aggregate(logs, by);
  r.failures = failure_distribution(logs, half_counts_as_failure);
  std::vector<double> pre, lat, over;
  for (const auto& l : logs) {
    ++r.runs_per_setting[std::string(to_string(l.setting))];
    if (l.timings.preprocess_ms > 0) pre.push_back(l.timings.preprocess_ms);
    lat.insert(lat.end(), l.timings.step_latency_ms.begin(), l.timings.step_latency_ms.end());
    over.insert(over.end(), l.timings.step_overhead_ms.begin(), l.timings.step_overhead_ms.end());
  }
  r.preprocess_ms = summarize(pre);
  r.step_latency_ms = summarize(lat);
  r.step_overhead_ms = summarize(over);
  return r;
}

std::string report_csv(const Report& r) {
  std::ostringstream os;
  os << "setting,category,variant,runs,points,percent,percent_rounded\n";
  for (const auto& row : r.rows) {
    os << row.setting << ',' << row.category << ',' << row.variant << ',' << row.runs << ','
       << fixed(row.points, 1) << ',' << fixed(row.percent(), 3) << ','
       << rounded_percent(row.percent()) << '\n';
  }
  os << "\nfailure_mode,count,percent\n";
  for (const auto& [mode, count] : r.failures.counts)
    os << to_string(mode) << ',' << count << ',' << fixed(r.failures.percent(mode), 3) << '\n';
  os << "\nsetting,total_runs\n";
  for (const auto& [s, n] : r.runs_per_setting) os << s << ',' << n << '\n';
  os << "\ntiming,samples,p50_ms,p95_ms\n";
  for (const auto& [name, t] : {std::pair{"preprocess", r.preprocess_ms},
                                std::pair{"step_latency", r.step_latency_ms},
                                std::pair{"step_overhead", r.step_overhead_ms}})
    os << name << ',' << t.samples << ',' << fixed(t.p50, 3) << ',' << fixed(t.p95, 3) << '\n';
  return os.str();
}

nlohmann::json report_json(const Report& r) {
  auto rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"setting", row.setting},
                    {"category", row.category},
                    {"variant", row.variant},
                    {"runs", row.runs},
                    {"points", row.points},
                    {"percent", row.percent()},
                    {"percent_rounded", rounded_percent(row.percent())}});
  }
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& [mode, count] : r.failures.counts)
    modes[std::string(to_string(mode))] = {{"count", count}, {"percent", r.failures.percent(mode)}};
  auto by = nlohmann::json::array();
  for (auto g : r.by)
    by.push_back(g == GroupBy::Setting ? "setting" : g == GroupBy::Category ? "category" : "variant");
  return {{"group_by", by},
          {"rows", rows},
          {"total_runs", r.failures.total_runs},
          {"runs_per_setting", r.runs_per_setting},
          {"failures", {{"failed", r.failures.failed}, {"modes", modes}}},
          {"timings",
           {{"preprocess_ms", summary_json(r.preprocess_ms)},
            {"step_latency_ms", summary_json(r.step_latency_ms)},
            {"step_overhead_ms", summary_json(r.step_overhead_ms)}}}};
}

void write_report(const Report& r, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  write_file((std::filesystem::path(dir) / "report.csv").string(), report_csv(r));
  write_file((std::filesystem::path(dir) / "report.json").string(), report_json(r).dump(2) + "\n");
}

}  // namespace iavla
