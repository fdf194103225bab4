#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "iavla/errors.hpp"
#include "iavla/evalkit.hpp"
#include "iavla/image.hpp"

using namespace iavla;

namespace {

EpisodeLog log_with(double score, int category = 1, TaskSetting s = TaskSetting::Blocks,
                    std::string variant = "ia-vla") {
  EpisodeLog l;
  l.episode_id = "e" + std::to_string(category);
  l.setting = s;
  l.variant = std::move(variant);
  l.category = category;
  l.targets = {2};
  l.masked_ids = {1, 2, 3};
  l.highlighted_ids = {2};
  l.score = score;
  return l;
}

Outcome outcome(std::vector<int> engaged, ExecResult r, std::string reason = "") {
  Outcome o;
  o.engaged = std::move(engaged);
  o.result = r;
  o.reason = std::move(reason);
  return o;
}

}  // namespace

TEST(Score, HalfPointRules) {
  EXPECT_EQ(score_run(outcome({2}, ExecResult::Success), {2}, TaskSetting::Blocks), 1.0);
  EXPECT_EQ(score_run(outcome({2}, ExecResult::Partial, "grasp_fail"), {2}, TaskSetting::Blocks), 0.5);
  EXPECT_EQ(score_run(outcome({4, 1}, ExecResult::Partial, "grasp_fail"), {4, 1}, TaskSetting::Kitchen), 0.5);
  EXPECT_EQ(score_run(outcome({3}, ExecResult::Success), {2}, TaskSetting::Blocks), 0.0);
  EXPECT_EQ(score_run(outcome({4, 0}, ExecResult::Partial), {4, 1}, TaskSetting::Kitchen), 0.0);
  EXPECT_EQ(score_run(outcome({2}, ExecResult::Fail, "act_fail"), {2}, TaskSetting::Drawers), 0.0);
}

TEST(Aggregate, ArithmeticAndRounding) {
  std::vector<EpisodeLog> logs;
  for (int i = 0; i < 3; ++i) logs.push_back(log_with(1.0));
  for (int i = 0; i < 2; ++i) logs.push_back(log_with(0.5));
  for (int i = 0; i < 5; ++i) logs.push_back(log_with(0.0));
  const auto rows = aggregate(logs, {});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].runs, 10);
  EXPECT_EQ(rounded_percent(rows[0].percent()), 40);
  EXPECT_EQ(rounded_percent(aggregate(std::vector<EpisodeLog>(10, log_with(1.0)), {})[0].percent()), 100);
  EXPECT_EQ(rounded_percent(72.5), 73);
  EXPECT_EQ(rounded_percent(18.49), 18);
}

TEST(Aggregate, PermutationInvariant) {
  std::mt19937_64 rng(3);
  std::vector<EpisodeLog> logs;
  const double scores[] = {0.0, 0.5, 1.0};
  for (int i = 0; i < 200; ++i) {
    logs.push_back(log_with(scores[rng() % 3], 1 + static_cast<int>(rng() % 3),
                            static_cast<TaskSetting>(rng() % 3), rng() % 2 ? "openvla" : "ia-vla"));
  }
  const std::vector<GroupBy> by{GroupBy::Setting, GroupBy::Category, GroupBy::Variant};
  const auto ref = aggregate(logs, by);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(logs.begin(), logs.end(), rng);
    const auto got = aggregate(logs, by);
    ASSERT_EQ(got.size(), ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].setting, ref[i].setting);
      EXPECT_EQ(got[i].category, ref[i].category);
      EXPECT_EQ(got[i].variant, ref[i].variant);
      EXPECT_EQ(got[i].runs, ref[i].runs);
      EXPECT_EQ(got[i].points, ref[i].points);
    }
  }
}

TEST(Classify, DecisionOrder) {
  auto l = log_with(0.0);
  l.outcome = outcome({2}, ExecResult::Fail, "act_fail");
  EXPECT_EQ(classify_failure(l), FailureMode::Execution);

  l.highlighted_ids = {3};
  l.outcome = outcome({3}, ExecResult::Success);
  EXPECT_EQ(classify_failure(l), FailureMode::VlmSelection);

  l.outcome = outcome({3}, ExecResult::Fail, "act_fail");
  EXPECT_EQ(classify_failure(l), FailureMode::Combined);

  l.masked_ids = {1, 3};
  EXPECT_EQ(classify_failure(l), FailureMode::Masking);

  auto none = log_with(0.0);
  none.highlighted_ids.clear();
  none.outcome = outcome({-1}, ExecResult::Fail, "no_highlight");
  EXPECT_EQ(classify_failure(none), FailureMode::VlmSelection);
}

TEST(Classify, OnlyFailedRuns) {
  EXPECT_THROW(classify_failure(log_with(1.0)), ContractError);
  EXPECT_THROW(classify_failure(log_with(0.5)), ContractError);
  auto half = log_with(0.5);
  half.outcome = outcome({2}, ExecResult::Partial, "grasp_fail");
  EXPECT_EQ(classify_failure(half, true), FailureMode::Execution);
}

TEST(Failures, DistributionSumsToTotal) {
  std::mt19937_64 rng(9);
  std::vector<EpisodeLog> logs;
  for (int i = 0; i < 500; ++i) {
    auto l = log_with(i % 4 == 0 ? 1.0 : i % 4 == 1 ? 0.5 : 0.0);
    if (rng() % 3 == 0) l.highlighted_ids = {1};
    if (rng() % 7 == 0) l.masked_ids = {1};
    l.outcome = outcome(l.highlighted_ids, rng() % 2 ? ExecResult::Fail : ExecResult::Success);
    logs.push_back(l);
  }
  for (bool half : {false, true}) {
    const auto d = failure_distribution(logs, half);
    int sum = 0;
    double pct = 0;
    for (const auto& [m, n] : d.counts) {
      sum += n;
      pct += d.percent(m);
    }
    EXPECT_EQ(sum, d.failed);
    EXPECT_NEAR(pct, 100.0, 1e-9);
    int positive = 0;
    for (const auto& l : logs) positive += !is_failed(l, half);
    EXPECT_EQ(d.failed + positive, d.total_runs);
  }
}

TEST(Report, EmptyLogsGiveZeroCounts) {
  const auto r = build_report({}, {GroupBy::Setting});
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(r.failures.failed, 0);
  const auto j = report_json(r);
  EXPECT_EQ(j["total_runs"], 0);
  EXPECT_EQ(j["failures"]["modes"]["execution"]["percent"], 0.0);
  EXPECT_NE(report_csv(r).find("setting,category,variant,runs,points,percent,percent_rounded"), std::string::npos);
}

TEST(Report, StableCsvAndTimings) {
  std::vector<EpisodeLog> logs{log_with(1.0, 1), log_with(0.0, 2, TaskSetting::Kitchen)};
  logs[1].outcome = outcome({2}, ExecResult::Fail, "act_fail");
  logs[0].timings.preprocess_ms = 12;
  logs[1].timings.preprocess_ms = 30;
  logs[0].timings.step_latency_ms = {1, 2, 3, 4};
  const auto r = build_report(logs, {GroupBy::Setting, GroupBy::Category});
  const std::string csv = report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find("\n\n")),
            "setting,category,variant,runs,points,percent,percent_rounded\n"
            "blocks,1,all,1,1.0,100.000,100\n"
            "kitchen,2,all,1,0.0,0.000,0");
  EXPECT_EQ(r.preprocess_ms.p50, 12);
  EXPECT_EQ(r.preprocess_ms.p95, 30);
  EXPECT_EQ(r.step_latency_ms.p95, 4);
  EXPECT_EQ(r.runs_per_setting.at("kitchen"), 1);
}

TEST(Report, UnwritableDestination) {
  const auto file = std::filesystem::temp_directory_path() / "iavla_report_blocker";
  write_file(file.string(), std::string_view("x"));
  EXPECT_THROW(write_report(build_report({}, {}), (file / "sub").string()), IoError);
  std::filesystem::remove(file);
}

TEST(Logs, JsonlRoundTrip) {
  auto l = log_with(0.5, 3, TaskSetting::Drawers, "openvla");
  l.selection = SelectionResult{{2}, "FINAL: [2]", SelectionStatus::Ok, 1};
  l.outcome = outcome({2}, ExecResult::Partial, "grasp_fail");
  l.artifacts["frame0"] = "abc";
  l.timings.step_latency_ms = {1.5};
  const auto path = (std::filesystem::temp_directory_path() / "iavla_logs.jsonl").string();
  write_logs_jsonl(path, {l, log_with(1.0)});
  const auto back = read_logs_jsonl(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(to_json(back[0]), to_json(l));
  EXPECT_EQ(canonical_json(back[0]), canonical_json(l));
  std::filesystem::remove(path);
  EXPECT_THROW(read_logs_jsonl(path), IoError);
}

TEST(Percentile, NearestRank) {
  EXPECT_EQ(percentile({}, 50), 0.0);
  EXPECT_EQ(percentile({5}, 95), 5.0);
  EXPECT_EQ(percentile({4, 1, 3, 2}, 50), 2.0);
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_EQ(percentile(v, 95), 95.0);
}
