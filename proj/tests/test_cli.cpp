#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "iavla/benchmark.hpp"
#include "iavla/errors.hpp"
#include "iavla/transport.hpp"

using namespace iavla;
namespace fs = std::filesystem;

namespace {

const std::string kCli = IAVLA_CLI_PATH;

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("iavla_cli_" + name);
  fs::remove_all(p);
  return p;
}

int run(const std::string& args) { return std::system((kCli + " --log-level off " + args).c_str()); }

}  // namespace

TEST(Cli, StdioBackendMatchesInProcess) {
  BenchmarkOptions o;
  o.setting = TaskSetting::Kitchen;
  o.episodes = 1;
  o.size = 160;
  o.frames = 5;
  o.seed = 21;
  const auto spec = make_benchmark(o).front();
  const auto dir = scratch("bundle");
  write_bundle(dir.string(), SceneBundle{spec.world, {}, spec.instruction});

  PipelineConfig cfg;
  cfg.backend.corruption.split_probability = 0.5;
  cfg.backend.corruption.spurious_fragment_rate = 2.0;
  const auto cfg_path = dir / "backend.json";
  write_file(cfg_path.string(), to_json(cfg).dump());

  StdioBackend remote({kCli, "--log-level", "off", "backend", "--scene", dir.string(), "--transport", "stdio",
                       "--seed", "9", "--config", cfg_path.string()});
  const auto local = make_backend(cfg, &spec.world, 9);

  SegmentRequest req;
  req.image = render_frame(spec.world.scene, &spec.world.motion, 0).image;
  const auto a = remote.segment(req);
  const auto b = local->segment(req);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);

  const auto ra = remote.track_init(req.image, a);
  const auto rb = local->track_init(req.image, b);
  for (int f = 1; f < 5; ++f) {
    const auto img = render_frame(spec.world.scene, &spec.world.motion, f).image;
    const auto sa = remote.track_step(ra, img);
    const auto sb = local->track_step(rb, img);
    ASSERT_EQ(sa.masks.size(), sb.masks.size());
    for (std::size_t i = 0; i < sa.masks.size(); ++i) EXPECT_EQ(sa.masks[i], sb.masks[i]);
  }
  EXPECT_THROW(remote.track_step("trk-404", req.image), SessionError);
  fs::remove_all(dir);
}

TEST(Cli, GenerateEvaluateReport) {
  const auto dir = scratch("eval");
  ASSERT_EQ(run("gen-scenes --setting blocks --episodes 3 --size 160 --frames 3 --seed 2 --out " +
                (dir / "scenes").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "scenes" / "blocks-0" / "episode.json"));
  const auto cfg = dir / "small.json";
  write_file(cfg.string(), std::string_view(R"({"filter":{"min_area":40},"vlm_resolution":240,"policy_resolution":112})"));
  ASSERT_EQ(run("evaluate --scenes " + (dir / "scenes").string() + " --config " + cfg.string() + " --out " +
                (dir / "out").string() + " > /dev/null"),
            0);
  const auto logs = read_logs_jsonl((dir / "out" / "logs.jsonl").string());
  EXPECT_EQ(logs.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.json"));
  EXPECT_EQ(run("report --by setting,variant --logs " + (dir / "out" / "logs.jsonl").string() + " --out " +
                (dir / "rep").string() + " > /dev/null"),
            0);
  EXPECT_TRUE(fs::exists(dir / "rep" / "report.csv"));
  EXPECT_EQ(run("augment-dataset --in " + (dir / "scenes").string() + " --out " + (dir / "aug").string() +
                " --config " + cfg.string() + " > /dev/null"),
            0);
  EXPECT_TRUE(fs::exists(dir / "aug" / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Cli, RejectsBadArguments) {
  EXPECT_NE(run("2> /dev/null"), 0);
  EXPECT_NE(run("report --logs /nonexistent.jsonl 2> /dev/null"), 0);
  EXPECT_NE(run("serve --backend carrier-pigeon 2> /dev/null"), 0);
}
