// iavla: command-line front end for the input-augmentation pipeline.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "iavla/benchmark.hpp"
#include "iavla/errors.hpp"
#include "iavla/gateway.hpp"
#include "iavla/image.hpp"
#include "iavla/pipeline.hpp"
#include "iavla/transport.hpp"

using namespace iavla;
namespace fs = std::filesystem;

namespace {

struct PipelineFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string backend;
  std::string backend_url;
  std::string backend_command;
  std::string vlm;
  std::string vlm_url;
  std::string relabel;
  int workers = 0;
};

void add_pipeline_flags(CLI::App* app, PipelineFlags& f) {
  app->add_option("--config", f.config, "pipeline config JSON")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "root seed");
  app->add_option("--backend", f.backend, "segmentation/tracking backend")
      ->check(CLI::IsMember({"synthetic", "http", "stdio"}));
  app->add_option("--backend-url", f.backend_url, "URL of an http backend");
  app->add_option("--backend-command", f.backend_command, "command line of a stdio backend");
  app->add_option("--vlm", f.vlm, "selector")->check(CLI::IsMember({"mock", "http"}));
  app->add_option("--vlm-url", f.vlm_url, "URL of an http selector");
  app->add_option("--relabel", f.relabel, "replace the instruction for the policy")
      ->check(CLI::IsMember({"on", "off"}));
  app->add_option("--workers", f.workers, "episode worker threads")->check(CLI::PositiveNumber);
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

PipelineConfig build_config(const PipelineFlags& f) {
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : load_pipeline_config(f.config);
  nlohmann::json patch = nlohmann::json::object();
  if (!f.backend.empty()) patch["backend"]["kind"] = f.backend;
  if (!f.backend_url.empty()) patch["backend"]["url"] = f.backend_url;
  if (!f.backend_command.empty()) patch["backend"]["command"] = split_words(f.backend_command);
  if (!f.vlm.empty()) patch["vlm"]["backend"] = f.vlm;
  if (!f.vlm_url.empty()) patch["vlm"]["url"] = f.vlm_url;
  if (!f.relabel.empty()) patch["relabel"] = f.relabel;
  if (f.workers > 0) patch["workers"] = f.workers;
  return pipeline_config_from_json(patch, cfg);
}

// ---------------------------------------------------------------------------
// Episodes on disk: a scene bundle plus an optional episode.json.

nlohmann::json episode_meta(const EpisodeSpec& e) {
  return {{"episode_id", e.episode_id},
          {"instruction", e.instruction},
          {"category", e.category},
          {"seed", e.seed},
          {"variant", e.variant},
          {"noise", to_json(e.noise)}};
}

EpisodeSpec load_episode(const fs::path& dir, std::uint64_t seed) {
  auto bundle = read_bundle(dir.string());
  EpisodeSpec e;
  e.episode_id = dir.filename().string();
  e.world = std::move(bundle.world);
  e.seed = seed;
  if (bundle.instruction) {
    e.instruction = *bundle.instruction;
  } else if (!bundle.instructions.empty()) {
    e.instruction = bundle.instructions.front().text;
  }
  for (const auto& i : bundle.instructions)
    if (i.text == e.instruction) e.category = i.category;
  if (fs::exists(dir / "episode.json")) {
    const auto raw = read_file((dir / "episode.json").string());
    const auto j = nlohmann::json::parse(std::string(raw.begin(), raw.end()), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw IoError((dir / "episode.json").string() + ": not JSON");
    e.episode_id = j.value("episode_id", e.episode_id);
    e.instruction = j.value("instruction", e.instruction);
    e.category = j.value("category", e.category);
    e.seed = j.value("seed", e.seed);
    e.variant = j.value("variant", e.variant);
    if (j.contains("noise")) e.noise = executor_noise_from_json(j["noise"]);
  }
  if (e.instruction.empty()) throw InputError(dir.string() + ": no instruction");
  return e;
}

std::vector<fs::path> episode_dirs(const fs::path& root) {
  std::vector<fs::path> dirs;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory() && fs::exists(d.path() / "scene.json")) dirs.push_back(d.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<TaskSetting> settings_for(const std::string& s) {
  if (s == "all") return {TaskSetting::Blocks, TaskSetting::Kitchen, TaskSetting::Drawers};
  return {setting_from_string(s)};
}

struct GenFlags {
  std::string setting = "all";
  int episodes = 100;
  int size = 480;
  int frames = 8;
  ExecutorNoise noise;
  std::string manifest;
};

void add_gen_flags(CLI::App* app, GenFlags& g) {
  app->add_option("--setting", g.setting, "blocks, kitchen, drawers or all");
  app->add_option("--episodes", g.episodes, "episodes per setting")->check(CLI::PositiveNumber);
  app->add_option("--size", g.size, "frame size in pixels")->check(CLI::Range(32, 4096));
  app->add_option("--frames", g.frames, "frames per episode")->check(CLI::Range(1, 10000));
  app->add_option("--grasp-fail", g.noise.grasp_fail, "executor grasp failure rate")->check(CLI::Range(0.0, 1.0));
  app->add_option("--act-fail", g.noise.act_fail, "executor action failure rate")->check(CLI::Range(0.0, 1.0));
  app->add_option("--wrong-object", g.noise.wrong_object, "executor wrong-object rate")->check(CLI::Range(0.0, 1.0));
  app->add_option("--manifest", g.manifest, "seen-concept manifest JSON")->check(CLI::ExistingFile);
}

std::vector<EpisodeSpec> generate(const GenFlags& g, std::uint64_t seed, const std::string& variant = "ia-vla") {
  BenchmarkOptions o;
  o.episodes = g.episodes;
  o.size = g.size;
  o.frames = g.frames;
  o.seed = seed;
  o.noise = g.noise;
  o.variant = variant;
  if (!g.manifest.empty()) {
    const auto raw = read_file(g.manifest);
    o.manifest = manifest_from_json(nlohmann::json::parse(std::string(raw.begin(), raw.end())));
  }
  std::vector<EpisodeSpec> all;
  for (auto s : settings_for(g.setting)) {
    o.setting = s;
    auto specs = make_benchmark(o);
    all.insert(all.end(), std::make_move_iterator(specs.begin()), std::make_move_iterator(specs.end()));
  }
  return all;
}

std::string frame_name(int t) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%04d.png", t);
  return name;
}

void write_masks(const fs::path& dir, const MaskSet& masks) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "mask_%03zu.png", i);
    write_file((dir / name).string(), mask_to_png(masks[i]));
  }
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_scenes(const GenFlags& g, std::uint64_t seed, const std::string& out) {
  const auto manifest = SeenManifest::defaults();
  int n = 0;
  for (const auto& e : generate(g, seed)) {
    SceneBundle b;
    b.world = e.world;
    b.instructions = gen_instructions(e.world.scene, manifest);
    b.instruction = e.instruction;
    const auto dir = fs::path(out) / e.episode_id;
    write_bundle(dir.string(), b);
    write_file((dir / "episode.json").string(), episode_meta(e).dump(2) + "\n");
    ++n;
  }
  spdlog::info("wrote {} episodes to {}", n, out);
  return 0;
}

int cmd_augment(const std::string& in, const std::string& out, const PipelineFlags& f) {
  const auto s = augment_dataset(in, out, build_config(f), f.seed);
  std::cout << nlohmann::json{{"episodes", s.episodes}, {"processed", s.processed}, {"skipped", s.skipped},
                              {"succeeded", s.succeeded}, {"failed", s.failed},
                              {"failures_by_stage", s.failures_by_stage}}
                   .dump()
            << "\n";
  return s.failed == 0 ? 0 : 3;
}

int cmd_run_episode(const std::string& scene, const std::string& instruction, const std::string& out,
                    const PipelineFlags& f) {
  auto spec = load_episode(scene, f.seed);
  if (!instruction.empty()) spec.instruction = instruction;
  const auto res = run_episode(spec, build_config(f));
  if (!out.empty()) {
    fs::create_directories(fs::path(out) / "frames");
    for (std::size_t t = 0; t < res.frames.size(); ++t)
      write_file((fs::path(out) / "frames" / frame_name(static_cast<int>(t))).string(), encode_png(res.frames[t]));
    write_file((fs::path(out) / "log.json").string(), to_json(res.log).dump(2) + "\n");
  }
  std::cout << to_json(res.log, false).dump() << "\n";
  return res.log.stage.empty() ? 0 : 3;
}

int cmd_evaluate(const std::string& scenes, const GenFlags& g, const std::string& variant,
                 const std::string& out, const PipelineFlags& f, bool half) {
  std::vector<EpisodeSpec> specs;
  if (!scenes.empty()) {
    for (const auto& d : episode_dirs(scenes)) specs.push_back(load_episode(d, f.seed));
  } else {
    specs = generate(g, f.seed, variant);
  }
  spdlog::info("running {} episodes", specs.size());
  const auto logs = run_batch(specs, build_config(f));
  fs::create_directories(out);
  write_logs_jsonl((fs::path(out) / "logs.jsonl").string(), logs);
  const auto report = build_report(logs, {GroupBy::Setting, GroupBy::Category}, half);
  write_report(report, out);
  std::cout << report_csv(report);
  return 0;
}

int cmd_report(const std::vector<std::string>& files, const std::vector<std::string>& by_names, bool half,
               const std::string& out) {
  std::vector<EpisodeLog> logs;
  for (const auto& path : files) {
    auto part = read_logs_jsonl(path);
    logs.insert(logs.end(), part.begin(), part.end());
  }
  std::vector<GroupBy> by;
  for (const auto& name : by_names) by.push_back(group_by_from_string(name));
  const auto report = build_report(logs, by, half);
  if (!out.empty()) write_report(report, out);
  std::cout << report_csv(report);
  return 0;
}

int cmd_serve(const std::string& host, int port, double idle_s, const PipelineFlags& f) {
  Gateway::Options o;
  o.base = build_config(f);
  o.seed = f.seed;
  o.session_idle_timeout_s = idle_s;
  Gateway gateway(std::move(o));
  GatewayHttpServer server(gateway);
  const int bound = server.bind(host, port);
  std::cout << nlohmann::json{{"host", host}, {"port", bound}}.dump() << std::endl;
  spdlog::info("gateway listening on {}:{}", host, bound);
  server.listen();
  return 0;
}

int cmd_mask_debug(const std::string& scene, int frame, const std::string& out, const PipelineFlags& f) {
  const auto spec = load_episode(scene, f.seed);
  const auto cfg = build_config(f);
  const auto backend = make_backend(cfg, &spec.world, f.seed);
  const auto filter = cfg.filter_for(spec.world.scene.setting);
  const auto image = render_frame(spec.world.scene, &spec.world.motion, frame).image;
  SegmentRequest req;
  req.image = image;
  req.granularity_levels = filter.granularity_levels;
  const auto raw = backend->segment(req);
  const auto trace = filter_pipeline_traced(raw, filter);

  const fs::path root(out);
  fs::create_directories(root);
  write_file((root / "frame.png").string(), encode_png(image));
  nlohmann::json summary{{"episode_id", spec.episode_id}, {"frame", frame}};
  for (const auto& [name, masks] : {std::pair<std::string, const MaskSet*>{"raw", &raw},
                                    {"patch", &trace.after_patch},
                                    {"overlap", &trace.after_overlap},
                                    {"area", &trace.after_area}}) {
    write_masks(root / name, *masks);
    MaskSet drawable;
    for (const auto& m : *masks)
      if (m.area() > 0) drawable.push_back(m);
    const auto layout = place_tags(drawable, image.width(), image.height());
    write_file((root / (name + ".png")).string(), encode_png(render_annotated(image, drawable, layout)));
    summary["stages"][name] = masks->size();
  }
  summary["warnings"] = trace.diagnostics.warnings;
  write_file((root / "summary.json").string(), summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_backend(const std::string& scene, const std::string& transport, const std::string& host, int port,
                const PipelineFlags& f) {
  const auto world = read_bundle(scene).world;
  auto cfg = build_config(f);
  cfg.backend.kind = "synthetic";
  const auto backend = make_backend(cfg, &world, f.seed);
  BackendService service(*backend);
  if (transport == "stdio") {
    serve_stdio(service, std::cin, std::cout);
    return 0;
  }
  BackendHttpServer server(service);
  const int bound = server.bind(host, port);
  std::cout << nlohmann::json{{"host", host}, {"port", bound}}.dump() << std::endl;
  spdlog::info("backend listening on {}:{}", host, bound);
  server.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("iavla"));

  CLI::App app{"Input augmentation for vision-language-action policies"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  PipelineFlags f;
  GenFlags g;
  std::string out, in, scene, instruction, scenes, variant = "ia-vla", transport = "http", host = "127.0.0.1";
  int port = 8080, frame = 0;
  double idle_s = 300.0;
  bool half = false;
  std::vector<std::string> logs, by{"setting", "category"};

  auto* gen = app.add_subcommand("gen-scenes", "write synthetic episodes as scene bundles");
  add_gen_flags(gen, g);
  gen->add_option("--seed", f.seed, "root seed");
  gen->add_option("--out", out, "output directory")->required();

  auto* aug = app.add_subcommand("augment-dataset", "rewrite demonstration frames with highlights");
  aug->add_option("--in", in, "episode directories")->required()->check(CLI::ExistingDirectory);
  aug->add_option("--out", out, "output directory")->required();
  add_pipeline_flags(aug, f);

  auto* run = app.add_subcommand("run-episode", "run one episode from a scene bundle");
  run->add_option("--scene", scene, "scene bundle directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--instruction", instruction, "instruction (default: the bundle's)");
  run->add_option("--out", out, "write log.json and policy frames here");
  add_pipeline_flags(run, f);

  auto* eval = app.add_subcommand("evaluate", "run a benchmark and write logs plus a report");
  eval->add_option("--scenes", scenes, "scene bundles (default: generate)")->check(CLI::ExistingDirectory);
  add_gen_flags(eval, g);
  eval->add_option("--variant", variant, "variant label for the logs");
  eval->add_flag("--half-counts-as-failure", half, "count 0.5-point runs as failures");
  eval->add_option("--out", out, "output directory")->required();
  add_pipeline_flags(eval, f);

  auto* rep = app.add_subcommand("report", "aggregate episode logs");
  rep->add_option("--logs", logs, "logs.jsonl files")->required()->check(CLI::ExistingFile);
  rep->add_option("--by", by, "grouping: setting, category, variant")->delimiter(',');
  rep->add_flag("--half-counts-as-failure", half, "count 0.5-point runs as failures");
  rep->add_option("--out", out, "also write report.csv and report.json here");

  auto* serve = app.add_subcommand("serve", "streaming HTTP gateway");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks one)")->check(CLI::Range(0, 65535));
  serve->add_option("--idle-timeout", idle_s, "seconds before an idle episode expires");
  add_pipeline_flags(serve, f);

  auto* dbg = app.add_subcommand("mask-debug", "dump the masks of every filter stage as PNG");
  dbg->add_option("--scene", scene, "scene bundle directory")->required()->check(CLI::ExistingDirectory);
  dbg->add_option("--frame", frame, "frame index")->check(CLI::NonNegativeNumber);
  dbg->add_option("--out", out, "output directory")->required();
  add_pipeline_flags(dbg, f);

  auto* be = app.add_subcommand("backend", "serve the synthetic backend of a scene bundle");
  be->add_option("--scene", scene, "scene bundle directory")->required()->check(CLI::ExistingDirectory);
  be->add_option("--transport", transport, "http or stdio")->check(CLI::IsMember({"http", "stdio"}));
  be->add_option("--host", host, "bind address");
  be->add_option("--port", port, "port (0 picks one)")->check(CLI::Range(0, 65535));
  add_pipeline_flags(be, f);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen) return cmd_gen_scenes(g, f.seed, out);
    if (*aug) return cmd_augment(in, out, f);
    if (*run) return cmd_run_episode(scene, instruction, out, f);
    if (*eval) return cmd_evaluate(scenes, g, variant, out, f, half);
    if (*rep) return cmd_report(logs, by, half, out);
    if (*serve) return cmd_serve(host, port, idle_s, f);
    if (*dbg) return cmd_mask_debug(scene, frame, out, f);
    if (*be) return cmd_backend(scene, transport, host, port, f);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}
