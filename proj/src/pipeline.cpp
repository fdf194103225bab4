#include "iavla/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "iavla/errors.hpp"
#include "iavla/seeding.hpp"
#include "iavla/transport.hpp"

namespace fs = std::filesystem;

namespace iavla {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", t);
  return buf;
}

std::string png_hash(const RgbImage& img) { return content_hash(encode_png(img)); }

std::string read_text(const fs::path& p) {
  const auto raw = read_file(p.string());
  std::string s(raw.begin(), raw.end());
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

std::optional<std::vector<int>> try_targets(const SceneSpec& scene, const std::string& text) {
  try {
    return resolve_instruction(scene, parse_instruction(scene.setting, text));
  } catch (const ResolveError&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------
// Configuration

void PipelineConfig::validate() const {
  if (filter) filter->validate();
  style.validate();
  vlm.mock.validate();
  backend.corruption.validate();
  if (vlm_resolution <= 0 || policy_resolution <= 0) throw ConfigError("resolutions must be positive");
  if (vlm.backend != "mock" && vlm.backend != "http") throw ConfigError("vlm backend must be mock or http");
  if (vlm.backend == "http" && vlm.url.empty()) throw ConfigError("http VLM needs a url");
  if (vlm.retries < 0) throw ConfigError("vlm retries must be non-negative");
  if (vlm.timeout_ms <= 0 || backend.timeout_ms <= 0) throw ConfigError("timeouts must be positive");
  if (backend.kind != "synthetic" && backend.kind != "http" && backend.kind != "stdio")
    throw ConfigError("backend kind must be synthetic, http or stdio");
  if (backend.kind == "http" && backend.url.empty()) throw ConfigError("http backend needs a url");
  if (backend.kind == "stdio" && backend.command.empty()) throw ConfigError("stdio backend needs a command");
  if (!(backend.session_idle_timeout_s > 0)) throw ConfigError("session idle timeout must be positive");
  if (!(preprocess_budget_ms > 0)) throw ConfigError("preprocess budget must be positive");
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

FilterConfig PipelineConfig::filter_for(TaskSetting s) const {
  if (filter) return *filter;
  return s == TaskSetting::Drawers ? FilterConfig::drawers() : FilterConfig::tabletop();
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  return {{"filter", cfg.filter ? to_json(*cfg.filter) : nlohmann::json()},
          {"style", to_json(cfg.style)},
          {"vlm",
           {{"backend", cfg.vlm.backend},
            {"url", cfg.vlm.url},
            {"retries", cfg.vlm.retries},
            {"timeout_ms", cfg.vlm.timeout_ms},
            {"mock", to_json(cfg.vlm.mock)}}},
          {"backend",
           {{"kind", cfg.backend.kind},
            {"url", cfg.backend.url},
            {"command", cfg.backend.command},
            {"timeout_ms", cfg.backend.timeout_ms},
            {"session_idle_timeout_s", cfg.backend.session_idle_timeout_s},
            {"corruption", to_json(cfg.backend.corruption)}}},
          {"relabel", cfg.relabel},
          {"vlm_resolution", cfg.vlm_resolution},
          {"policy_resolution", cfg.policy_resolution},
          {"tracker_failure", cfg.tracker_failure == TrackerFailurePolicy::Freeze ? "freeze" : "abort"},
          {"preprocess_budget_ms", cfg.preprocess_budget_ms},
          {"workers", cfg.workers},
          {"setting", cfg.setting ? nlohmann::json(to_string(*cfg.setting)) : nlohmann::json()}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& patch, const PipelineConfig& base) {
  if (!patch.is_object()) throw ConfigError("pipeline config must be a JSON object");
  nlohmann::json j = to_json(base);
  j.merge_patch(patch);
  PipelineConfig c;
  try {
    if (!j["filter"].is_null()) c.filter = filter_config_from_json(j["filter"]);
    c.style = highlight_style_from_json(j["style"]);
    const auto& v = j["vlm"];
    c.vlm.backend = v.value("backend", c.vlm.backend);
    c.vlm.url = v.value("url", "");
    c.vlm.retries = v.value("retries", c.vlm.retries);
    c.vlm.timeout_ms = v.value("timeout_ms", c.vlm.timeout_ms);
    c.vlm.mock = mock_vlm_config_from_json(v.value("mock", nlohmann::json::object()));
    const auto& b = j["backend"];
    c.backend.kind = b.value("kind", c.backend.kind);
    c.backend.url = b.value("url", "");
    c.backend.command = b.value("command", std::vector<std::string>{});
    c.backend.timeout_ms = b.value("timeout_ms", c.backend.timeout_ms);
    c.backend.session_idle_timeout_s = b.value("session_idle_timeout_s", c.backend.session_idle_timeout_s);
    c.backend.corruption = corruption_from_json(b.value("corruption", nlohmann::json::object()));
    const auto& r = j["relabel"];
    if (r.is_boolean()) {
      c.relabel = r.get<bool>();
    } else if (r.is_string() && (r == "on" || r == "off")) {
      c.relabel = r == "on";
    } else {
      throw ConfigError("relabel must be on or off");
    }
    c.vlm_resolution = j.value("vlm_resolution", c.vlm_resolution);
    c.policy_resolution = j.value("policy_resolution", c.policy_resolution);
    const std::string tf = j.value("tracker_failure", "freeze");
    if (tf != "freeze" && tf != "abort") throw ConfigError("tracker_failure must be freeze or abort");
    c.tracker_failure = tf == "freeze" ? TrackerFailurePolicy::Freeze : TrackerFailurePolicy::Abort;
    c.preprocess_budget_ms = j.value("preprocess_budget_ms", c.preprocess_budget_ms);
    c.workers = j.value("workers", c.workers);
    if (!j["setting"].is_null()) c.setting = setting_from_string(j["setting"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path, const PipelineConfig& base) {
  const auto raw = read_file(path);
  const auto j = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path + " is not valid JSON");
  return pipeline_config_from_json(j, base);
}

std::string relabel_template(TaskSetting setting) {
  switch (setting) {
    case TaskSetting::Blocks:
      return "lift the highlighted block";
    case TaskSetting::Kitchen:
      return "put the highlighted vegetable in the highlighted pot";
    case TaskSetting::Drawers:
      return "open the highlighted drawer";
  }
  return {};
}

// ---------------------------------------------------------------------------
// Preprocessing

HintProvider oracle_hint_provider(const World& world, const std::vector<int>& targets) {
  return [world, targets](const MaskSet& candidates, const TagLayout& layout) -> std::optional<OracleHint> {
    const auto& scene = world.scene;
    const MaskSet gt = ground_truth_masks(scene, &world.motion, 0);
    std::vector<double> best_iou(candidates.size(), 0.0);
    std::vector<int> best_obj(candidates.size(), -1);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const double v = iou(candidates[c], gt[i]);
        if (v >= 0.5 && v > best_iou[c]) {
          best_iou[c] = v;
          best_obj[c] = scene.objects[i].id;
        }
      }
    }
    OracleHint hint;
    for (int target : targets) {
      const auto kind = scene.object(target).kind;
      std::optional<int> correct;
      double correct_iou = 0.0;
      std::vector<int> decoys;
      for (const auto& e : layout.entries) {
        const int obj = best_obj[e.mask_index];
        if (obj == target && best_iou[e.mask_index] > correct_iou) {
          correct = e.tag_id;
          correct_iou = best_iou[e.mask_index];
        } else if (obj >= 0 && obj != target && scene.object(obj).kind == kind) {
          decoys.push_back(e.tag_id);
        }
      }
      hint.correct.push_back(correct);
      hint.decoys.push_back(decoys);
    }
    return hint;
  };
}

nlohmann::json to_json(const AugmentedInit& init) {
  std::vector<std::size_t> selected(init.selected_indices.begin(), init.selected_indices.end());
  return {{"candidates", masks_to_json(init.candidates)},
          {"layout", to_json(init.layout)},
          {"selection", to_json(init.selection)},
          {"selected_indices", selected},
          {"effective_instruction", init.effective_instruction},
          {"timings",
           {{"segment_ms", init.timings.segment_ms},
            {"filter_ms", init.timings.filter_ms},
            {"annotate_ms", init.timings.annotate_ms},
            {"select_ms", init.timings.select_ms},
            {"highlight_ms", init.timings.highlight_ms},
            {"preprocess_ms", init.timings.preprocess_ms}}}};
}

AugmentedInit preprocess(const RgbImage& frame0, const std::string& instruction,
                         TaskSetting setting, const PipelineConfig& cfg, Backend& backend,
                         VlmClient& vlm, const HintProvider& hint, AugmentedInit* partial) {
  AugmentedInit local;
  AugmentedInit& out = partial ? *partial : local;
  out = AugmentedInit{};
  const auto t0 = Clock::now();
  auto within_budget = [&](const char* stage) {
    if (ms_since(t0) > cfg.preprocess_budget_ms)
      throw PreprocessError("timeout", std::string("preprocessing budget exceeded after ") + stage);
  };
  if (frame0.empty()) throw InputError("empty first frame");
  out.effective_instruction = cfg.relabel ? relabel_template(setting) : instruction;

  const FilterConfig fc = cfg.filter_for(setting);
  auto t = Clock::now();
  const MaskSet raw = backend.segment({frame0, fc.granularity_levels});
  out.timings.segment_ms = ms_since(t);
  if (!raw.empty() && (raw.width() != frame0.width() || raw.height() != frame0.height()))
    throw BackendError("segmenter returned masks that do not match the frame size");
  within_budget("segmentation");

  t = Clock::now();
  out.candidates = raw.empty() ? MaskSet{} : filter_pipeline(raw, fc);
  out.timings.filter_ms = ms_since(t);
  if (out.candidates.empty()) throw PreprocessError("masking", "no candidate masks after filtering");
  within_budget("filtering");

  // Tags are placed at VLM resolution; masks that vanish there get no tag.
  t = Clock::now();
  const int vr = cfg.vlm_resolution;
  const RgbImage small = resize_nearest(frame0, vr, vr);
  MaskSet taggable;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    auto m = resize_nearest(out.candidates[i], vr, vr);
    if (m.empty()) continue;
    taggable.push_back(std::move(m));
    origin.push_back(i);
  }
  if (taggable.empty()) throw PreprocessError("masking", "no candidate survives resizing for the VLM");
  TagLayout layout = place_tags(taggable, vr, vr);
  out.annotated = render_annotated(small, taggable, layout);
  for (auto& e : layout.entries) e.mask_index = origin[e.mask_index];
  out.layout = layout;
  out.timings.annotate_ms = ms_since(t);
  within_budget("annotation");

  t = Clock::now();
  const auto h = hint ? hint(out.candidates, out.layout) : std::nullopt;
  out.selection = select(out.annotated, instruction, out.layout.tag_ids(), setting, vlm,
                         cfg.vlm.retries, h);
  out.timings.select_ms = ms_since(t);
  if (out.selection.status != SelectionStatus::Ok) {
    throw PreprocessError("vlm_selection", "no valid selection after " +
                                               std::to_string(out.selection.attempts) +
                                               " attempts (" + std::string(to_string(out.selection.status)) + ")");
  }
  within_budget("selection");

  t = Clock::now();
  for (int tag : out.selection.chosen_tags) {
    const auto idx = static_cast<std::size_t>(out.layout.mask_index_for(tag));
    out.selected_indices.push_back(idx);
    out.selected.push_back(out.candidates[idx]);
  }
  out.highlighted_native = highlight(frame0, out.selected, cfg.style);
  out.highlighted = resize_nearest(out.highlighted_native, cfg.policy_resolution, cfg.policy_resolution);
  out.timings.highlight_ms = ms_since(t);
  out.timings.preprocess_ms = ms_since(t0);
  return partial ? *partial : std::move(local);
}

// ---------------------------------------------------------------------------
// Streaming

StreamSession::StreamSession(Backend& backend, const PipelineConfig& cfg, const RgbImage& frame0,
                             const AugmentedInit& init)
    : backend_(backend),
      style_(cfg.style),
      policy_resolution_(cfg.policy_resolution),
      policy_(cfg.tracker_failure),
      tracking_(track_init(backend, frame0, init.selected)),
      last_(init.selected) {}

StepOutput StreamSession::step(const RgbImage& frame) {
  const auto t0 = Clock::now();
  StepOutput out;
  double backend_ms = 0;
  try {
    out.masks = track_step(backend_, tracking_, frame);
    backend_ms = tracking_.latencies_ms.back();
  } catch (const Error& e) {
    if (policy_ == TrackerFailurePolicy::Abort) throw;
    if (!dynamic_cast<const BackendError*>(&e) && !dynamic_cast<const SessionError*>(&e)) throw;
    backend_ms = ms_since(t0);
    tracking_.latencies_ms.push_back(backend_ms);
    ++tracking_.frame_counter;
    out.masks = last_;
    out.frozen = true;
  }
  last_ = out.masks;
  out.frame = resize_nearest(highlight(frame, out.masks, style_), policy_resolution_, policy_resolution_);
  out.latency_ms = ms_since(t0);
  out.overhead_ms = std::max(0.0, out.latency_ms - backend_ms);
  return out;
}

// ---------------------------------------------------------------------------
// Episodes

std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg, const World* world, std::uint64_t seed) {
  const auto& b = cfg.backend;
  if (b.kind == "synthetic") {
    if (!world) throw ConfigError("the synthetic backend needs a scene description");
    CorruptionConfig c = b.corruption;
    c.rng_seed = derive_seed(derive_seed(seed, "corruption"), b.corruption.rng_seed);
    return std::make_unique<SyntheticBackend>(*world, c, b.session_idle_timeout_s);
  }
  if (b.kind == "http") return std::make_unique<HttpBackend>(b.url, b.timeout_ms);
  if (b.kind == "stdio") return std::make_unique<StdioBackend>(b.command);
  throw ConfigError("unknown backend kind " + b.kind);
}

std::unique_ptr<VlmClient> make_vlm(const PipelineConfig& cfg, std::uint64_t seed) {
  if (cfg.vlm.backend == "http") return std::make_unique<HttpVlmClient>(cfg.vlm.url, cfg.vlm.timeout_ms);
  MockVlmConfig m = cfg.vlm.mock;
  m.rng_seed = derive_seed(derive_seed(seed, "vlm"), cfg.vlm.mock.rng_seed);
  return std::make_unique<MockVlm>(m);
}

EpisodeResult run_episode(const EpisodeSpec& spec, const PipelineConfig& cfg, const RunOptions& options) {
  EpisodeResult res;
  EpisodeLog& log = res.log;
  const auto& scene = spec.world.scene;
  const auto& motion = spec.world.motion;
  log.episode_id = spec.episode_id;
  log.setting = scene.setting;
  log.variant = spec.variant;
  log.instruction = spec.instruction;
  log.category = spec.category;
  log.effective_instruction = cfg.relabel ? relabel_template(scene.setting) : spec.instruction;

  const auto targets = try_targets(scene, spec.instruction);
  if (!targets) {
    log.stage = "input";
    log.error = "instruction has no referent in the scene";
    return res;
  }
  log.targets = *targets;

  std::unique_ptr<Backend> own_backend;
  std::unique_ptr<VlmClient> own_vlm;
  Backend* backend = options.backend;
  VlmClient* vlm = options.vlm;
  if (!backend) backend = (own_backend = make_backend(cfg, &spec.world, spec.seed)).get();
  if (!vlm) vlm = (own_vlm = make_vlm(cfg, spec.seed)).get();

  const RgbImage frame0 = render_frame(scene, &motion, 0).image;
  const MaskSet gt0 = ground_truth_masks(scene, &motion, 0);
  log.artifacts["frame0"] = png_hash(frame0);

  AugmentedInit init;
  bool ready = false;
  try {
    preprocess(frame0, spec.instruction, scene.setting, cfg, *backend, *vlm,
               oracle_hint_provider(spec.world, log.targets), &init);
    ready = true;
  } catch (const PreprocessError& e) {
    log.stage = e.stage();
    log.error = e.what();
  } catch (const BackendError& e) {
    log.stage = "backend";
    log.error = e.what();
  } catch (const Error& e) {
    log.stage = "input";
    log.error = e.what();
  }
  log.timings = init.timings;
  log.candidate_count = static_cast<int>(init.candidates.size());
  log.masked_ids = masked_object_ids(scene, gt0, init.candidates);
  if (init.selection.attempts > 0) log.selection = init.selection;
  if (!init.annotated.empty()) log.artifacts["annotated"] = png_hash(init.annotated);

  MaskSet lit;
  if (ready) {
    lit = init.selected;
    log.highlighted_ids = matched_object_ids(scene, gt0, init.selected);
    log.artifacts["highlighted"] = png_hash(init.highlighted);
    std::vector<std::string> frame_hashes{log.artifacts["highlighted"]};
    if (options.keep_frames) res.frames.push_back(init.highlighted);
    try {
      StreamSession stream(*backend, cfg, frame0, init);
      for (int f = 1; f < motion.frames; ++f) {
        auto out = stream.step(render_frame(scene, &motion, f).image);
        log.timings.step_latency_ms.push_back(out.latency_ms);
        log.timings.step_overhead_ms.push_back(out.overhead_ms);
        frame_hashes.push_back(png_hash(out.frame));
        if (options.keep_frames) res.frames.push_back(std::move(out.frame));
      }
    } catch (const Error& e) {
      log.stage = "tracking";
      log.error = e.what();
    }
    log.frames = static_cast<int>(frame_hashes.size());
    std::string joined;
    for (const auto& h : frame_hashes) joined += h;
    log.artifacts["frames"] = content_hash(joined);
  }

  Outcome outcome = scripted_executor(scene, gt0, lit, spec.noise, derive_seed(spec.seed, "executor"));
  if (log.stage == "tracking") {
    outcome.result = ExecResult::Fail;
    outcome.reason = "tracking";
  }
  log.outcome = outcome;
  log.score = score_run(outcome, log.targets, scene.setting);
  return res;
}

std::vector<EpisodeLog> run_batch(const std::vector<EpisodeSpec>& specs, const PipelineConfig& cfg) {
  std::vector<EpisodeLog> logs(specs.size());
  std::atomic<std::size_t> next{0};
  RunOptions opts;
  opts.keep_frames = false;
  auto worker = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) logs[i] = run_episode(specs[i], cfg, opts).log;
  };
  const int n = std::min<int>(cfg.workers, static_cast<int>(std::max<std::size_t>(specs.size(), 1)));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return logs;
}

// ---------------------------------------------------------------------------
// Dataset augmentation

namespace {

std::vector<fs::path> episode_frames(const fs::path& ep) {
  const fs::path dir = fs::is_directory(ep / "frames") ? ep / "frames" : ep;
  std::vector<fs::path> frames;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("frame_", 0) == 0 && e.path().extension() == ".png")
      frames.push_back(e.path());
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

nlohmann::json augment_episode(const fs::path& ep, const fs::path& out, const PipelineConfig& base,
                               std::uint64_t seed) {
  const std::string id = ep.filename().string();
  nlohmann::json record = {{"episode_id", id}, {"status", "failed"}, {"stage", ""}, {"error", ""}};
  AugmentedInit init;
  bool preprocessed = false;
  PipelineConfig cfg = base;
  try {
    if (fs::exists(ep / "config.json")) cfg = load_pipeline_config((ep / "config.json").string(), base);
    if (!fs::exists(ep / "instruction.txt")) throw InputError("missing instruction.txt");
    const std::string instruction = read_text(ep / "instruction.txt");
    const auto frames = episode_frames(ep);
    if (frames.empty()) throw InputError("no frames");

    std::optional<World> world;
    if (fs::exists(ep / "scene.json")) world = read_bundle(ep.string()).world;
    TaskSetting setting;
    if (world) {
      setting = world->scene.setting;
    } else if (cfg.setting) {
      setting = *cfg.setting;
    } else {
      throw ConfigError("episode has no scene.json and the config names no setting");
    }

    HintProvider hint;
    std::optional<std::vector<int>> targets;
    if (world) {
      targets = try_targets(world->scene, instruction);
      if (targets) hint = oracle_hint_provider(*world, *targets);
    }
    const std::uint64_t ep_seed = derive_seed(seed, id);
    auto backend = make_backend(cfg, world ? &*world : nullptr, ep_seed);
    auto vlm = make_vlm(cfg, ep_seed);

    const RgbImage frame0 = decode_png(read_file(frames[0].string()));
    preprocess(frame0, instruction, setting, cfg, *backend, *vlm, hint, &init);
    if (targets) {
      // Ground truth is at hand: refuse to write frames that highlight the
      // wrong objects.
      const auto gt = ground_truth_masks(world->scene, &world->motion, 0);
      const auto masked = masked_object_ids(world->scene, gt, init.candidates);
      for (int t : *targets)
        if (std::find(masked.begin(), masked.end(), t) == masked.end())
          throw PreprocessError("masking", "target object " + std::to_string(t) + " has no candidate mask");
      auto lit = matched_object_ids(world->scene, gt, init.selected);
      auto want = *targets;
      std::sort(lit.begin(), lit.end());
      std::sort(want.begin(), want.end());
      if (lit != want) throw PreprocessError("vlm_selection", "selected masks do not match the instruction's targets");
    }
    preprocessed = true;

    fs::create_directories(out / "augmented");
    write_file((out / "augmented" / frame_name(0)).string(), encode_png(init.highlighted));
    StreamSession stream(*backend, cfg, frame0, init);
    for (std::size_t f = 1; f < frames.size(); ++f) {
      const auto step = stream.step(decode_png(read_file(frames[f].string())));
      write_file((out / "augmented" / frame_name(static_cast<int>(f))).string(), encode_png(step.frame));
    }
    if (cfg.relabel) write_file((out / "instruction_relabel.txt").string(), init.effective_instruction + "\n");
    record["status"] = "ok";
    record["frames"] = frames.size();
  } catch (const PreprocessError& e) {
    record["stage"] = e.stage();
    record["error"] = e.what();
  } catch (const BackendError& e) {
    record["stage"] = preprocessed ? "tracking" : "backend";
    record["error"] = e.what();
  } catch (const Error& e) {
    record["stage"] = preprocessed ? "tracking" : "input";
    record["error"] = e.what();
  } catch (const fs::filesystem_error& e) {
    record["stage"] = "input";
    record["error"] = e.what();
  }
  record["init"] = to_json(init);
  fs::create_directories(out);
  // Written last: its presence marks the episode as done.
  write_file((out / "augment.json").string(), record.dump(2) + "\n");
  return record;
}

}  // namespace

AugmentSummary augment_dataset(const std::string& input_dir, const std::string& output_dir,
                               const PipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!fs::is_directory(input_dir)) throw IoError(input_dir + " is not a directory");
  std::vector<fs::path> episodes;
  for (const auto& e : fs::directory_iterator(input_dir))
    if (e.is_directory()) episodes.push_back(e.path());
  std::sort(episodes.begin(), episodes.end());
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create " + output_dir + ": " + ec.message());

  AugmentSummary summary;
  summary.episodes = static_cast<int>(episodes.size());
  std::vector<nlohmann::json> records(episodes.size());
  std::vector<bool> skipped(episodes.size(), false);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < episodes.size(); i = next++) {
      const fs::path out = fs::path(output_dir) / episodes[i].filename();
      const auto done = out / "augment.json";
      if (fs::exists(done)) {
        const auto raw = read_file(done.string());
        auto j = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
        if (!j.is_discarded()) {
          records[i] = std::move(j);
          skipped[i] = true;
          continue;
        }
      }
      records[i] = augment_episode(episodes[i], out, cfg, seed);
      if (records[i]["status"] != "ok")
        spdlog::warn("episode {} failed at {}: {}", episodes[i].filename().string(),
                     records[i]["stage"].get<std::string>(), records[i]["error"].get<std::string>());
    }
  };
  std::vector<std::thread> pool;
  for (int k = 1; k < cfg.workers; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  auto list = nlohmann::json::array();
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto& r = records[i];
    if (skipped[i]) {
      ++summary.skipped;
    } else {
      ++summary.processed;
    }
    if (r.value("status", "") == "ok") {
      ++summary.succeeded;
    } else {
      ++summary.failed;
      ++summary.failures_by_stage[r.value("stage", "")];
    }
    list.push_back({{"episode_id", r.value("episode_id", episodes[i].filename().string())},
                    {"status", r.value("status", "")},
                    {"stage", r.value("stage", "")}});
  }
  const nlohmann::json manifest = {{"episodes", summary.episodes},
                                   {"processed", summary.processed},
                                   {"skipped", summary.skipped},
                                   {"succeeded", summary.succeeded},
                                   {"failed", summary.failed},
                                   {"failures_by_stage", summary.failures_by_stage},
                                   {"relabel", cfg.relabel},
                                   {"items", list}};
  write_file((fs::path(output_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return summary;
}

}  // namespace iavla
