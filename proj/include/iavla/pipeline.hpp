#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "iavla/annotate.hpp"
#include "iavla/backends.hpp"
#include "iavla/evalkit.hpp"
#include "iavla/filters.hpp"
#include "iavla/scenesim.hpp"
#include "iavla/select.hpp"

namespace iavla {

enum class TrackerFailurePolicy { Freeze, Abort };

struct VlmSettings {
  std::string backend = "mock";  // mock | http
  std::string url;
  int retries = 2;
  int timeout_ms = 30000;
  MockVlmConfig mock;
};

struct BackendSettings {
  std::string kind = "synthetic";  // synthetic | http | stdio
  std::string url;
  std::vector<std::string> command;
  int timeout_ms = 30000;
  double session_idle_timeout_s = 300.0;
  CorruptionConfig corruption;
};

struct PipelineConfig {
  /// Unset: tabletop defaults, or the drawer defaults for the drawer setting.
  std::optional<FilterConfig> filter;
  HighlightStyle style;
  VlmSettings vlm;
  BackendSettings backend;
  bool relabel = false;
  int vlm_resolution = 480;
  int policy_resolution = 224;
  TrackerFailurePolicy tracker_failure = TrackerFailurePolicy::Freeze;
  double preprocess_budget_ms = 15000.0;
  int workers = 1;
  /// Used when an episode carries no scene description.
  std::optional<TaskSetting> setting;

  /// Throws ConfigError.
  void validate() const;
  FilterConfig filter_for(TaskSetting setting) const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
/// `j` is applied as a JSON merge patch over `base`. Throws ConfigError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const PipelineConfig& base = {});
/// Reads a JSON config file. Throws ConfigError or IoError.
PipelineConfig load_pipeline_config(const std::string& path, const PipelineConfig& base = {});

/// Target object ids for an instruction, or nothing when it has no referent.
std::optional<std::vector<int>> try_targets(const SceneSpec& scene, const std::string& text);

/// Instruction handed to the policy when relabelling is on.
std::string relabel_template(TaskSetting setting);

/// Ground truth offered to the mock VLM: candidates plus their tag layout.
using HintProvider =
    std::function<std::optional<OracleHint>(const MaskSet& candidates, const TagLayout& layout)>;

/// Per target role: the tag whose candidate best matches the target
/// (IoU >= 0.5), and as decoys the tags of candidates matching other objects
/// of the same kind.
HintProvider oracle_hint_provider(const World& world, const std::vector<int>& targets);

struct AugmentedInit {
  MaskSet candidates;
  /// Tag ids map to indices into `candidates`.
  TagLayout layout;
  RgbImage annotated;  // at vlm_resolution
  SelectionResult selection;
  std::vector<std::size_t> selected_indices;
  MaskSet selected;
  RgbImage highlighted_native;
  RgbImage highlighted;  // at policy_resolution
  std::string effective_instruction;
  EpisodeTimings timings;
};

/// Sidecar form: everything except the rasters.
nlohmann::json to_json(const AugmentedInit& init);

/// segment -> filter -> tag at vlm_resolution -> select -> highlight at native
/// resolution -> resize to policy_resolution. Throws PreprocessError with
/// stage masking (no candidates), vlm_selection (no valid answer) or timeout
/// (budget exceeded); backend failures propagate as BackendError. `partial`,
/// when given, is filled stage by stage so a caller can log how far a failed
/// run got.
AugmentedInit preprocess(const RgbImage& frame0, const std::string& instruction,
                         TaskSetting setting, const PipelineConfig& cfg, Backend& backend,
                         VlmClient& vlm, const HintProvider& hint = {},
                         AugmentedInit* partial = nullptr);

struct StepOutput {
  RgbImage frame;  // at policy_resolution
  MaskSet masks;
  double latency_ms = 0;   // whole step
  double overhead_ms = 0;  // step minus the backend round trip
  bool frozen = false;     // tracker failed, previous masks reused
};

/// Streams frames after a successful preprocess. Never calls the VLM.
class StreamSession {
 public:
  StreamSession(Backend& backend, const PipelineConfig& cfg, const RgbImage& frame0,
                const AugmentedInit& init);

  /// Under the abort policy a tracker failure is rethrown.
  StepOutput step(const RgbImage& frame);

  const TrackSession& tracking() const noexcept { return tracking_; }
  int frame_counter() const noexcept { return tracking_.frame_counter; }

 private:
  Backend& backend_;
  HighlightStyle style_;
  int policy_resolution_;
  TrackerFailurePolicy policy_;
  TrackSession tracking_;
  MaskSet last_;
};

/// Backend for an episode: the synthetic backend needs the world.
std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg, const World* world,
                                      std::uint64_t seed);
std::unique_ptr<VlmClient> make_vlm(const PipelineConfig& cfg, std::uint64_t seed);

struct EpisodeSpec {
  std::string episode_id;
  World world;
  std::string instruction;
  int category = 0;
  ExecutorNoise noise;
  std::uint64_t seed = 0;
  std::string variant = "ia-vla";
};

struct EpisodeResult {
  EpisodeLog log;
  /// Policy-resolution frames: the highlighted first frame, then every step.
  std::vector<RgbImage> frames;
};

struct RunOptions {
  Backend* backend = nullptr;  // defaults to make_backend
  VlmClient* vlm = nullptr;    // defaults to make_vlm
  bool keep_frames = true;
};

/// preprocess, stream every frame of the world's motion, then score the
/// scripted executor. Stage errors end up in the log; only programming errors
/// escape.
EpisodeResult run_episode(const EpisodeSpec& spec, const PipelineConfig& cfg,
                          const RunOptions& options = {});

/// Runs episodes on cfg.workers threads; logs come back in input order.
std::vector<EpisodeLog> run_batch(const std::vector<EpisodeSpec>& specs, const PipelineConfig& cfg);

struct AugmentSummary {
  int episodes = 0;
  int processed = 0;
  int skipped = 0;
  int succeeded = 0;
  int failed = 0;
  std::map<std::string, int> failures_by_stage;
};

/// Input: <in>/<episode>/{instruction.txt, frames/frame_%04d.png} (frames may
/// also sit directly in the episode directory; an optional scene.json
/// describes the synthetic world, an optional config.json patches `cfg` for
/// that episode). Output per episode:
/// augmented/frame_%04d.png, augment.json and, with relabelling,
/// instruction_relabel.txt; plus <out>/manifest.json. Episodes whose
/// augment.json already exists are skipped. With a scene.json the selection is
/// checked against ground truth and a mismatch fails the episode (stage
/// masking or vlm_selection) instead of writing wrong highlights.
AugmentSummary augment_dataset(const std::string& input_dir, const std::string& output_dir,
                               const PipelineConfig& cfg, std::uint64_t seed = 0);

}  // namespace iavla
