#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "iavla/image.hpp"
#include "iavla/mask.hpp"
#include "iavla/setting.hpp"

namespace iavla {

enum class ObjectKind { Block, Pot, Vegetable, Drawer };

std::string_view to_string(ObjectKind k);

struct SceneObject {
  int id = 0;
  ObjectKind kind = ObjectKind::Block;
  /// Block color, vegetable name, "pot" or "drawer".
  std::string name;
  int slot = 0;  // left-to-right position within its row
  int row = 0;   // drawers: 0 top, 1 middle, 2 bottom
  Rect box;

  bool operator==(const SceneObject&) const = default;
};

/// Ground-truth scene. Objects later in the list are drawn on top.
struct SceneSpec {
  TaskSetting setting = TaskSetting::Blocks;
  int width = 480;
  int height = 480;
  std::uint64_t seed = 0;
  std::vector<SceneObject> objects;

  const SceneObject& object(int id) const;
  bool operator==(const SceneSpec&) const = default;
};

nlohmann::json to_json(const SceneSpec& s);
/// Throws GenError on a malformed description.
SceneSpec scene_from_json(const nlohmann::json& j);

/// Linear translation of one object between two frames.
struct ObjectMove {
  int object_id = 0;
  int dx = 0;  // total displacement reached at end_frame
  int dy = 0;
  int start_frame = 0;
  int end_frame = 1;

  bool operator==(const ObjectMove&) const = default;
};

/// Per-frame motion: the gripper travels from `gripper_start` to
/// `gripper_end` over the first half of the episode; objects follow `moves`.
/// The gripper is drawn but never part of any ground-truth mask.
struct EpisodeMotion {
  int frames = 1;
  Point gripper_start;
  Point gripper_end;
  std::vector<ObjectMove> moves;

  Point object_offset(int object_id, int frame) const;
  Point gripper_at(int frame) const;
  bool operator==(const EpisodeMotion&) const = default;
};

nlohmann::json to_json(const EpisodeMotion& m);
/// Gripper reaches toward the first target, then the targets move: a lifted
/// block rises, the vegetable travels to its pot, an opened drawer slides down.
EpisodeMotion default_motion(const SceneSpec& scene, const std::vector<int>& targets,
                             int frames);
EpisodeMotion motion_from_json(const nlohmann::json& j);

/// Scene plus motion: everything the synthetic backend needs.
struct World {
  SceneSpec scene;
  EpisodeMotion motion;
};

struct SceneConstraints {
  /// Blocks or pots in the row.
  std::optional<int> count;
  /// Minimum number of objects per attribute: block colors, vegetable names,
  /// or "pot" for the minimum pot count.
  std::map<std::string, int> min_counts;
};

struct Frame {
  RgbImage image;
  /// One ground-truth mask per scene object, in object order.
  MaskSet masks;
};

/// Throws GenError when the constraints cannot be met.
SceneSpec gen_scene(TaskSetting setting, const SceneConstraints& constraints,
                    std::uint64_t seed, int size = 480);

/// Ground-truth masks of all objects at a frame, pairwise disjoint.
MaskSet ground_truth_masks(const SceneSpec& scene, const EpisodeMotion* motion = nullptr,
                           int frame = 0);
Frame render_frame(const SceneSpec& scene, const EpisodeMotion* motion = nullptr,
                   int frame = 0);

// ---------------------------------------------------------------------------
// Instructions

enum class Direction { Left, Right };

/// "leftmost" is ordinal 1 from the left, "rightmost" ordinal 1 from the right.
struct PositionRef {
  int ordinal = 1;
  Direction from = Direction::Left;

  /// Concept key such as "leftmost" or "second_from_right".
  std::string key() const;
  static PositionRef from_key(std::string_view key);
  bool operator==(const PositionRef&) const = default;
  auto operator<=>(const PositionRef&) const = default;
};

struct Instruction {
  std::string text;
  TaskSetting setting = TaskSetting::Blocks;
  PositionRef position;
  /// Block color, vegetable name, or row name ("top", "middle", "bottom").
  std::string attribute;
  int category = 0;  // 1..3 once categorized
  /// Category 3 kitchen instruction whose position phrase occurs in the
  /// blocks manifest.
  bool cross_setting_seen = false;

  bool operator==(const Instruction&) const = default;
};

nlohmann::json to_json(const Instruction& i);
Instruction instruction_from_json(const nlohmann::json& j);

/// Renders the instruction text from its parsed form.
std::string instruction_text(TaskSetting setting, const PositionRef& position,
                             const std::string& attribute);
/// Throws ResolveError for text outside the setting's grammar.
Instruction parse_instruction(TaskSetting setting, const std::string& text);
/// Tries every setting's grammar.
Instruction parse_instruction(const std::string& text);

/// Concept tuples (position key, attribute) seen in training demonstrations.
struct SeenManifest {
  std::map<TaskSetting, std::set<std::pair<std::string, std::string>>> seen;

  /// Twelve tuples per setting; a plausible example, not the original lists.
  static SeenManifest defaults();
  std::set<std::string> positions(TaskSetting s) const;
  std::set<std::string> attributes(TaskSetting s) const;
};

nlohmann::json to_json(const SeenManifest& m);
/// Throws ConfigError; every setting present must be nonempty.
SeenManifest manifest_from_json(const nlohmann::json& j);

/// 1 when the tuple is seen, 2 when both concepts are seen separately, else 3.
void categorize(Instruction& instr, const SeenManifest& manifest);

/// Every grammatical instruction with a unique referent in the scene,
/// categorized against the manifest.
std::vector<Instruction> gen_instructions(const SceneSpec& scene,
                                          const SeenManifest& manifest);

/// Target object ids: the block, (vegetable, pot), or the drawer.
/// Throws ResolveError when there is no referent.
std::vector<int> resolve_instruction(const SceneSpec& scene, const Instruction& instr);

// ---------------------------------------------------------------------------
// Scripted executor

struct ExecutorNoise {
  double grasp_fail = 0.0;
  double act_fail = 0.0;
  double wrong_object = 0.0;
};

nlohmann::json to_json(const ExecutorNoise& n);
ExecutorNoise executor_noise_from_json(const nlohmann::json& j);

enum class ExecResult { Success, Partial, Fail };
std::string_view to_string(ExecResult r);
ExecResult exec_result_from_string(std::string_view s);

struct Outcome {
  /// Engaged object per role (block / vegetable, pot / drawer); -1 if none.
  std::vector<int> engaged;
  ExecResult result = ExecResult::Fail;
  std::string reason;  // "", "no_highlight", "grasp_fail", "act_fail"
  bool wrong_object_injected = false;

  bool operator==(const Outcome&) const = default;
};

nlohmann::json to_json(const Outcome& o);
Outcome outcome_from_json(const nlohmann::json& j);

/// Stand-in for the policy: per role, engages the object of that role with
/// the largest overlap with the highlighted masks (lowest id on ties), then
/// applies the noise draws in the order wrong_object, act_fail, grasp_fail.
Outcome scripted_executor(const SceneSpec& scene, const MaskSet& ground_truth,
                          const MaskSet& highlighted, const ExecutorNoise& noise,
                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bundles on disk: scene.json, frames/frame_%04d.png, masks.json,
// instructions.jsonl, instruction.txt

struct SceneBundle {
  World world;
  std::vector<Instruction> instructions;
  /// Instruction used for the demonstration, if any (instruction.txt).
  std::optional<std::string> instruction;
};

void write_bundle(const std::string& dir, const SceneBundle& bundle);
/// Reads scene.json (scene plus motion) and, when present, instructions.jsonl
/// and instruction.txt. Throws IoError.
SceneBundle read_bundle(const std::string& dir);

}  // namespace iavla
