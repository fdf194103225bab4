#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "iavla/errors.hpp"
#include "iavla/scenesim.hpp"

using namespace iavla;

namespace {

// Brute-force referent enumerator: describe every object by counting its
// neighbours directly, then keep those matching the instruction.
std::vector<int> enumerate_referents(const SceneSpec& scene, const Instruction& instr) {
  auto rank = [&](const SceneObject& o, Direction d, auto&& same_group) {
    int r = 1;
    for (const auto& other : scene.objects) {
      if (&other == &o || other.kind != o.kind || !same_group(other)) continue;
      if (d == Direction::Left ? other.slot < o.slot : other.slot > o.slot) ++r;
    }
    return r;
  };
  std::vector<int> hits;
  std::vector<int> vegetables;
  for (const auto& o : scene.objects) {
    if (o.kind == ObjectKind::Vegetable && o.name == instr.attribute) vegetables.push_back(o.id);
  }
  for (const auto& o : scene.objects) {
    bool match = false;
    if (scene.setting == TaskSetting::Blocks && o.kind == ObjectKind::Block && o.name == instr.attribute) {
      match = rank(o, instr.position.from, [&](const SceneObject& x) { return x.name == o.name; }) ==
              instr.position.ordinal;
    }
    if (scene.setting == TaskSetting::Kitchen && o.kind == ObjectKind::Pot) {
      match = rank(o, instr.position.from, [](const SceneObject&) { return true; }) == instr.position.ordinal;
    }
    if (scene.setting == TaskSetting::Drawers && o.kind == ObjectKind::Drawer) {
      const char* rows[] = {"top", "middle", "bottom"};
      match = rows[o.row] == instr.attribute &&
              rank(o, instr.position.from, [&](const SceneObject& x) { return x.row == o.row; }) ==
                  instr.position.ordinal;
    }
    if (match) hits.push_back(o.id);
  }
  if (scene.setting == TaskSetting::Kitchen) {
    if (vegetables.size() != 1 || hits.size() != 1) return {};
    return {vegetables[0], hits[0]};
  }
  return hits.size() == 1 ? hits : std::vector<int>{};
}

Instruction random_instruction(std::mt19937_64& rng, TaskSetting s) {
  const std::vector<std::string> colors{"orange", "green", "blue"};
  const std::vector<std::string> veg{"tomato", "cabbage", "carrots", "cucumber"};
  const std::vector<std::string> rows{"top", "middle", "bottom"};
  Instruction i;
  i.setting = s;
  const int max_ord = s == TaskSetting::Blocks ? 5 : 4;
  i.position = {1 + static_cast<int>(rng() % max_ord), rng() % 2 ? Direction::Left : Direction::Right};
  const auto& vocab = s == TaskSetting::Blocks ? colors : s == TaskSetting::Kitchen ? veg : rows;
  i.attribute = vocab[rng() % vocab.size()];
  i.text = instruction_text(s, i.position, i.attribute);
  return i;
}

}  // namespace

TEST(GenScene, Deterministic) {
  for (auto s : {TaskSetting::Blocks, TaskSetting::Kitchen, TaskSetting::Drawers}) {
    const auto a = gen_scene(s, {}, 99);
    const auto b = gen_scene(s, {}, 99);
    EXPECT_EQ(a, b);
    const auto fa = render_frame(a), fb = render_frame(b);
    EXPECT_EQ(fa.image, fb.image);
    EXPECT_EQ(fa.masks, fb.masks);
  }
}

TEST(GenScene, SixBlocksSixDisjointMasks) {
  SceneConstraints c;
  c.count = 6;
  const auto scene = gen_scene(TaskSetting::Blocks, c, 5);
  const auto masks = ground_truth_masks(scene);
  ASSERT_EQ(masks.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_GT(masks[i].area(), 600u);
    for (std::size_t j = i + 1; j < 6; ++j) EXPECT_EQ(intersection_area(masks[i], masks[j]), 0u);
  }
}

TEST(GenScene, DrawersGrid) {
  const auto scene = gen_scene(TaskSetting::Drawers, {}, 1);
  ASSERT_EQ(scene.objects.size(), 12u);
  for (const auto& o : scene.objects) {
    EXPECT_EQ(o.id, o.row * 4 + o.slot);
    EXPECT_LT(o.row, 3);
    EXPECT_LT(o.slot, 4);
  }
  const auto masks = ground_truth_masks(scene);
  EXPECT_EQ(masks.size(), 12u);
  for (const auto& m : masks) EXPECT_GT(m.area(), 400u);
}

TEST(GenScene, ConstraintsHonouredOrRejected) {
  SceneConstraints c;
  c.min_counts = {{"blue", 5}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = gen_scene(TaskSetting::Blocks, c, seed);
    int blue = 0;
    for (const auto& o : scene.objects) blue += o.name == "blue";
    EXPECT_GE(blue, 5);
  }
  c.min_counts = {{"blue", 5}, {"green", 2}};
  EXPECT_THROW(gen_scene(TaskSetting::Blocks, c, 1), GenError);
  c.min_counts = {{"purple", 1}};
  EXPECT_THROW(gen_scene(TaskSetting::Blocks, c, 1), GenError);
  SceneConstraints k;
  k.min_counts = {{"pot", 5}};
  EXPECT_THROW(gen_scene(TaskSetting::Kitchen, k, 1), GenError);
}

TEST(GenScene, GroundTruthDisjointAndInsideAcrossMotion) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 60; ++t) {
    const auto setting = static_cast<TaskSetting>(t % 3);
    const auto scene = gen_scene(setting, {}, rng(), 96 + static_cast<int>(rng() % 400));
    const auto instrs = gen_instructions(scene, SeenManifest::defaults());
    ASSERT_FALSE(instrs.empty());
    const auto targets = resolve_instruction(scene, instrs[rng() % instrs.size()]);
    const auto motion = default_motion(scene, targets, 8);
    for (int f = 0; f < motion.frames; ++f) {
      const auto masks = ground_truth_masks(scene, &motion, f);
      ASSERT_EQ(masks.size(), scene.objects.size());
      BinaryMask seen(scene.width, scene.height);
      for (const auto& m : masks) {
        EXPECT_EQ(intersection_area(seen, m), 0u);
        seen |= m;
      }
    }
  }
}

TEST(Motion, TranslatedObjectTranslatesMask) {
  const auto scene = gen_scene(TaskSetting::Blocks, {}, 4);
  EpisodeMotion m;
  m.frames = 3;
  m.moves.push_back({0, 10, 0, 0, 1});
  const auto f0 = ground_truth_masks(scene, &m, 0);
  const auto f1 = ground_truth_masks(scene, &m, 1);
  EXPECT_EQ(f1[0], translate(f0[0], 10, 0));
  EXPECT_EQ(f1[1], f0[1]);
}

TEST(Instructions, TextRoundTripsThroughParser) {
  const auto manifest = SeenManifest::defaults();
  for (auto s : {TaskSetting::Blocks, TaskSetting::Kitchen, TaskSetting::Drawers}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      for (const auto& i : gen_instructions(gen_scene(s, {}, seed), manifest)) {
        const auto p = parse_instruction(s, i.text);
        EXPECT_EQ(p.position, i.position);
        EXPECT_EQ(p.attribute, i.attribute);
        EXPECT_EQ(instruction_text(s, p.position, p.attribute), i.text);
        EXPECT_EQ(parse_instruction(i.text).setting, s);
      }
    }
  }
  EXPECT_EQ(instruction_text(TaskSetting::Blocks, {2, Direction::Right}, "blue"),
            "lift the second blue block from the right");
  EXPECT_EQ(instruction_text(TaskSetting::Kitchen, {3, Direction::Right}, "tomato"),
            "put the tomato in the third pot from the right");
  EXPECT_EQ(instruction_text(TaskSetting::Drawers, {3, Direction::Left}, "bottom"),
            "open the third drawer from the left on the bottom row");
  EXPECT_THROW(parse_instruction(TaskSetting::Blocks, "lift the sixth blue block from the left"), ResolveError);
  EXPECT_THROW(parse_instruction("dance"), ResolveError);
}

TEST(Resolve, PaperExamples) {
  SceneSpec row;
  row.setting = TaskSetting::Blocks;
  const char* colors[] = {"orange", "blue", "green", "blue", "orange"};
  for (int i = 0; i < 5; ++i) row.objects.push_back({i, ObjectKind::Block, colors[i], i, 0, Rect{i * 60, 0, 50, 50}});
  EXPECT_EQ(resolve_instruction(row, parse_instruction("lift the second blue block from the right")),
            std::vector<int>{1});

  SceneSpec single;
  single.objects.push_back({0, ObjectKind::Block, "orange", 0, 0, Rect{0, 0, 50, 50}});
  EXPECT_EQ(resolve_instruction(single, parse_instruction("lift the leftmost orange block")), std::vector<int>{0});

  SceneSpec kitchen;
  kitchen.setting = TaskSetting::Kitchen;
  for (int i = 0; i < 4; ++i) kitchen.objects.push_back({i, ObjectKind::Pot, "pot", i, 0, Rect{i * 100, 200, 80, 60}});
  kitchen.objects.push_back({4, ObjectKind::Vegetable, "tomato", 0, 0, Rect{0, 0, 30, 30}});
  EXPECT_EQ(resolve_instruction(kitchen, parse_instruction("put the tomato in the third pot from the right")),
            (std::vector<int>{4, 1}));
  EXPECT_THROW(resolve_instruction(kitchen, parse_instruction("put the cabbage in the leftmost pot")), ResolveError);
}

TEST(Resolve, AgreesWithEnumeratorOnTenThousandPairs) {
  std::mt19937_64 rng(2024);
  int resolved = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto setting = static_cast<TaskSetting>(rng() % 3);
    const auto scene = gen_scene(setting, {}, rng(), 64);
    const auto instr = random_instruction(rng, setting);
    const auto expect = enumerate_referents(scene, instr);
    if (expect.empty()) {
      EXPECT_THROW(resolve_instruction(scene, instr), ResolveError) << instr.text;
    } else {
      ASSERT_EQ(resolve_instruction(scene, instr), expect) << instr.text;
      ++resolved;
    }
  }
  EXPECT_GT(resolved, 3000);
}

TEST(Instructions, EveryGeneratedInstructionHasUniqueReferent) {
  const auto manifest = SeenManifest::defaults();
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    const auto scene = gen_scene(static_cast<TaskSetting>(t % 3), {}, rng(), 64);
    for (const auto& i : gen_instructions(scene, manifest)) EXPECT_FALSE(enumerate_referents(scene, i).empty());
  }
}

TEST(Categories, Definitions) {
  const auto m = SeenManifest::defaults();
  auto cat = [&](TaskSetting s, const std::string& text) {
    auto i = parse_instruction(s, text);
    categorize(i, m);
    return i;
  };
  EXPECT_EQ(cat(TaskSetting::Blocks, "lift the second blue block from the left").category, 1);
  // both concepts seen, pair unseen
  EXPECT_EQ(cat(TaskSetting::Blocks, "lift the leftmost blue block").category, 2);
  EXPECT_EQ(cat(TaskSetting::Blocks, "lift the fifth blue block from the left").category, 3);
  const auto k3 = cat(TaskSetting::Kitchen, "put the tomato in the third pot from the left");
  EXPECT_EQ(k3.category, 3);
  EXPECT_TRUE(k3.cross_setting_seen);
  const auto k4 = cat(TaskSetting::Kitchen, "put the tomato in the fourth pot from the left");
  EXPECT_EQ(k4.category, 3);
  EXPECT_FALSE(k4.cross_setting_seen);
  EXPECT_EQ(cat(TaskSetting::Drawers, "open the third drawer from the left on the top row").category, 1);
  EXPECT_EQ(cat(TaskSetting::Drawers, "open the third drawer from the left on the middle row").category, 2);
  EXPECT_EQ(cat(TaskSetting::Drawers, "open the fourth drawer from the right on the middle row").category, 3);
}

TEST(Categories, ShrinkingManifestNeverMovesThreeToOne) {
  const auto full = SeenManifest::defaults();
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    SeenManifest small = full;
    for (auto& [s, tuples] : small.seen) {
      std::vector<std::pair<std::string, std::string>> v(tuples.begin(), tuples.end());
      tuples.clear();
      for (auto& tup : v)
        if (rng() % 2) tuples.insert(tup);
      if (tuples.empty()) tuples.insert(v.front());
    }
    const auto scene = gen_scene(static_cast<TaskSetting>(t % 3), {}, rng());
    for (auto i : gen_instructions(scene, full)) {
      const int before = i.category;
      categorize(i, small);
      EXPECT_GE(i.category, before);
      EXPECT_TRUE(i.category >= 1 && i.category <= 3);
    }
  }
}

TEST(Manifest, JsonRoundTrip) {
  const auto m = SeenManifest::defaults();
  const auto back = manifest_from_json(to_json(m));
  EXPECT_EQ(back.seen, m.seen);
  EXPECT_THROW(manifest_from_json({{"blocks", nlohmann::json::array()}}), ConfigError);
}

TEST(Executor, ZeroNoiseSucceedsOnTarget) {
  const auto scene = gen_scene(TaskSetting::Blocks, {}, 3);
  const auto gt = ground_truth_masks(scene);
  MaskSet lit;
  lit.push_back(gt[1]);
  const auto o = scripted_executor(scene, gt, lit, {}, 1);
  EXPECT_EQ(o.result, ExecResult::Success);
  EXPECT_EQ(o.engaged, std::vector<int>{1});
}

TEST(Executor, GraspFailIsPartialOnTarget) {
  const auto scene = gen_scene(TaskSetting::Blocks, {}, 3);
  const auto gt = ground_truth_masks(scene);
  MaskSet lit;
  lit.push_back(gt[0]);
  ExecutorNoise n;
  n.grasp_fail = 1.0;
  const auto o = scripted_executor(scene, gt, lit, n, 1);
  EXPECT_EQ(o.result, ExecResult::Partial);
  EXPECT_EQ(o.engaged, std::vector<int>{0});
}

TEST(Executor, WrongObjectEngagesAnother) {
  const auto scene = gen_scene(TaskSetting::Kitchen, {}, 3);
  const auto gt = ground_truth_masks(scene);
  MaskSet lit;
  lit.push_back(gt[0]);
  lit.push_back(gt.size() > 0 ? gt[gt.size() - 1] : gt[0]);
  ExecutorNoise n;
  n.wrong_object = 1.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto clean = scripted_executor(scene, gt, lit, {}, seed);
    const auto o = scripted_executor(scene, gt, lit, n, seed);
    EXPECT_NE(o.engaged, clean.engaged);
    EXPECT_EQ(o, scripted_executor(scene, gt, lit, n, seed));
  }
}

TEST(Executor, NothingHighlighted) {
  const auto scene = gen_scene(TaskSetting::Drawers, {}, 3);
  const auto o = scripted_executor(scene, ground_truth_masks(scene), {}, {}, 1);
  EXPECT_EQ(o.result, ExecResult::Fail);
  EXPECT_EQ(o.reason, "no_highlight");
}

TEST(Bundle, WriteReadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "iavla_bundle_test";
  std::filesystem::remove_all(dir);
  SceneBundle b;
  b.world.scene = gen_scene(TaskSetting::Kitchen, {}, 12, 128);
  b.instructions = gen_instructions(b.world.scene, SeenManifest::defaults());
  b.instruction = b.instructions.front().text;
  b.world.motion = default_motion(b.world.scene, resolve_instruction(b.world.scene, b.instructions.front()), 4);
  write_bundle(dir.string(), b);
  EXPECT_TRUE(std::filesystem::exists(dir / "frames" / "frame_0003.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "masks.json"));
  const auto back = read_bundle(dir.string());
  EXPECT_EQ(back.world.scene, b.world.scene);
  EXPECT_EQ(back.world.motion, b.world.motion);
  EXPECT_EQ(back.instructions, b.instructions);
  EXPECT_EQ(back.instruction, b.instruction);
  const auto png = read_file((dir / "frames" / "frame_0002.png").string());
  EXPECT_EQ(decode_png(png), render_frame(b.world.scene, &b.world.motion, 2).image);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(read_bundle(dir.string()), IoError);
}
