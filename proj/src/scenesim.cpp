#include "iavla/scenesim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "iavla/errors.hpp"
#include "iavla/seeding.hpp"

namespace iavla {
namespace {

namespace fs = std::filesystem;

constexpr std::array<const char*, 3> kColors{"orange", "green", "blue"};
constexpr std::array<const char*, 4> kVegetables{"tomato", "cabbage", "carrots", "cucumber"};
constexpr std::array<const char*, 3> kRows{"top", "middle", "bottom"};
constexpr std::array<const char*, 6> kOrdinalWords{"", "first", "second", "third", "fourth",
                                                   "fifth"};

int max_ordinal(TaskSetting s) { return s == TaskSetting::Blocks ? 5 : 4; }

int iround(double v) { return static_cast<int>(std::lround(v)); }

Rgb object_color(const SceneObject& o) {
  if (o.kind == ObjectKind::Block) {
    if (o.name == "orange") return {230, 120, 30};
    if (o.name == "green") return {40, 160, 60};
    return {40, 80, 200};
  }
  if (o.kind == ObjectKind::Pot) return {150, 150, 160};
  if (o.kind == ObjectKind::Drawer) return {176, 124, 72};
  if (o.name == "tomato") return {210, 40, 40};
  if (o.name == "cabbage") return {130, 200, 100};
  if (o.name == "carrots") return {245, 140, 20};
  return {40, 110, 40};
}

// Deterministic per-pixel texture in [-amp, amp].
int texture(std::uint64_t seed, int x, int y, int amp) {
  const std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(x) << 32) ^
                                     static_cast<std::uint64_t>(y) * 0x9E3779B1ull);
  return static_cast<int>(h % static_cast<std::uint64_t>(2 * amp + 1)) - amp;
}

std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

Rgb shade(Rgb c, int d) { return {clamp8(c.r + d), clamp8(c.g + d), clamp8(c.b + d)}; }

bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

// Shape membership in box-local pixel coordinates.
bool shape_contains(const SceneObject& o, int lx, int ly) {
  const int w = o.box.width;
  const int h = o.box.height;
  switch (o.kind) {
    case ObjectKind::Block: {
      const bool corner = (lx == 0 || lx == w - 1) && (ly == 0 || ly == h - 1);
      return !corner;
    }
    case ObjectKind::Drawer:
      return true;
    case ObjectKind::Vegetable:
      return in_ellipse(lx + 0.5, ly + 0.5, w / 2.0, h / 2.0, w / 2.0, h / 2.0);
    case ObjectKind::Pot: {
      const double fx = (lx + 0.5) / w;
      const double fy = (ly + 0.5) / h;
      if (fy < 0.15) return false;
      if ((fx < 0.12 || fx >= 0.88)) return fy >= 0.25 && fy < 0.4;
      if (fy < 0.6) return true;
      return in_ellipse(fx, fy, 0.5, 0.6, 0.38, 0.4);
    }
  }
  return false;
}

Rect moved_box(const SceneObject& o, const EpisodeMotion* motion, int frame) {
  Rect b = o.box;
  if (motion != nullptr) {
    const Point d = motion->object_offset(o.id, frame);
    b.x += d.x;
    b.y += d.y;
  }
  return b;
}

BinaryMask raster_shape(const SceneObject& o, const Rect& box, int width, int height) {
  BinaryMask m(width, height);
  SceneObject at = o;
  at.box = box;
  for (int ly = 0; ly < box.height; ++ly) {
    const int y = box.y + ly;
    if (y < 0 || y >= height) continue;
    for (int lx = 0; lx < box.width; ++lx) {
      const int x = box.x + lx;
      if (x < 0 || x >= width) continue;
      if (shape_contains(at, lx, ly)) m.set(x, y);
    }
  }
  return m;
}

// Interior decoration: block studs, pot opening, drawer handle, vegetable gloss.
Rgb decorate(const SceneObject& o, int lx, int ly, Rgb base) {
  const double fx = (lx + 0.5) / o.box.width;
  const double fy = (ly + 0.5) / o.box.height;
  switch (o.kind) {
    case ObjectKind::Block:
      for (double cx : {0.3, 0.7})
        for (double cy : {0.3, 0.7})
          if (in_ellipse(fx, fy, cx, cy, 0.12, 0.12)) return shade(base, 35);
      return base;
    case ObjectKind::Pot:
      if (fy < 0.3 && fx >= 0.12 && fx < 0.88) return shade(base, -70);
      return base;
    case ObjectKind::Drawer:
      if (fx > 0.35 && fx < 0.65 && fy > 0.42 && fy < 0.58) return {60, 60, 60};
      if (lx == 0 || ly == 0 || lx == o.box.width - 1 || ly == o.box.height - 1) {
        return shade(base, -40);
      }
      return base;
    case ObjectKind::Vegetable:
      if (in_ellipse(fx, fy, 0.35, 0.3, 0.12, 0.1)) return shade(base, 45);
      return base;
  }
  return base;
}

std::vector<std::size_t> draw_order(const SceneSpec& scene, const EpisodeMotion* motion) {
  // Moving objects are drawn last so a lifted or carried object stays on top.
  std::vector<std::size_t> order;
  std::vector<std::size_t> moving;
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const int id = scene.objects[k].id;
    const bool moves = motion != nullptr &&
                       std::any_of(motion->moves.begin(), motion->moves.end(),
                                   [&](const ObjectMove& m) { return m.object_id == id; });
    (moves ? moving : order).push_back(k);
  }
  order.insert(order.end(), moving.begin(), moving.end());
  return order;
}

std::string ordinal_word(int n) {
  if (n < 1 || n > 5) throw ResolveError("ordinal out of range");
  return kOrdinalWords[static_cast<std::size_t>(n)];
}

int ordinal_from_word(const std::string& w) {
  for (int n = 2; n <= 5; ++n)
    if (w == kOrdinalWords[static_cast<std::size_t>(n)]) return n;
  throw ResolveError("unknown ordinal '" + w + "'");
}

std::string position_phrase(const PositionRef& p, const std::string& noun) {
  if (p.ordinal == 1) {
    return std::string(p.from == Direction::Left ? "leftmost " : "rightmost ") + noun;
  }
  return ordinal_word(p.ordinal) + " " + noun + " from the " +
         (p.from == Direction::Left ? "left" : "right");
}

template <std::size_t N>
bool one_of(const std::array<const char*, N>& names, const std::string& s) {
  return std::any_of(names.begin(), names.end(), [&](const char* n) { return s == n; });
}

std::vector<const SceneObject*> objects_of(const SceneSpec& scene, ObjectKind kind,
                                           const std::string* name = nullptr,
                                           int row = -1) {
  std::vector<const SceneObject*> out;
  for (const auto& o : scene.objects) {
    if (o.kind != kind) continue;
    if (name != nullptr && o.name != *name) continue;
    if (row >= 0 && o.row != row) continue;
    out.push_back(&o);
  }
  std::sort(out.begin(), out.end(),
            [](const SceneObject* a, const SceneObject* b) { return a->slot < b->slot; });
  return out;
}

const SceneObject* pick(const std::vector<const SceneObject*>& row, const PositionRef& p) {
  if (p.ordinal < 1 || p.ordinal > static_cast<int>(row.size())) return nullptr;
  const std::size_t idx = p.from == Direction::Left
                              ? static_cast<std::size_t>(p.ordinal - 1)
                              : row.size() - static_cast<std::size_t>(p.ordinal);
  return row[idx];
}

int row_index(const std::string& name) {
  for (std::size_t r = 0; r < kRows.size(); ++r)
    if (name == kRows[r]) return static_cast<int>(r);
  return -1;
}

std::vector<ObjectKind> roles(TaskSetting s) {
  switch (s) {
    case TaskSetting::Blocks:
      return {ObjectKind::Block};
    case TaskSetting::Kitchen:
      return {ObjectKind::Vegetable, ObjectKind::Pot};
    case TaskSetting::Drawers:
      return {ObjectKind::Drawer};
  }
  return {};
}

}  // namespace

std::string_view to_string(ObjectKind k) {
  switch (k) {
    case ObjectKind::Block:
      return "block";
    case ObjectKind::Pot:
      return "pot";
    case ObjectKind::Vegetable:
      return "vegetable";
    case ObjectKind::Drawer:
      return "drawer";
  }
  return "block";
}

namespace {

ObjectKind kind_from_string(const std::string& s) {
  for (auto k : {ObjectKind::Block, ObjectKind::Pot, ObjectKind::Vegetable, ObjectKind::Drawer})
    if (to_string(k) == s) return k;
  throw GenError("unknown object kind '" + s + "'");
}

}  // namespace

const SceneObject& SceneSpec::object(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return o;
  throw ResolveError("no object with id " + std::to_string(id));
}

nlohmann::json to_json(const SceneSpec& s) {
  auto objs = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"id", o.id},
                    {"kind", to_string(o.kind)},
                    {"name", o.name},
                    {"slot", o.slot},
                    {"row", o.row},
                    {"box", {o.box.x, o.box.y, o.box.width, o.box.height}}});
  }
  return {{"setting", to_string(s.setting)},
          {"width", s.width},
          {"height", s.height},
          {"seed", s.seed},
          {"objects", objs}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    s.setting = setting_from_string(j.at("setting").get<std::string>());
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    s.seed = j.value("seed", std::uint64_t{0});
    for (const auto& o : j.at("objects")) {
      SceneObject obj;
      obj.id = o.at("id").get<int>();
      obj.kind = kind_from_string(o.at("kind").get<std::string>());
      obj.name = o.at("name").get<std::string>();
      obj.slot = o.value("slot", 0);
      obj.row = o.value("row", 0);
      const auto b = o.at("box").get<std::vector<int>>();
      if (b.size() != 4) throw GenError("object box must have four entries");
      obj.box = Rect{b[0], b[1], b[2], b[3]};
      s.objects.push_back(obj);
    }
  } catch (const nlohmann::json::exception& e) {
    throw GenError(std::string("scene description: ") + e.what());
  } catch (const ConfigError& e) {
    throw GenError(e.what());
  }
  if (s.width <= 0 || s.height <= 0) throw GenError("scene size must be positive");
  return s;
}

Point EpisodeMotion::object_offset(int object_id, int frame) const {
  Point p;
  for (const auto& m : moves) {
    if (m.object_id != object_id) continue;
    double f = 1.0;
    if (m.end_frame > m.start_frame) {
      f = std::clamp(static_cast<double>(frame - m.start_frame) / (m.end_frame - m.start_frame),
                     0.0, 1.0);
    } else if (frame < m.start_frame) {
      f = 0.0;
    }
    p.x += iround(m.dx * f);
    p.y += iround(m.dy * f);
  }
  return p;
}

Point EpisodeMotion::gripper_at(int frame) const {
  const int reach = std::max(1, frames / 2);
  const double f = std::clamp(static_cast<double>(frame) / reach, 0.0, 1.0);
  return {gripper_start.x + iround((gripper_end.x - gripper_start.x) * f),
          gripper_start.y + iround((gripper_end.y - gripper_start.y) * f)};
}

nlohmann::json to_json(const EpisodeMotion& m) {
  auto moves = nlohmann::json::array();
  for (const auto& mv : m.moves) {
    moves.push_back({{"object_id", mv.object_id},
                     {"dx", mv.dx},
                     {"dy", mv.dy},
                     {"start_frame", mv.start_frame},
                     {"end_frame", mv.end_frame}});
  }
  return {{"frames", m.frames},
          {"gripper_start", {m.gripper_start.x, m.gripper_start.y}},
          {"gripper_end", {m.gripper_end.x, m.gripper_end.y}},
          {"moves", moves}};
}

EpisodeMotion motion_from_json(const nlohmann::json& j) {
  EpisodeMotion m;
  try {
    m.frames = j.value("frames", 1);
    if (j.contains("gripper_start")) {
      const auto p = j.at("gripper_start").get<std::vector<int>>();
      m.gripper_start = {p.at(0), p.at(1)};
    }
    if (j.contains("gripper_end")) {
      const auto p = j.at("gripper_end").get<std::vector<int>>();
      m.gripper_end = {p.at(0), p.at(1)};
    }
    for (const auto& mv : j.value("moves", nlohmann::json::array())) {
      m.moves.push_back({mv.at("object_id").get<int>(), mv.value("dx", 0), mv.value("dy", 0),
                         mv.value("start_frame", 0), mv.value("end_frame", 1)});
    }
  } catch (const std::exception& e) {
    throw GenError(std::string("motion description: ") + e.what());
  }
  if (m.frames < 1) throw GenError("motion needs at least one frame");
  return m;
}

EpisodeMotion default_motion(const SceneSpec& scene, const std::vector<int>& targets,
                             int frames) {
  EpisodeMotion m;
  m.frames = std::max(1, frames);
  const int s = std::min(scene.width, scene.height);
  m.gripper_start = {scene.width / 2, iround(0.08 * s)};
  m.gripper_end = m.gripper_start;
  if (targets.empty()) return m;
  const auto& first = scene.object(targets.front());
  m.gripper_end = {first.box.x + first.box.width / 2, first.box.y};
  if (m.frames < 3) return m;

  const int start = m.frames / 2;
  const int end = m.frames - 1;
  switch (scene.setting) {
    case TaskSetting::Blocks:
      m.moves.push_back({first.id, 0, -iround(0.08 * s), start, end});
      break;
    case TaskSetting::Kitchen:
      if (targets.size() >= 2) {
        const auto& pot = scene.object(targets[1]);
        const int dx = (pot.box.x + pot.box.width / 2) - (first.box.x + first.box.width / 2);
        const int dy = (pot.box.y + pot.box.height / 3) - (first.box.y + first.box.height / 2);
        m.moves.push_back({first.id, dx, dy, start, end});
      }
      break;
    case TaskSetting::Drawers:
      m.moves.push_back({first.id, 0, std::max(1, iround(0.008 * s)), start, end});
      break;
  }
  return m;
}

SceneSpec gen_scene(TaskSetting setting, const SceneConstraints& constraints,
                    std::uint64_t seed, int size) {
  if (size < 32) throw GenError("scene size must be at least 32 pixels");
  SceneSpec scene;
  scene.setting = setting;
  scene.width = size;
  scene.height = size;
  scene.seed = seed;
  Rng rng(derive_seed(seed, "layout"));
  const double S = size;

  switch (setting) {
    case TaskSetting::Blocks: {
      int required = 0;
      for (const auto& [name, n] : constraints.min_counts) {
        if (!one_of(kColors, name)) throw GenError("unknown block color '" + name + "'");
        required += std::max(0, n);
      }
      const int lo = std::max(2, required);
      if (lo > 6) throw GenError("constraints need more than six blocks");
      int n = constraints.count ? *constraints.count : rng.between(lo, 6);
      if (n < lo || n > 6) throw GenError("block count must lie in " + std::to_string(lo) + "..6");
      std::vector<std::string> colors;
      for (const auto& [name, k] : constraints.min_counts)
        for (int i = 0; i < k; ++i) colors.push_back(name);
      while (static_cast<int>(colors.size()) < n) colors.push_back(kColors[rng.below(3)]);
      for (int i = n - 1; i > 0; --i) std::swap(colors[i], colors[rng.below(i + 1)]);
      const int side = std::max(4, iround(0.1 * S));
      const int jitter = iround(0.03 * S);
      for (int i = 0; i < n; ++i) {
        const int cx = iround(S * (0.5 + (i - (n - 1) / 2.0) * 0.14));
        const int cy = iround(0.6 * S) + rng.between(-jitter, jitter);
        scene.objects.push_back(
            {i, ObjectKind::Block, colors[i], i, 0, Rect{cx - side / 2, cy - side / 2, side, side}});
      }
      break;
    }
    case TaskSetting::Kitchen: {
      int min_pots = 2;
      std::vector<std::string> veg;
      for (const auto& [name, n] : constraints.min_counts) {
        if (name == "pot") {
          min_pots = std::max(min_pots, n);
        } else if (one_of(kVegetables, name)) {
          if (n > 1) throw GenError("vegetables are unique within a scene");
          if (n == 1) veg.push_back(name);
        } else {
          throw GenError("unknown kitchen object '" + name + "'");
        }
      }
      if (min_pots > 4) throw GenError("at most four pots");
      const int pots = constraints.count ? *constraints.count : rng.between(min_pots, 4);
      if (pots < min_pots || pots > 4) throw GenError("pot count out of range");
      std::vector<std::string> pool;
      for (const char* v : kVegetables)
        if (std::find(veg.begin(), veg.end(), v) == veg.end()) pool.push_back(v);
      const int nveg = rng.between(std::max<int>(1, static_cast<int>(veg.size())), 4);
      while (static_cast<int>(veg.size()) < nveg) {
        const int k = rng.below(static_cast<int>(pool.size()));
        veg.push_back(pool[k]);
        pool.erase(pool.begin() + k);
      }
      for (int i = static_cast<int>(veg.size()) - 1; i > 0; --i) std::swap(veg[i], veg[rng.below(i + 1)]);

      const int pw = iround(0.17 * S), ph = iround(0.13 * S);
      for (int i = 0; i < pots; ++i) {
        const int cx = iround(S * (0.5 + (i - (pots - 1) / 2.0) * 0.22));
        const int cy = iround(0.65 * S);
        scene.objects.push_back(
            {i, ObjectKind::Pot, "pot", i, 0, Rect{cx - pw / 2, cy - ph / 2, pw, ph}});
      }
      const int nv = static_cast<int>(veg.size());
      for (int j = 0; j < nv; ++j) {
        double w = 0.07, h = 0.07;
        if (veg[j] == "cabbage") w = h = 0.09;
        if (veg[j] == "carrots") w = 0.11, h = 0.05;
        if (veg[j] == "cucumber") w = 0.12, h = 0.045;
        const int vw = std::max(3, iround(w * S)), vh = std::max(3, iround(h * S));
        const int cx = iround(S * (0.5 + (j - (nv - 1) / 2.0) * 0.2));
        const int cy = iround(0.3 * S) + rng.between(-iround(0.02 * S), iround(0.02 * S));
        scene.objects.push_back({pots + j, ObjectKind::Vegetable, veg[j], j, 0,
                                 Rect{cx - vw / 2, cy - vh / 2, vw, vh}});
      }
      break;
    }
    case TaskSetting::Drawers: {
      if (!constraints.min_counts.empty() || constraints.count) {
        if (constraints.count && *constraints.count != 12) throw GenError("the chest always has 12 drawers");
      }
      const double cw = 0.2 * S, ch = 0.7 * S / 3.0;
      const int m = std::max(1, iround(0.01 * S));
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) {
          const int x0 = iround(0.1 * S + c * cw), y0 = iround(0.15 * S + r * ch);
          const int x1 = iround(0.1 * S + (c + 1) * cw), y1 = iround(0.15 * S + (r + 1) * ch);
          scene.objects.push_back({r * 4 + c, ObjectKind::Drawer, "drawer", c, r,
                                   Rect{x0 + m, y0 + m, x1 - x0 - 2 * m, y1 - y0 - 2 * m}});
        }
      }
      break;
    }
  }
  return scene;
}

MaskSet ground_truth_masks(const SceneSpec& scene, const EpisodeMotion* motion, int frame) {
  const auto order = draw_order(scene, motion);
  std::vector<BinaryMask> masks(scene.objects.size(), BinaryMask(scene.width, scene.height));
  BinaryMask occupied(scene.width, scene.height);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& o = scene.objects[*it];
    auto shape = raster_shape(o, moved_box(o, motion, frame), scene.width, scene.height);
    shape.subtract_in_place(occupied);
    occupied |= shape;
    masks[*it] = std::move(shape);
  }
  return MaskSet(std::move(masks));
}

Frame render_frame(const SceneSpec& scene, const EpisodeMotion* motion, int frame) {
  const int W = scene.width, H = scene.height;
  RgbImage img(W, H);
  const std::uint64_t tex = derive_seed(scene.seed, "texture");
  const Rgb table = scene.setting == TaskSetting::Drawers ? Rgb{112, 78, 48} : Rgb{196, 178, 150};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) img.set(x, y, shade(table, texture(tex, x, y, 7)));

  for (const auto k : draw_order(scene, motion)) {
    const auto& o = scene.objects[k];
    SceneObject at = o;
    at.box = moved_box(o, motion, frame);
    const Rgb base = object_color(o);
    for (int ly = 0; ly < at.box.height; ++ly) {
      const int y = at.box.y + ly;
      if (y < 0 || y >= H) continue;
      for (int lx = 0; lx < at.box.width; ++lx) {
        const int x = at.box.x + lx;
        if (x < 0 || x >= W || !shape_contains(at, lx, ly)) continue;
        img.set(x, y, shade(decorate(at, lx, ly, base), texture(tex ^ 0x55, lx, ly, 5)));
      }
    }
  }

  if (motion != nullptr) {
    const Point g = motion->gripper_at(frame);
    const double S = std::min(W, H);
    const int fw = std::max(1, iround(0.025 * S)), fh = std::max(2, iround(0.07 * S));
    const int gap = iround(0.035 * S);
    const int bar_h = std::max(1, iround(0.025 * S));
    const Rgb metal{70, 70, 78};
    auto fill = [&](int x0, int y0, int w, int h) {
      for (int y = std::max(0, y0); y < std::min(H, y0 + h); ++y)
        for (int x = std::max(0, x0); x < std::min(W, x0 + w); ++x) img.set(x, y, metal);
    };
    fill(g.x - gap - fw, g.y - fh, fw, fh);
    fill(g.x + gap, g.y - fh, fw, fh);
    fill(g.x - gap - fw, g.y - fh - bar_h, 2 * (gap + fw), bar_h);
  }
  return Frame{std::move(img), ground_truth_masks(scene, motion, frame)};
}

// ---------------------------------------------------------------------------

std::string PositionRef::key() const {
  if (ordinal == 1) return from == Direction::Left ? "leftmost" : "rightmost";
  return ordinal_word(ordinal) + (from == Direction::Left ? "_from_left" : "_from_right");
}

PositionRef PositionRef::from_key(std::string_view key) {
  if (key == "leftmost") return {1, Direction::Left};
  if (key == "rightmost") return {1, Direction::Right};
  const std::string k(key);
  const auto cut = k.find("_from_");
  if (cut == std::string::npos) throw ResolveError("bad position key '" + k + "'");
  const std::string dir = k.substr(cut + 6);
  if (dir != "left" && dir != "right") throw ResolveError("bad position key '" + k + "'");
  return {ordinal_from_word(k.substr(0, cut)), dir == "left" ? Direction::Left : Direction::Right};
}

nlohmann::json to_json(const Instruction& i) {
  return {{"text", i.text},
          {"setting", to_string(i.setting)},
          {"position", i.position.key()},
          {"attribute", i.attribute},
          {"category", i.category},
          {"cross_setting_seen", i.cross_setting_seen}};
}

Instruction instruction_from_json(const nlohmann::json& j) {
  try {
    Instruction i;
    i.setting = setting_from_string(j.at("setting").get<std::string>());
    i.position = PositionRef::from_key(j.at("position").get<std::string>());
    i.attribute = j.at("attribute").get<std::string>();
    i.text = j.value("text", instruction_text(i.setting, i.position, i.attribute));
    i.category = j.value("category", 0);
    i.cross_setting_seen = j.value("cross_setting_seen", false);
    return i;
  } catch (const nlohmann::json::exception& e) {
    throw ResolveError(std::string("instruction record: ") + e.what());
  }
}

std::string instruction_text(TaskSetting setting, const PositionRef& position,
                             const std::string& attribute) {
  if (position.ordinal < 1 || position.ordinal > max_ordinal(setting)) {
    throw ResolveError("ordinal outside the grammar");
  }
  switch (setting) {
    case TaskSetting::Blocks:
      if (position.ordinal == 1) {
        return "lift the " + std::string(position.from == Direction::Left ? "leftmost " : "rightmost ") +
               attribute + " block";
      }
      return "lift the " + ordinal_word(position.ordinal) + " " + attribute + " block from the " +
             (position.from == Direction::Left ? "left" : "right");
    case TaskSetting::Kitchen:
      return "put the " + attribute + " in the " + position_phrase(position, "pot");
    case TaskSetting::Drawers:
      return "open the " + position_phrase(position, "drawer") + " on the " + attribute + " row";
  }
  return {};
}

Instruction parse_instruction(TaskSetting setting, const std::string& text) {
  static const std::regex blocks_end(R"(^lift the (leftmost|rightmost) (orange|green|blue) block$)");
  static const std::regex blocks_ord(
      R"(^lift the (second|third|fourth|fifth) (orange|green|blue) block from the (left|right)$)");
  static const std::regex kitchen_end(
      R"(^put the (tomato|cabbage|carrots|cucumber) in the (leftmost|rightmost) pot$)");
  static const std::regex kitchen_ord(
      R"(^put the (tomato|cabbage|carrots|cucumber) in the (second|third|fourth) pot from the (left|right)$)");
  static const std::regex drawers_end(
      R"(^open the (leftmost|rightmost) drawer on the (top|middle|bottom) row$)");
  static const std::regex drawers_ord(
      R"(^open the (second|third|fourth) drawer from the (left|right) on the (top|middle|bottom) row$)");

  Instruction out;
  out.setting = setting;
  out.text = text;
  std::smatch m;
  auto dir = [](const std::string& s) { return s == "left" ? Direction::Left : Direction::Right; };
  auto end = [](const std::string& s) {
    return PositionRef{1, s == "leftmost" ? Direction::Left : Direction::Right};
  };
  switch (setting) {
    case TaskSetting::Blocks:
      if (std::regex_match(text, m, blocks_end)) {
        out.position = end(m[1]);
        out.attribute = m[2];
        return out;
      }
      if (std::regex_match(text, m, blocks_ord)) {
        out.position = {ordinal_from_word(m[1]), dir(m[3])};
        out.attribute = m[2];
        return out;
      }
      break;
    case TaskSetting::Kitchen:
      if (std::regex_match(text, m, kitchen_end)) {
        out.attribute = m[1];
        out.position = end(m[2]);
        return out;
      }
      if (std::regex_match(text, m, kitchen_ord)) {
        out.attribute = m[1];
        out.position = {ordinal_from_word(m[2]), dir(m[3])};
        return out;
      }
      break;
    case TaskSetting::Drawers:
      if (std::regex_match(text, m, drawers_end)) {
        out.position = end(m[1]);
        out.attribute = m[2];
        return out;
      }
      if (std::regex_match(text, m, drawers_ord)) {
        out.position = {ordinal_from_word(m[1]), dir(m[2])};
        out.attribute = m[3];
        return out;
      }
      break;
  }
  throw ResolveError("not a " + std::string(to_string(setting)) + " instruction: '" + text + "'");
}

Instruction parse_instruction(const std::string& text) {
  for (auto s : {TaskSetting::Blocks, TaskSetting::Kitchen, TaskSetting::Drawers}) {
    try {
      return parse_instruction(s, text);
    } catch (const ResolveError&) {
    }
  }
  throw ResolveError("instruction matches no grammar: '" + text + "'");
}

SeenManifest SeenManifest::defaults() {
  SeenManifest m;
  m.seen[TaskSetting::Blocks] = {
      {"leftmost", "orange"},          {"leftmost", "green"},
      {"rightmost", "green"},          {"rightmost", "blue"},
      {"second_from_left", "orange"},  {"second_from_left", "blue"},
      {"second_from_right", "orange"}, {"second_from_right", "green"},
      {"third_from_left", "blue"},     {"third_from_left", "green"},
      {"third_from_right", "orange"},  {"third_from_right", "blue"},
  };
  m.seen[TaskSetting::Kitchen] = {
      {"leftmost", "tomato"},           {"leftmost", "cabbage"},
      {"leftmost", "carrots"},          {"rightmost", "carrots"},
      {"rightmost", "cucumber"},        {"rightmost", "tomato"},
      {"second_from_left", "tomato"},   {"second_from_left", "carrots"},
      {"second_from_left", "cucumber"}, {"second_from_right", "cabbage"},
      {"second_from_right", "cucumber"}, {"second_from_right", "tomato"},
  };
  m.seen[TaskSetting::Drawers] = {
      {"leftmost", "top"},          {"second_from_left", "top"},
      {"third_from_left", "top"},   {"rightmost", "top"},
      {"leftmost", "middle"},       {"third_from_right", "middle"},
      {"second_from_right", "middle"}, {"rightmost", "middle"},
      {"leftmost", "bottom"},       {"second_from_left", "bottom"},
      {"second_from_right", "bottom"}, {"rightmost", "bottom"},
  };
  return m;
}

std::set<std::string> SeenManifest::positions(TaskSetting s) const {
  std::set<std::string> out;
  if (auto it = seen.find(s); it != seen.end())
    for (const auto& t : it->second) out.insert(t.first);
  return out;
}

std::set<std::string> SeenManifest::attributes(TaskSetting s) const {
  std::set<std::string> out;
  if (auto it = seen.find(s); it != seen.end())
    for (const auto& t : it->second) out.insert(t.second);
  return out;
}

nlohmann::json to_json(const SeenManifest& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [setting, tuples] : m.seen) {
    auto arr = nlohmann::json::array();
    for (const auto& [pos, attr] : tuples) arr.push_back({pos, attr});
    j[std::string(to_string(setting))] = arr;
  }
  return j;
}

SeenManifest manifest_from_json(const nlohmann::json& j) {
  SeenManifest m;
  try {
    for (const auto& [name, arr] : j.items()) {
      const auto setting = setting_from_string(name);
      auto& set = m.seen[setting];
      for (const auto& t : arr) {
        const auto pos = t.at(0).get<std::string>();
        (void)PositionRef::from_key(pos);
        set.insert({pos, t.at(1).get<std::string>()});
      }
      if (set.empty()) throw ConfigError("manifest for " + name + " is empty");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  } catch (const ResolveError& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

void categorize(Instruction& instr, const SeenManifest& manifest) {
  const std::string pos = instr.position.key();
  instr.cross_setting_seen = false;
  auto it = manifest.seen.find(instr.setting);
  if (it != manifest.seen.end() && it->second.count({pos, instr.attribute})) {
    instr.category = 1;
    return;
  }
  if (manifest.positions(instr.setting).count(pos) &&
      manifest.attributes(instr.setting).count(instr.attribute)) {
    instr.category = 2;
    return;
  }
  instr.category = 3;
  if (instr.setting == TaskSetting::Kitchen) {
    instr.cross_setting_seen = manifest.positions(TaskSetting::Blocks).count(pos) > 0;
  }
}

std::vector<Instruction> gen_instructions(const SceneSpec& scene, const SeenManifest& manifest) {
  std::vector<Instruction> out;
  auto emit = [&](const PositionRef& p, const std::string& attr) {
    Instruction i;
    i.setting = scene.setting;
    i.position = p;
    i.attribute = attr;
    i.text = instruction_text(scene.setting, p, attr);
    categorize(i, manifest);
    out.push_back(std::move(i));
  };
  auto positions = [&](int available) {
    std::vector<PositionRef> ps;
    const int top = std::min(available, max_ordinal(scene.setting));
    for (auto d : {Direction::Left, Direction::Right})
      for (int k = 1; k <= top; ++k) ps.push_back({k, d});
    return ps;
  };
  switch (scene.setting) {
    case TaskSetting::Blocks:
      for (const char* c : kColors) {
        const std::string color = c;
        const int n = static_cast<int>(objects_of(scene, ObjectKind::Block, &color).size());
        for (const auto& p : positions(n)) emit(p, color);
      }
      break;
    case TaskSetting::Kitchen: {
      const int pots = static_cast<int>(objects_of(scene, ObjectKind::Pot).size());
      for (const char* v : kVegetables) {
        const std::string veg = v;
        if (objects_of(scene, ObjectKind::Vegetable, &veg).size() != 1) continue;
        for (const auto& p : positions(pots)) emit(p, veg);
      }
      break;
    }
    case TaskSetting::Drawers:
      for (std::size_t r = 0; r < kRows.size(); ++r) {
        const int n = static_cast<int>(objects_of(scene, ObjectKind::Drawer, nullptr, static_cast<int>(r)).size());
        for (const auto& p : positions(n)) emit(p, kRows[r]);
      }
      break;
  }
  return out;
}

std::vector<int> resolve_instruction(const SceneSpec& scene, const Instruction& instr) {
  if (instr.setting != scene.setting) throw ResolveError("instruction is for another setting");
  const SceneObject* hit = nullptr;
  switch (scene.setting) {
    case TaskSetting::Blocks:
      hit = pick(objects_of(scene, ObjectKind::Block, &instr.attribute), instr.position);
      if (hit == nullptr) throw ResolveError("no referent for '" + instr.text + "'");
      return {hit->id};
    case TaskSetting::Kitchen: {
      const auto veg = objects_of(scene, ObjectKind::Vegetable, &instr.attribute);
      if (veg.size() != 1) throw ResolveError("vegetable '" + instr.attribute + "' is not unique");
      hit = pick(objects_of(scene, ObjectKind::Pot), instr.position);
      if (hit == nullptr) throw ResolveError("no referent for '" + instr.text + "'");
      return {veg.front()->id, hit->id};
    }
    case TaskSetting::Drawers: {
      const int r = row_index(instr.attribute);
      if (r < 0) throw ResolveError("unknown row '" + instr.attribute + "'");
      hit = pick(objects_of(scene, ObjectKind::Drawer, nullptr, r), instr.position);
      if (hit == nullptr) throw ResolveError("no referent for '" + instr.text + "'");
      return {hit->id};
    }
  }
  throw ResolveError("unresolvable instruction");
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const ExecutorNoise& n) {
  return {{"grasp_fail", n.grasp_fail}, {"act_fail", n.act_fail}, {"wrong_object", n.wrong_object}};
}

ExecutorNoise executor_noise_from_json(const nlohmann::json& j) {
  ExecutorNoise n;
  try {
    n.grasp_fail = j.value("grasp_fail", 0.0);
    n.act_fail = j.value("act_fail", 0.0);
    n.wrong_object = j.value("wrong_object", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("executor noise: ") + e.what());
  }
  for (double p : {n.grasp_fail, n.act_fail, n.wrong_object})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("executor probabilities must lie in [0, 1]");
  return n;
}

std::string_view to_string(ExecResult r) {
  switch (r) {
    case ExecResult::Success:
      return "success";
    case ExecResult::Partial:
      return "partial";
    case ExecResult::Fail:
      return "fail";
  }
  return "fail";
}

ExecResult exec_result_from_string(std::string_view s) {
  if (s == "success") return ExecResult::Success;
  if (s == "partial") return ExecResult::Partial;
  if (s == "fail") return ExecResult::Fail;
  throw ConfigError("unknown executor result '" + std::string(s) + "'");
}

nlohmann::json to_json(const Outcome& o) {
  return {{"engaged", o.engaged},
          {"result", to_string(o.result)},
          {"reason", o.reason},
          {"wrong_object_injected", o.wrong_object_injected}};
}

Outcome outcome_from_json(const nlohmann::json& j) {
  Outcome o;
  o.engaged = j.at("engaged").get<std::vector<int>>();
  o.result = exec_result_from_string(j.at("result").get<std::string>());
  o.reason = j.value("reason", "");
  o.wrong_object_injected = j.value("wrong_object_injected", false);
  return o;
}

Outcome scripted_executor(const SceneSpec& scene, const MaskSet& ground_truth,
                          const MaskSet& highlighted, const ExecutorNoise& noise,
                          std::uint64_t seed) {
  Rng rng(seed);
  // Every draw is taken up front so outcomes do not shift the stream.
  const double r_wrong = rng.real();
  const double r_act = rng.real();
  const double r_grasp = rng.real();
  const std::uint64_t r_pick = rng.next();

  Outcome out;
  const auto role_kinds = roles(scene.setting);
  std::optional<BinaryMask> lit;
  if (!highlighted.empty()) lit = highlighted.union_all();
  for (const auto kind : role_kinds) {
    int best = -1;
    std::size_t best_overlap = 0;
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
      if (scene.objects[k].kind != kind || !lit) continue;
      const std::size_t ov = intersection_area(ground_truth[k], *lit);
      if (ov > best_overlap) {
        best_overlap = ov;
        best = scene.objects[k].id;
      }
    }
    out.engaged.push_back(best);
  }
  if (std::find(out.engaged.begin(), out.engaged.end(), -1) != out.engaged.end()) {
    out.result = ExecResult::Fail;
    out.reason = "no_highlight";
    return out;
  }

  if (r_wrong < noise.wrong_object) {
    const std::size_t role = r_pick % role_kinds.size();
    std::vector<int> others;
    for (const auto& o : scene.objects)
      if (o.kind == role_kinds[role] && o.id != out.engaged[role]) others.push_back(o.id);
    if (!others.empty()) {
      out.engaged[role] = others[(r_pick / role_kinds.size()) % others.size()];
      out.wrong_object_injected = true;
    }
  }
  if (r_act < noise.act_fail) {
    out.result = ExecResult::Fail;
    out.reason = "act_fail";
  } else if (r_grasp < noise.grasp_fail) {
    out.result = ExecResult::Partial;
    out.reason = "grasp_fail";
  } else {
    out.result = ExecResult::Success;
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_bundle(const std::string& dir, const SceneBundle& bundle) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const auto& w = bundle.world;
  const nlohmann::json scene = {{"scene", to_json(w.scene)}, {"motion", to_json(w.motion)}};
  write_file((fs::path(dir) / "scene.json").string(), scene.dump(2) + "\n");
  fs::create_directories(fs::path(dir) / "frames", ec);
  if (ec) throw IoError("cannot create frames directory in " + dir + ": " + ec.message());
  MaskSet masks0;
  for (int t = 0; t < w.motion.frames; ++t) {
    auto frame = render_frame(w.scene, &w.motion, t);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.png", t);
    write_file((fs::path(dir) / "frames" / name).string(), encode_png(frame.image));
    if (t == 0) masks0 = std::move(frame.masks);
  }
  write_file((fs::path(dir) / "masks.json").string(), masks_to_json(masks0).dump() + "\n");
  std::string lines;
  for (const auto& i : bundle.instructions) lines += to_json(i).dump() + "\n";
  write_file((fs::path(dir) / "instructions.jsonl").string(), lines);
  if (bundle.instruction) {
    write_file((fs::path(dir) / "instruction.txt").string(), *bundle.instruction + "\n");
  }
}

SceneBundle read_bundle(const std::string& dir) {
  SceneBundle b;
  const auto scene_path = fs::path(dir) / "scene.json";
  const auto bytes = read_file(scene_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(scene_path.string() + ": " + e.what());
  }
  if (j.contains("scene")) {
    b.world.scene = scene_from_json(j.at("scene"));
    if (j.contains("motion")) b.world.motion = motion_from_json(j.at("motion"));
  } else {
    b.world.scene = scene_from_json(j);
  }
  const auto instr_path = fs::path(dir) / "instructions.jsonl";
  if (fs::exists(instr_path)) {
    std::ifstream in(instr_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      b.instructions.push_back(instruction_from_json(nlohmann::json::parse(line)));
    }
  }
  const auto text_path = fs::path(dir) / "instruction.txt";
  if (fs::exists(text_path)) {
    const auto raw = read_file(text_path.string());
    std::string s(raw.begin(), raw.end());
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
    b.instruction = s;
  }
  return b;
}

}  // namespace iavla
