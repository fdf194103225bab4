#include "iavla/backends.hpp"

#include <algorithm>
#include <cmath>

#include "iavla/errors.hpp"
#include "iavla/seeding.hpp"

namespace iavla {
namespace {

constexpr int kMaxSide = 4096;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void punch_hole(BinaryMask& m, const Rect& box) {
  const int hw = std::max(1, box.width * 3 / 10), hh = std::max(1, box.height * 3 / 10);
  const int x0 = box.x + (box.width - hw) / 2, y0 = box.y + (box.height - hh) / 2;
  for (int y = y0; y < y0 + hh; ++y)
    for (int x = x0; x < x0 + hw; ++x) m.set(x, y, false);
}

// Clears a two-pixel column band through the middle of the box.
void split_vertically(BinaryMask& m, const Rect& box) {
  const int cx = box.x + box.width / 2;
  for (int y = box.y; y < box.bottom(); ++y) {
    m.set(cx - 1, y, false);
    m.set(cx, y, false);
  }
}

// Left part of the mask covering `fraction` of its box width. Anchoring every
// fragment on the left keeps their union well below the parent's area.
BinaryMask left_fragment(const BinaryMask& m, const Rect& box, double fraction) {
  const int w = std::max(1, static_cast<int>(box.width * fraction));
  return m & BinaryMask::from_rect(m.width(), m.height(), Rect{box.x, box.y, w, box.height});
}

}  // namespace

void SegmentRequest::validate() const {
  if (granularity_levels.empty()) throw InputError("segment request needs at least one granularity level");
  for (int l : granularity_levels)
    if (l < 1 || l > 6) throw InputError("granularity level " + std::to_string(l) + " outside 1..6");
  if (image.empty()) throw InputError("segment request without an image");
  if (image.width() > kMaxSide || image.height() > kMaxSide)
    throw InputError("image exceeds 4096x4096");
}

TrackSession track_init(Backend& backend, const RgbImage& image, const MaskSet& masks) {
  if (masks.empty()) throw TrackInitError("track_init needs at least one mask");
  TrackSession s;
  s.session_id = backend.track_init(image, masks);
  s.reference_masks = masks;
  return s;
}

MaskSet track_step(Backend& backend, TrackSession& session, const RgbImage& next_image) {
  const auto t0 = std::chrono::steady_clock::now();
  auto reply = backend.track_step(session.session_id, next_image);
  session.latencies_ms.push_back(elapsed_ms(t0));
  ++session.frame_counter;
  return std::move(reply.masks);
}

void CorruptionConfig::validate() const {
  for (double p : {split_probability, hole_probability, overseg_probability, drop_probability})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("corruption probabilities must lie in [0, 1]");
  if (!(spurious_fragment_rate >= 0.0 && spurious_fragment_rate <= 64.0))
    throw ConfigError("spurious_fragment_rate must lie in [0, 64]");
  if (track_failure_step < 0) throw ConfigError("track_failure_step must be non-negative");
}

bool CorruptionConfig::is_identity() const {
  return split_probability == 0 && hole_probability == 0 && overseg_probability == 0 &&
         drop_probability == 0 && spurious_fragment_rate == 0 && forced_drop_ids.empty() &&
         track_failure_step == 0;
}

nlohmann::json to_json(const CorruptionConfig& c) {
  return {{"split_probability", c.split_probability},
          {"hole_probability", c.hole_probability},
          {"overseg_probability", c.overseg_probability},
          {"drop_probability", c.drop_probability},
          {"spurious_fragment_rate", c.spurious_fragment_rate},
          {"rng_seed", c.rng_seed},
          {"forced_drop_ids", c.forced_drop_ids},
          {"track_failure_step", c.track_failure_step}};
}

CorruptionConfig corruption_from_json(const nlohmann::json& j) {
  CorruptionConfig c;
  try {
    c.split_probability = j.value("split_probability", 0.0);
    c.hole_probability = j.value("hole_probability", 0.0);
    c.overseg_probability = j.value("overseg_probability", 0.0);
    c.drop_probability = j.value("drop_probability", 0.0);
    c.spurious_fragment_rate = j.value("spurious_fragment_rate", 0.0);
    c.rng_seed = j.value("rng_seed", std::uint64_t{0});
    c.forced_drop_ids = j.value("forced_drop_ids", std::set<int>{});
    c.track_failure_step = j.value("track_failure_step", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corruption config: ") + e.what());
  }
  c.validate();
  return c;
}

SyntheticBackend::SyntheticBackend(World world, CorruptionConfig corruption,
                                   double session_idle_timeout_s)
    : world_(std::move(world)),
      corruption_(std::move(corruption)),
      idle_timeout_(session_idle_timeout_s) {
  corruption_.validate();
  if (!(session_idle_timeout_s > 0)) throw ConfigError("session idle timeout must be positive");
}

void SyntheticBackend::check_image(const RgbImage& image) const {
  if (image.width() != world_.scene.width || image.height() != world_.scene.height) {
    throw InputError("image is " + std::to_string(image.width()) + "x" +
                     std::to_string(image.height()) + ", synthetic scene is " +
                     std::to_string(world_.scene.width) + "x" + std::to_string(world_.scene.height));
  }
}

MaskSet SyntheticBackend::segment(const SegmentRequest& request) {
  request.validate();
  check_image(request.image);
  const auto& scene = world_.scene;
  const MaskSet gt = ground_truth_masks(scene, &world_.motion, 0);
  const auto fine_levels = std::count_if(request.granularity_levels.begin(),
                                         request.granularity_levels.end(),
                                         [](int l) { return l >= 2; });

  std::vector<BinaryMask> wholes, parts;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const int id = scene.objects[i].id;
    Rng rng(derive_seed(corruption_.rng_seed, static_cast<std::uint64_t>(id)));
    const double r_drop = rng.real(), r_hole = rng.real(), r_split = rng.real(),
                 r_overseg = rng.real();
    const auto box = gt[i].bounding_box();
    if (!box) continue;  // fully occluded
    if (corruption_.forced_drop_ids.count(id) || r_drop < corruption_.drop_probability) continue;

    BinaryMask m = gt[i];
    if (r_hole < corruption_.hole_probability && box->width >= 6 && box->height >= 6)
      punch_hole(m, *box);
    if (r_split < corruption_.split_probability && box->width >= 6) split_vertically(m, *box);
    wholes.push_back(m);
    if (r_overseg < corruption_.overseg_probability) {
      for (long k = 0; k < std::min<long>(fine_levels, 3); ++k)
        parts.push_back(left_fragment(gt[i], *box, 0.45 + 0.25 * rng.real()));
    }
  }

  MaskSet out;
  for (auto& m : wholes) out.push_back(std::move(m));
  for (auto& m : parts)
    if (!m.empty()) out.push_back(std::move(m));

  if (corruption_.spurious_fragment_rate > 0) {
    Rng rng(derive_seed(corruption_.rng_seed, "spurious"));
    const double rate = corruption_.spurious_fragment_rate;
    int count = static_cast<int>(std::floor(rate));
    if (rng.chance(rate - count)) ++count;
    const int s = std::min(scene.width, scene.height);
    for (int n = 0; n < count; ++n) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const int w = std::max(2, s * rng.between(4, 8) / 100);
        const int h = std::max(2, s * rng.between(4, 8) / 100);
        const Rect r{rng.below(std::max(1, scene.width - w)), rng.below(std::max(1, scene.height - h)), w, h};
        const bool clear = std::none_of(scene.objects.begin(), scene.objects.end(),
                                        [&](const SceneObject& o) { return o.box.intersects(r); });
        if (!clear) continue;
        out.push_back(BinaryMask::from_rect(scene.width, scene.height, r));
        break;
      }
    }
  }
  return out;
}

std::string SyntheticBackend::track_init(const RgbImage& image, const MaskSet& masks) {
  if (masks.empty()) throw TrackInitError("track_init needs at least one mask");
  check_image(image);
  const MaskSet gt = ground_truth_masks(world_.scene, &world_.motion, 0);
  if (masks.width() != gt.width() || masks.height() != gt.height())
    throw InputError("track_init masks do not match the image size");

  Session s;
  s.reference = masks;
  bool any = false;
  for (const auto& m : masks) {
    int best = -1;
    std::size_t best_overlap = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto ov = intersection_area(m, gt[i]);
      if (ov > best_overlap) {
        best_overlap = ov;
        best = world_.scene.objects[i].id;
      }
    }
    any |= best >= 0;
    s.bound.push_back(best);
  }
  if (!any) throw TrackInitError("no mask overlaps any scene object");

  std::lock_guard lock(mu_);
  const auto now = Clock::now();
  expire_idle(now);
  s.last_used = now;
  const std::string id = "trk-" + std::to_string(next_session_++);
  sessions_.emplace(id, std::move(s));
  return id;
}

TrackStepReply SyntheticBackend::track_step(const std::string& session_id, const RgbImage& image) {
  const auto t0 = Clock::now();
  check_image(image);
  std::vector<int> bound;
  MaskSet reference;
  int frame = 0;
  {
    std::lock_guard lock(mu_);
    expire_idle(t0);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
      throw SessionError(expired_.count(session_id) ? "session " + session_id + " expired"
                                                    : "unknown session " + session_id);
    }
    it->second.last_used = t0;
    frame = ++it->second.frame;
    bound = it->second.bound;
    reference = it->second.reference;
  }
  if (corruption_.track_failure_step > 0 && frame >= corruption_.track_failure_step)
    throw BackendError("synthetic tracker lost the objects at step " + std::to_string(frame));

  const int f = std::min(frame, std::max(0, world_.motion.frames - 1));
  const MaskSet gt = ground_truth_masks(world_.scene, &world_.motion, f);
  TrackStepReply reply;
  for (std::size_t k = 0; k < bound.size(); ++k) {
    if (bound[k] < 0) {
      reply.masks.push_back(reference[k]);
      continue;
    }
    for (std::size_t i = 0; i < world_.scene.objects.size(); ++i)
      if (world_.scene.objects[i].id == bound[k]) reply.masks.push_back(gt[i]);
  }
  reply.latency_ms = elapsed_ms(t0);
  return reply;
}

std::size_t SyntheticBackend::live_sessions() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void SyntheticBackend::expire_idle(Clock::time_point now) {
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now - it->second.last_used > idle_timeout_) {
      expired_.insert(it->first);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace iavla
