#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "iavla/image.hpp"
#include "iavla/mask.hpp"
#include "iavla/scenesim.hpp"

namespace iavla {

struct SegmentRequest {
  RgbImage image;
  std::vector<int> granularity_levels{1, 2, 3};

  /// Throws InputError: no levels, a level outside 1..6, or an image larger
  /// than 4096 on a side.
  void validate() const;
};

struct TrackStepReply {
  MaskSet masks;
  double latency_ms = 0.0;  // as reported by the backend
};

/// Segmenter plus tracker. Implementations: SyntheticBackend in process,
/// HttpBackend and StdioBackend out of process.
class Backend {
 public:
  virtual ~Backend() = default;
  /// Candidate masks, possibly overlapping and unfiltered.
  virtual MaskSet segment(const SegmentRequest& request) = 0;
  /// Returns the new session id.
  virtual std::string track_init(const RgbImage& image, const MaskSet& masks) = 0;
  virtual TrackStepReply track_step(const std::string& session_id, const RgbImage& image) = 0;
};

/// Client-side view of one tracking session.
struct TrackSession {
  std::string session_id;
  MaskSet reference_masks;
  int frame_counter = 0;
  /// Round-trip time of every step call, ms.
  std::vector<double> latencies_ms;
};

/// Throws TrackInitError on an empty mask set.
TrackSession track_init(Backend& backend, const RgbImage& image, const MaskSet& masks);
/// Advances the frame counter and records the call latency.
MaskSet track_step(Backend& backend, TrackSession& session, const RgbImage& next_image);

struct CorruptionConfig {
  double split_probability = 0.0;
  double hole_probability = 0.0;
  double overseg_probability = 0.0;
  double drop_probability = 0.0;
  /// Expected number of spurious background masks per segment call.
  double spurious_fragment_rate = 0.0;
  std::uint64_t rng_seed = 0;
  /// Objects always dropped from segmentation.
  std::set<int> forced_drop_ids;
  /// Step index (1-based) at which the tracker starts failing; 0 = never.
  int track_failure_step = 0;

  /// Throws ConfigError.
  void validate() const;
  bool is_identity() const;
};

nlohmann::json to_json(const CorruptionConfig& c);
CorruptionConfig corruption_from_json(const nlohmann::json& j);

/// Ground truth from a scenesim World.
///
/// segment returns the frame-0 masks of every object in object order, each
/// transformed by the corruption draws (drop, hole, split), then part-level
/// fragments for granularity levels above 1, then spurious background masks.
/// Draws depend only on the seed and the object, so calls are repeatable.
///
/// track_init binds every mask to the object it overlaps most (lowest id on
/// ties); masks overlapping nothing stay static. track_step returns the
/// ground-truth masks of the bound objects at the session's next frame.
class SyntheticBackend : public Backend {
 public:
  explicit SyntheticBackend(World world, CorruptionConfig corruption = {},
                            double session_idle_timeout_s = 300.0);

  MaskSet segment(const SegmentRequest& request) override;
  std::string track_init(const RgbImage& image, const MaskSet& masks) override;
  TrackStepReply track_step(const std::string& session_id, const RgbImage& image) override;

  const World& world() const noexcept { return world_; }
  std::size_t live_sessions() const;

 private:
  using Clock = std::chrono::steady_clock;
  struct Session {
    std::vector<int> bound;  // object id per mask, -1 when static
    MaskSet reference;
    int frame = 0;
    Clock::time_point last_used;
  };

  void check_image(const RgbImage& image) const;
  void expire_idle(Clock::time_point now);

  World world_;
  CorruptionConfig corruption_;
  std::chrono::duration<double> idle_timeout_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
  std::set<std::string> expired_;
  std::uint64_t next_session_ = 1;
};

}  // namespace iavla
