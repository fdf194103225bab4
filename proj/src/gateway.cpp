#include "iavla/gateway.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "iavla/errors.hpp"
#include "iavla/protocol.hpp"

namespace iavla {

namespace {

using Clock = std::chrono::steady_clock;

ServiceReply fail(int status, const std::string& code, const std::string& message) {
  return {status, protocol::error_object(code, message)};
}

std::string frame_b64(const RgbImage& img) { return protocol::encode_image(img); }

World world_from_request(const nlohmann::json& j) {
  World w;
  if (!j.is_object()) throw InputError("scene must be an object");
  if (j.contains("scene")) {
    w.scene = scene_from_json(j.at("scene"));
    if (j.contains("motion")) w.motion = motion_from_json(j.at("motion"));
  } else {
    w.scene = scene_from_json(j);
  }
  return w;
}

}  // namespace

struct Gateway::Session {
  std::string id;
  PipelineConfig cfg;
  std::unique_ptr<Backend> backend;
  AugmentedInit init;
  std::unique_ptr<StreamSession> stream;
  std::mutex in_flight;
  Clock::time_point created;
  Clock::time_point last_used;
};

Gateway::Gateway(Options options) : options_(std::move(options)) { options_.base.validate(); }

Gateway::~Gateway() = default;

std::size_t Gateway::live_sessions() {
  expire_idle();
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void Gateway::expire_idle() {
  std::lock_guard lock(mu_);
  const auto now = Clock::now();
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    const std::chrono::duration<double> idle = now - it->second->last_used;
    if (idle.count() > options_.session_idle_timeout_s) {
      spdlog::info("episode {} expired after {:.1f} s idle", it->first, idle.count());
      expired_.insert(it->first);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::shared_ptr<Gateway::Session> Gateway::find(const std::string& id, ServiceReply& miss) {
  expire_idle();
  std::lock_guard lock(mu_);
  if (auto it = sessions_.find(id); it != sessions_.end()) {
    it->second->last_used = Clock::now();
    return it->second;
  }
  miss = expired_.count(id) ? fail(410, "session_expired", "episode " + id + " expired")
                            : fail(404, "unknown_session", "no episode " + id);
  return nullptr;
}

ServiceReply Gateway::init(const nlohmann::json& body) {
  auto s = std::make_shared<Session>();
  std::optional<World> world;
  RgbImage image;
  std::string instruction;
  TaskSetting setting{};
  std::uint64_t seed = options_.seed;
  try {
    if (!body.is_object()) throw InputError("request must be an object");
    if (!body.contains("instruction") || !body["instruction"].is_string())
      throw InputError("missing instruction");
    instruction = body["instruction"].get<std::string>();
    image = protocol::decode_image(body);
    s->cfg = body.contains("config") ? pipeline_config_from_json(body["config"], options_.base)
                                     : options_.base;
    if (body.contains("seed")) seed = body["seed"].get<std::uint64_t>();
    if (body.contains("scene")) world = world_from_request(body["scene"]);
    if (world) {
      setting = world->scene.setting;
    } else if (body.contains("setting")) {
      setting = setting_from_string(body["setting"].get<std::string>());
    } else if (s->cfg.setting) {
      setting = *s->cfg.setting;
    } else {
      throw InputError("no scene and no setting given");
    }
    if (s->cfg.backend.kind == "synthetic" && !world)
      throw InputError("the synthetic backend needs a scene");
  } catch (const std::exception& e) {
    return fail(400, "invalid_input", e.what());
  }

  std::unique_ptr<VlmClient> vlm;
  try {
    s->backend = make_backend(s->cfg, world ? &*world : nullptr, seed);
    vlm = make_vlm(s->cfg, seed);
  } catch (const BackendError& e) {
    return fail(503, "backend_unavailable", e.what());
  } catch (const Error& e) {
    return fail(400, "invalid_input", e.what());
  }

  HintProvider hint;
  if (world) {
    if (auto targets = try_targets(world->scene, instruction)) hint = oracle_hint_provider(*world, *targets);
  }

  try {
    s->init = preprocess(image, instruction, setting, s->cfg, *s->backend, *vlm, hint);
    s->stream = std::make_unique<StreamSession>(*s->backend, s->cfg, image, s->init);
  } catch (const PreprocessError& e) {
    auto reply = fail(422, "preprocess", e.what());
    reply.body["stage"] = e.stage();
    return reply;
  } catch (const TrackInitError& e) {
    auto reply = fail(422, "preprocess", e.what());
    reply.body["stage"] = "tracking";
    return reply;
  } catch (const BackendError& e) {
    return fail(503, "backend_unavailable", e.what());
  } catch (const std::exception& e) {
    return fail(400, "invalid_input", e.what());
  }

  s->id = "ep-" + std::to_string(next_id_++);
  s->created = s->last_used = Clock::now();
  {
    std::lock_guard lock(mu_);
    sessions_[s->id] = s;
  }
  spdlog::info("episode {} started: \"{}\" -> tags {}", s->id, instruction,
               to_json(s->init.selection)["chosen_tags"].dump());
  return {200,
          {{"episode_id", s->id},
           {"augmented_frame", frame_b64(s->init.highlighted)},
           {"selection", to_json(s->init.selection)},
           {"effective_instruction", s->init.effective_instruction},
           {"candidates", s->init.candidates.size()},
           {"frame_counter", 0}}};
}

ServiceReply Gateway::frame(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("episode_id") || !body["episode_id"].is_string())
    return fail(400, "invalid_input", "missing episode_id");
  const auto id = body["episode_id"].get<std::string>();
  ServiceReply miss;
  auto s = find(id, miss);
  if (!s) return miss;

  std::unique_lock busy(s->in_flight, std::try_to_lock);
  if (!busy.owns_lock()) return fail(429, "busy", "episode " + id + " already has a frame in flight");

  RgbImage image;
  try {
    image = protocol::decode_image(body);
  } catch (const std::exception& e) {
    return fail(400, "invalid_input", e.what());
  }
  StepOutput out;
  try {
    out = s->stream->step(image);
  } catch (const BackendError& e) {
    return fail(503, "backend_unavailable", e.what());
  } catch (const SessionError& e) {
    return fail(503, "backend_unavailable", e.what());
  } catch (const std::exception& e) {
    return fail(400, "invalid_input", e.what());
  }
  {
    std::lock_guard lock(mu_);
    s->last_used = Clock::now();
  }
  spdlog::debug("episode {} frame {} in {:.2f} ms", id, s->stream->frame_counter(), out.latency_ms);
  return {200,
          {{"episode_id", id},
           {"augmented_frame", frame_b64(out.frame)},
           {"latency_ms", out.latency_ms},
           {"overhead_ms", out.overhead_ms},
           {"frame_counter", s->stream->frame_counter()},
           {"frozen", out.frozen}}};
}

ServiceReply Gateway::close(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("episode_id") || !body["episode_id"].is_string())
    return fail(400, "invalid_input", "missing episode_id");
  const auto id = body["episode_id"].get<std::string>();
  std::lock_guard lock(mu_);
  if (sessions_.erase(id) == 0) return fail(404, "unknown_session", "no episode " + id);
  return {200, {{"episode_id", id}, {"closed", true}}};
}

ServiceReply Gateway::handle_text(std::string_view path, const std::string& text) {
  const auto body = nlohmann::json::parse(text, nullptr, false);
  if (body.is_discarded()) return fail(400, "invalid_input", "request is not JSON");
  if (path == "/episode/init") return init(body);
  if (path == "/episode/frame") return frame(body);
  if (path == "/episode/close") return close(body);
  return fail(404, "not_found", "no route " + std::string(path));
}

GatewayHttpServer::GatewayHttpServer(Gateway& gateway) : server_(std::make_unique<httplib::Server>()) {
  for (const std::string path : {"/episode/init", "/episode/frame", "/episode/close"}) {
    server_->Post(path, [&gateway, path](const httplib::Request& req, httplib::Response& res) {
      const auto reply = gateway.handle_text(path, req.body);
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
    });
  }
  server_->Get("/healthz", [&gateway](const httplib::Request&, httplib::Response& res) {
    const nlohmann::json body{{"status", "ok"}, {"sessions", gateway.live_sessions()}};
    res.set_content(body.dump(), "application/json");
  });
}

GatewayHttpServer::~GatewayHttpServer() { stop(); }

int GatewayHttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void GatewayHttpServer::listen() { server_->listen_after_bind(); }

void GatewayHttpServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void GatewayHttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace iavla
