#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include "json.hpp"

#include "iavla/pipeline.hpp"
#include "iavla/transport.hpp"

namespace httplib {
class Server;
}

namespace iavla {

/// Streaming front end for external robot stacks.
///
///   POST /episode/init  {image_png_b64, instruction, config?, seed?, scene?, setting?}
///     -> {episode_id, augmented_frame, selection, effective_instruction, frame_counter}
///   POST /episode/frame {episode_id, image_png_b64}
///     -> {episode_id, augmented_frame, latency_ms, overhead_ms, frame_counter, frozen}
///   POST /episode/close {episode_id}
///   GET  /healthz
///
/// `config` is a merge patch over the gateway's base configuration. `scene` is
/// a synthetic world ({scene, motion}); with it the synthetic backend and the
/// mock VLM behave exactly as in an offline run with the same seed.
class Gateway {
 public:
  struct Options {
    PipelineConfig base;
    std::uint64_t seed = 0;
    double session_idle_timeout_s = 300.0;
  };

  explicit Gateway(Options options);
  ~Gateway();

  /// Nothing escapes: failures become {"error":{code,message}} with an HTTP
  /// status (400 bad input, 404 unknown id, 410 expired, 422 preprocess
  /// failure with "stage", 429 frame already in flight, 503 backend down).
  ServiceReply init(const nlohmann::json& body);
  ServiceReply frame(const nlohmann::json& body);
  ServiceReply close(const nlohmann::json& body);
  ServiceReply handle_text(std::string_view path, const std::string& text);

  std::size_t live_sessions();

 private:
  struct Session;

  std::shared_ptr<Session> find(const std::string& id, ServiceReply& miss);
  void expire_idle();

  Options options_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::set<std::string> expired_;
  std::atomic<std::uint64_t> next_id_{1};
};

class GatewayHttpServer {
 public:
  explicit GatewayHttpServer(Gateway& gateway);
  ~GatewayHttpServer();
  GatewayHttpServer(const GatewayHttpServer&) = delete;
  GatewayHttpServer& operator=(const GatewayHttpServer&) = delete;

  /// Port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  void listen();
  void start();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace iavla
