#pragma once

#include <cstdio>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "iavla/backends.hpp"

namespace httplib {
class Server;
}

namespace iavla {

/// Answers a /v1/select request: annotated image and prompt in, reply text out.
using SelectHandler = std::function<std::string(const RgbImage&, const std::string&)>;

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

/// Transport-independent request dispatch for a backend. Every failure turns
/// into an error object; nothing escapes.
class BackendService {
 public:
  explicit BackendService(Backend& backend, SelectHandler select = {});

  ServiceReply handle(std::string_view path, const nlohmann::json& body);
  /// Raw request text; malformed JSON yields an invalid_input error.
  ServiceReply handle_text(std::string_view path, const std::string& text);
  /// Stdio form: the message type is inferred from the fields.
  ServiceReply handle_line(const std::string& line);

 private:
  Backend& backend_;
  SelectHandler select_;
};

/// HTTP front end for a BackendService, including GET /healthz.
class BackendHttpServer {
 public:
  explicit BackendHttpServer(BackendService& service);
  ~BackendHttpServer();
  BackendHttpServer(const BackendHttpServer&) = delete;
  BackendHttpServer& operator=(const BackendHttpServer&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocking.
  void listen();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

/// One JSON request per input line, one JSON reply per output line, until EOF.
void serve_stdio(BackendService& service, std::istream& in, std::ostream& out);

class HttpBackend : public Backend {
 public:
  HttpBackend(std::string url, int timeout_ms = 30000);

  MaskSet segment(const SegmentRequest& request) override;
  std::string track_init(const RgbImage& image, const MaskSet& masks) override;
  TrackStepReply track_step(const std::string& session_id, const RgbImage& image) override;

 private:
  nlohmann::json post(std::string_view path, const nlohmann::json& body);

  std::string url_;
  int timeout_ms_;
};

/// Spawns `argv` and talks to it over its stdin/stdout. Calls are serialized.
class StdioBackend : public Backend {
 public:
  explicit StdioBackend(std::vector<std::string> argv);
  ~StdioBackend() override;
  StdioBackend(const StdioBackend&) = delete;
  StdioBackend& operator=(const StdioBackend&) = delete;

  MaskSet segment(const SegmentRequest& request) override;
  std::string track_init(const RgbImage& image, const MaskSet& masks) override;
  TrackStepReply track_step(const std::string& session_id, const RgbImage& image) override;

 private:
  nlohmann::json exchange(const nlohmann::json& body);

  std::mutex mu_;
  int pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
};

}  // namespace iavla
