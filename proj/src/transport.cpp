#include "iavla/transport.hpp"

#include <csignal>
#include <cstdio>
#include <istream>
#include <ostream>

#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "iavla/errors.hpp"
#include "iavla/protocol.hpp"

namespace iavla {
namespace {

ServiceReply error_reply(const std::string& code, const std::string& message) {
  return {protocol::http_status_for(code), protocol::error_object(code, message)};
}

}  // namespace

BackendService::BackendService(Backend& backend, SelectHandler select)
    : backend_(backend), select_(std::move(select)) {}

ServiceReply BackendService::handle(std::string_view path, const nlohmann::json& body) {
  using protocol::Message;
  try {
    switch (protocol::message_from_path(path)) {
      case Message::Segment:
        return {200, protocol::masks_reply(backend_.segment(protocol::parse_segment_request(body)))};
      case Message::TrackInit: {
        const auto image = protocol::decode_image(body);
        if (!body.contains("masks")) throw InputError("missing field 'masks'");
        const auto masks = masks_from_json(body["masks"]);
        return {200, protocol::track_init_reply(backend_.track_init(image, masks))};
      }
      case Message::TrackStep: {
        if (!body.is_object() || !body.contains("session_id") || !body["session_id"].is_string())
          throw InputError("missing field 'session_id'");
        const auto image = protocol::decode_image(body);
        return {200, protocol::track_step_reply(
                         backend_.track_step(body["session_id"].get<std::string>(), image))};
      }
      case Message::Select: {
        if (!select_) return error_reply("not_found", "this service does not answer /v1/select");
        if (!body.contains("prompt") || !body["prompt"].is_string())
          throw InputError("missing field 'prompt'");
        return {200, protocol::select_reply(select_(protocol::decode_image(body),
                                                    body["prompt"].get<std::string>()))};
      }
      case Message::Unknown:
        break;
    }
    return error_reply("not_found", "unknown endpoint " + std::string(path));
  } catch (const InputError& e) {
    return error_reply("invalid_input", e.what());
  } catch (const CodecError& e) {
    return error_reply("invalid_input", e.what());
  } catch (const DimensionError& e) {
    return error_reply("invalid_input", e.what());
  } catch (const SessionError& e) {
    const std::string msg = e.what();
    return error_reply(msg.find("expired") != std::string::npos ? "session_expired" : "unknown_session",
                       msg);
  } catch (const TrackInitError& e) {
    return error_reply("track_init", e.what());
  } catch (const BackendError& e) {
    return error_reply("backend", e.what());
  } catch (const std::exception& e) {
    return error_reply("internal", e.what());
  }
}

ServiceReply BackendService::handle_text(std::string_view path, const std::string& text) {
  const auto body = nlohmann::json::parse(text, nullptr, false);
  if (body.is_discarded()) return error_reply("invalid_input", "request is not valid JSON");
  return handle(path, body);
}

ServiceReply BackendService::handle_line(const std::string& line) {
  const auto body = nlohmann::json::parse(line, nullptr, false);
  if (body.is_discarded()) return error_reply("invalid_input", "request is not valid JSON");
  const auto kind = protocol::classify_request(body);
  if (kind == protocol::Message::Unknown)
    return error_reply("invalid_input", "cannot tell which request this is");
  return handle(protocol::path_of(kind), body);
}

BackendHttpServer::BackendHttpServer(BackendService& service)
    : server_(std::make_unique<httplib::Server>()) {
  for (auto m : {protocol::Message::Segment, protocol::Message::TrackInit,
                 protocol::Message::TrackStep, protocol::Message::Select}) {
    const std::string path(protocol::path_of(m));
    server_->Post(path, [&service, path](const httplib::Request& req, httplib::Response& res) {
      const auto reply = service.handle_text(path, req.body);
      res.status = reply.status;
      res.set_content(reply.body.dump(), "application/json");
    });
  }
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
}

BackendHttpServer::~BackendHttpServer() { stop(); }

int BackendHttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void BackendHttpServer::listen() { server_->listen_after_bind(); }

void BackendHttpServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void BackendHttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

void serve_stdio(BackendService& service, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << service.handle_line(line).body.dump() << '\n';
    out.flush();
  }
}

HttpBackend::HttpBackend(std::string url, int timeout_ms) : url_(std::move(url)), timeout_ms_(timeout_ms) {}

nlohmann::json HttpBackend::post(std::string_view path, const nlohmann::json& body) {
  httplib::Client cli(url_);
  const auto secs = timeout_ms_ / 1000, usecs = (timeout_ms_ % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  auto res = cli.Post(std::string(path), body.dump(), "application/json");
  if (!res) throw BackendError(url_ + std::string(path) + ": " + httplib::to_string(res.error()));
  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw BackendError("backend answered HTTP " + std::to_string(res->status) + " without JSON");
  if (protocol::is_error(reply)) protocol::throw_error(reply);
  if (res->status != 200) throw BackendError("backend answered HTTP " + std::to_string(res->status));
  return reply;
}

MaskSet HttpBackend::segment(const SegmentRequest& request) {
  return protocol::parse_masks_reply(post("/segment", protocol::segment_request(request)));
}

std::string HttpBackend::track_init(const RgbImage& image, const MaskSet& masks) {
  if (masks.empty()) throw TrackInitError("track_init needs at least one mask");
  return protocol::parse_track_init_reply(post("/track/init", protocol::track_init_request(image, masks)));
}

TrackStepReply HttpBackend::track_step(const std::string& session_id, const RgbImage& image) {
  return protocol::parse_track_step_reply(post("/track/step", protocol::track_step_request(session_id, image)));
}

StdioBackend::StdioBackend(std::vector<std::string> argv) {
  if (argv.empty()) throw ConfigError("stdio backend needs a command");
  int down[2], up[2];
  if (pipe(down) != 0) throw BackendError("pipe failed");
  if (pipe(up) != 0) {
    close(down[0]);
    close(down[1]);
    throw BackendError("pipe failed");
  }
  std::vector<char*> args;
  for (auto& a : argv) args.push_back(a.data());
  args.push_back(nullptr);

  pid_ = fork();
  if (pid_ < 0) throw BackendError("fork failed");
  if (pid_ == 0) {
    dup2(down[0], STDIN_FILENO);
    dup2(up[1], STDOUT_FILENO);
    close(down[0]);
    close(down[1]);
    close(up[0]);
    close(up[1]);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(down[0]);
  close(up[1]);
  to_child_ = fdopen(down[1], "w");
  from_child_ = fdopen(up[0], "r");
  // A dead child must surface as a failed write, not kill the process.
  std::signal(SIGPIPE, SIG_IGN);
}

StdioBackend::~StdioBackend() {
  if (to_child_) std::fclose(to_child_);
  if (from_child_) std::fclose(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

nlohmann::json StdioBackend::exchange(const nlohmann::json& body) {
  std::lock_guard lock(mu_);
  const std::string line = body.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), to_child_) != line.size() || std::fflush(to_child_) != 0)
    throw BackendError("stdio backend closed its input");
  std::string reply;
  char buf[65536];
  while (std::fgets(buf, sizeof buf, from_child_)) {
    reply += buf;
    if (!reply.empty() && reply.back() == '\n') break;
  }
  if (reply.empty()) throw BackendError("stdio backend exited");
  auto j = nlohmann::json::parse(reply, nullptr, false);
  if (j.is_discarded()) throw BackendError("stdio backend wrote a line that is not JSON");
  if (protocol::is_error(j)) protocol::throw_error(j);
  return j;
}

MaskSet StdioBackend::segment(const SegmentRequest& request) {
  return protocol::parse_masks_reply(exchange(protocol::segment_request(request)));
}

std::string StdioBackend::track_init(const RgbImage& image, const MaskSet& masks) {
  if (masks.empty()) throw TrackInitError("track_init needs at least one mask");
  return protocol::parse_track_init_reply(exchange(protocol::track_init_request(image, masks)));
}

TrackStepReply StdioBackend::track_step(const std::string& session_id, const RgbImage& image) {
  return protocol::parse_track_step_reply(exchange(protocol::track_step_request(session_id, image)));
}

}  // namespace iavla
