#include "iavla/protocol.hpp"

#include "iavla/errors.hpp"

namespace iavla::protocol {
namespace {

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw InputError(std::string("missing field '") + name + "'");
  return j.at(name);
}

}  // namespace

std::string_view path_of(Message m) {
  switch (m) {
    case Message::Segment:
      return "/segment";
    case Message::TrackInit:
      return "/track/init";
    case Message::TrackStep:
      return "/track/step";
    case Message::Select:
      return "/v1/select";
    case Message::Unknown:
      break;
  }
  return "";
}

Message message_from_path(std::string_view path) {
  for (auto m : {Message::Segment, Message::TrackInit, Message::TrackStep, Message::Select})
    if (path == path_of(m)) return m;
  return Message::Unknown;
}

Message classify_request(const nlohmann::json& body) {
  if (!body.is_object()) return Message::Unknown;
  if (body.contains("session_id")) return Message::TrackStep;
  if (body.contains("masks")) return Message::TrackInit;
  if (body.contains("granularity")) return Message::Segment;
  if (body.contains("prompt")) return Message::Select;
  return Message::Unknown;
}

std::string encode_image(const RgbImage& image) { return base64_encode(encode_png(image)); }

RgbImage decode_image(const nlohmann::json& body) {
  const auto& v = field(body, "image_png_b64");
  if (!v.is_string()) throw InputError("image_png_b64 must be a string");
  return decode_png(base64_decode(v.get_ref<const std::string&>()));
}

nlohmann::json segment_request(const SegmentRequest& r) {
  return {{"image_png_b64", encode_image(r.image)}, {"granularity", r.granularity_levels}};
}

SegmentRequest parse_segment_request(const nlohmann::json& j) {
  SegmentRequest r;
  r.image = decode_image(j);
  try {
    r.granularity_levels = field(j, "granularity").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("granularity: ") + e.what());
  }
  r.validate();
  return r;
}

nlohmann::json masks_reply(const MaskSet& masks) { return {{"masks", masks_to_json(masks)}}; }

MaskSet parse_masks_reply(const nlohmann::json& j) {
  try {
    return masks_from_json(field(j, "masks"));
  } catch (const Error& e) {
    throw BackendError(std::string("malformed reply: ") + e.what());
  }
}

nlohmann::json track_init_request(const RgbImage& image, const MaskSet& masks) {
  return {{"image_png_b64", encode_image(image)}, {"masks", masks_to_json(masks)}};
}

nlohmann::json track_init_reply(const std::string& session_id) {
  return {{"session_id", session_id}};
}

std::string parse_track_init_reply(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("session_id") || !j["session_id"].is_string())
    throw BackendError("malformed track/init reply");
  return j["session_id"].get<std::string>();
}

nlohmann::json track_step_request(const std::string& session_id, const RgbImage& image) {
  return {{"session_id", session_id}, {"image_png_b64", encode_image(image)}};
}

nlohmann::json track_step_reply(const TrackStepReply& r) {
  return {{"masks", masks_to_json(r.masks)}, {"latency_ms", r.latency_ms}};
}

TrackStepReply parse_track_step_reply(const nlohmann::json& j) {
  TrackStepReply r;
  r.masks = parse_masks_reply(j);
  if (!j.contains("latency_ms") || !j["latency_ms"].is_number())
    throw BackendError("malformed track/step reply");
  r.latency_ms = j["latency_ms"].get<double>();
  return r;
}

nlohmann::json select_request(const RgbImage& image, const std::string& prompt) {
  return {{"image_png_b64", encode_image(image)}, {"prompt", prompt}};
}

nlohmann::json select_reply(const std::string& reply) { return {{"reply", reply}}; }

nlohmann::json error_object(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

bool is_error(const nlohmann::json& j) { return j.is_object() && j.contains("error"); }

int http_status_for(const std::string& code) {
  if (code == "invalid_input") return 400;
  if (code == "unknown_session" || code == "not_found") return 404;
  if (code == "session_expired") return 410;
  if (code == "track_init") return 422;
  if (code == "backend") return 502;
  return 500;
}

void throw_error(const nlohmann::json& j) {
  const auto& e = j.at("error");
  const std::string code = e.value("code", "internal");
  const std::string message = e.value("message", "");
  if (code == "invalid_input") throw InputError(message);
  if (code == "unknown_session" || code == "session_expired") throw SessionError(message);
  if (code == "track_init") throw TrackInitError(message);
  throw BackendError(code + ": " + message);
}

}  // namespace iavla::protocol
