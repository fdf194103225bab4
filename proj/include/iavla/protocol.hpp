#pragma once

#include <string>

#include "json.hpp"

#include "iavla/backends.hpp"

/// JSON message bodies shared by the HTTP and stdio transports.
///
///   /segment     {image_png_b64, granularity:[int]}  -> {masks:[RLE]}
///   /track/init  {image_png_b64, masks:[RLE]}        -> {session_id}
///   /track/step  {session_id, image_png_b64}         -> {masks:[RLE], latency_ms}
///   /v1/select   {image_png_b64, prompt}             -> {reply}
///   any failure                                      -> {error:{code, message}}
namespace iavla::protocol {

enum class Message { Segment, TrackInit, TrackStep, Select, Unknown };

std::string_view path_of(Message m);
Message message_from_path(std::string_view path);
/// Infers the message type of a bare request object from its fields, as the
/// stdio transport carries no path.
Message classify_request(const nlohmann::json& body);

std::string encode_image(const RgbImage& image);
/// Throws InputError.
RgbImage decode_image(const nlohmann::json& body);

nlohmann::json segment_request(const SegmentRequest& r);
SegmentRequest parse_segment_request(const nlohmann::json& j);
nlohmann::json masks_reply(const MaskSet& masks);
MaskSet parse_masks_reply(const nlohmann::json& j);

nlohmann::json track_init_request(const RgbImage& image, const MaskSet& masks);
nlohmann::json track_init_reply(const std::string& session_id);
std::string parse_track_init_reply(const nlohmann::json& j);

nlohmann::json track_step_request(const std::string& session_id, const RgbImage& image);
nlohmann::json track_step_reply(const TrackStepReply& r);
TrackStepReply parse_track_step_reply(const nlohmann::json& j);

nlohmann::json select_request(const RgbImage& image, const std::string& prompt);
nlohmann::json select_reply(const std::string& reply);

/// Error codes: invalid_input, unknown_session, session_expired, track_init,
/// backend, not_found, internal.
nlohmann::json error_object(const std::string& code, const std::string& message);
bool is_error(const nlohmann::json& j);
int http_status_for(const std::string& code);
/// Raises the library exception matching an error object.
[[noreturn]] void throw_error(const nlohmann::json& j);

}  // namespace iavla::protocol
