#pragma once

// JSON schemas for the /chat, /embed and /tag endpoints.
//
//   POST /chat   {"model", "prompt", "image": {"media_type", "data"} | null,
//                 "max_tokens", "temperature", "seed": int | null,
//                 "action", "template_id", "subject"}
//             -> {"text", "latency_ms"}
//   POST /embed  {"model", "kind": "text" | "image", "text"?, "image"?}
//             -> {"vector": [float], "dim": int}
//   POST /tag    {"model", "image", "labels": [string]}
//             -> {"confidences": [float]}
//
// Image "data" is base64. Errors come back as {"error": message} with a
// 4xx/5xx status.

#include <string>

#include <json.hpp>

#include "coa/backends.hpp"

namespace coa::wire {

using nlohmann::json;

json encode(const ChatRequest& req);
json encode(const EmbedRequest& req);
json encode(const TagRequest& req);
json encode(const ChatResponse& resp);
json encode(const EmbedResponse& resp);
json encode(const TagResponse& resp);

// Request decoders throw ProtocolError on schema violations.
ChatRequest decode_chat_request(const json& j);
EmbedRequest decode_embed_request(const json& j);
TagRequest decode_tag_request(const json& j);

// Response decoders take the raw body so it can ride along on errors.
ChatResponse decode_chat_response(const std::string& body);
EmbedResponse decode_embed_response(const std::string& body);
TagResponse decode_tag_response(const std::string& body);

// Request JSON with image bytes replaced by {"media_type", "sha256"}.
json canonical(const ChatRequest& req);
json canonical(const EmbedRequest& req);
json canonical(const TagRequest& req);

}  // namespace coa::wire
