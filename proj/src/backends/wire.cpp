#include "coa/wire.hpp"

#include <cmath>

#include "coa/errors.hpp"
#include "coa/hashing.hpp"

namespace coa::wire {

namespace {

json encode_image(const ImageHandle& image) {
  if (!image) return nullptr;
  return {{"media_type", image->media_type}, {"data", base64_encode(image->bytes)}};
}

json canonical_image(const ImageHandle& image) {
  if (!image) return nullptr;
  return {{"media_type", image->media_type}, {"sha256", image->digest}};
}

const json& field(const json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) {
    throw ProtocolError(std::string("missing field '") + name + "'", j.dump());
  }
  return j.at(name);
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw ProtocolError(std::string("field '") + name + "' must be a string", j.dump());
  return v.get<std::string>();
}

ImageHandle decode_image(const json& j) {
  if (j.is_null()) return nullptr;
  std::string media = string_field(j, "media_type");
  std::string data = string_field(j, "data");
  return ImagePayload::from_bytes(base64_decode(data), std::move(media));
}

std::vector<double> number_array(const json& j, const char* name, const std::string& raw) {
  const json& v = field(j, name);
  if (!v.is_array()) throw ProtocolError(std::string("field '") + name + "' must be an array", raw);
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw ProtocolError(std::string("non-numeric entry in '") + name + "'", raw);
    double d = x.get<double>();
    if (!std::isfinite(d)) throw ProtocolError(std::string("non-finite entry in '") + name + "'", raw);
    out.push_back(d);
  }
  return out;
}

json parse_body(const std::string& body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw ProtocolError("response body is not a JSON object", body);
    return j;
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed response body: ") + e.what(), body);
  }
}

}  // namespace

json encode(const ChatRequest& req) {
  return {
      {"model", req.model},
      {"prompt", req.prompt},
      {"image", encode_image(req.image)},
      {"max_tokens", req.max_tokens},
      {"temperature", req.temperature},
      {"seed", req.seed ? json(*req.seed) : json(nullptr)},
      {"action", std::string(to_string(req.action))},
      {"template_id", req.template_id},
      {"subject", req.subject},
  };
}

json encode(const EmbedRequest& req) {
  json j = {{"model", req.model}, {"kind", req.kind == EmbedKind::Text ? "text" : "image"}};
  if (req.kind == EmbedKind::Text) j["text"] = req.text;
  else j["image"] = encode_image(req.image);
  return j;
}

json encode(const TagRequest& req) {
  return {{"model", req.model}, {"image", encode_image(req.image)}, {"labels", req.labels}};
}

json encode(const ChatResponse& resp) { return {{"text", resp.text}, {"latency_ms", resp.latency_ms}}; }

json encode(const EmbedResponse& resp) { return {{"vector", resp.vector}, {"dim", resp.dim}}; }

json encode(const TagResponse& resp) { return {{"confidences", resp.confidences}}; }

ChatRequest decode_chat_request(const json& j) {
  ChatRequest req;
  req.model = string_field(j, "model");
  req.prompt = string_field(j, "prompt");
  if (j.contains("image")) req.image = decode_image(j.at("image"));
  if (j.contains("max_tokens")) {
    if (!j.at("max_tokens").is_number_integer()) throw ProtocolError("max_tokens must be an integer", j.dump());
    req.max_tokens = j.at("max_tokens").get<int>();
  }
  if (j.contains("temperature")) {
    if (!j.at("temperature").is_number()) throw ProtocolError("temperature must be a number", j.dump());
    req.temperature = j.at("temperature").get<double>();
  }
  if (j.contains("seed") && !j.at("seed").is_null()) {
    if (!j.at("seed").is_number_integer()) throw ProtocolError("seed must be an integer", j.dump());
    req.seed = j.at("seed").get<std::int64_t>();
  }
  if (j.contains("action")) {
    auto kind = parse_action_kind(string_field(j, "action"));
    if (!kind) throw ProtocolError("unknown action", j.dump());
    req.action = *kind;
  }
  if (j.contains("template_id")) req.template_id = string_field(j, "template_id");
  if (j.contains("subject")) req.subject = string_field(j, "subject");
  try {
    req.validate();
  } catch (const std::invalid_argument& e) {
    throw ProtocolError(e.what(), j.dump());
  }
  return req;
}

EmbedRequest decode_embed_request(const json& j) {
  EmbedRequest req;
  req.model = string_field(j, "model");
  std::string kind = string_field(j, "kind");
  if (kind == "text") {
    req.kind = EmbedKind::Text;
    req.text = string_field(j, "text");
  } else if (kind == "image") {
    req.kind = EmbedKind::Image;
    req.image = decode_image(field(j, "image"));
  } else {
    throw ProtocolError("kind must be 'text' or 'image'", j.dump());
  }
  try {
    req.validate();
  } catch (const std::invalid_argument& e) {
    throw ProtocolError(e.what(), j.dump());
  }
  return req;
}

TagRequest decode_tag_request(const json& j) {
  TagRequest req;
  req.model = string_field(j, "model");
  req.image = decode_image(field(j, "image"));
  const json& labels = field(j, "labels");
  if (!labels.is_array()) throw ProtocolError("labels must be an array", j.dump());
  for (const auto& l : labels) {
    if (!l.is_string()) throw ProtocolError("labels must be strings", j.dump());
    req.labels.push_back(l.get<std::string>());
  }
  try {
    req.validate();
  } catch (const std::invalid_argument& e) {
    throw ProtocolError(e.what(), j.dump());
  }
  return req;
}

ChatResponse decode_chat_response(const std::string& body) {
  json j = parse_body(body);
  ChatResponse resp;
  const json& text = field(j, "text");
  if (!text.is_string()) throw ProtocolError("field 'text' must be a string", body);
  resp.text = text.get<std::string>();
  if (j.contains("latency_ms") && j.at("latency_ms").is_number_integer()) {
    resp.latency_ms = j.at("latency_ms").get<std::int64_t>();
  }
  return resp;
}

EmbedResponse decode_embed_response(const std::string& body) {
  json j = parse_body(body);
  EmbedResponse resp;
  resp.vector = number_array(j, "vector", body);
  const json& dim = field(j, "dim");
  if (!dim.is_number_integer()) throw ProtocolError("field 'dim' must be an integer", body);
  resp.dim = dim.get<int>();
  if (resp.dim != static_cast<int>(resp.vector.size())) {
    throw ProtocolError("embedding length does not match dim", body);
  }
  return resp;
}

TagResponse decode_tag_response(const std::string& body) {
  json j = parse_body(body);
  TagResponse resp;
  resp.confidences = number_array(j, "confidences", body);
  for (double c : resp.confidences) {
    if (c < 0.0 || c > 1.0) throw ProtocolError("confidence outside [0,1]", body);
  }
  return resp;
}

json canonical(const ChatRequest& req) {
  json j = encode(req);
  j["image"] = canonical_image(req.image);
  return j;
}

json canonical(const EmbedRequest& req) {
  json j = encode(req);
  if (req.kind == EmbedKind::Image) j["image"] = canonical_image(req.image);
  return j;
}

json canonical(const TagRequest& req) {
  json j = encode(req);
  j["image"] = canonical_image(req.image);
  return j;
}

}  // namespace coa::wire
