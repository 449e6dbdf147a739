#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <unistd.h>

#include "coa/backends.hpp"
#include "coa/errors.hpp"
#include "coa/hashing.hpp"
#include "coa/wire.hpp"

namespace coa {

namespace fs = std::filesystem;

ImageHandle ImagePayload::from_bytes(std::string bytes, std::string media_type) {
  auto p = std::make_shared<ImagePayload>();
  p->digest = sha256_hex(bytes);
  p->bytes = std::move(bytes);
  p->media_type = std::move(media_type);
  return p;
}

ImageHandle ImagePayload::from_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read image: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string ext = casefold(path.extension().string());
  std::string media = "application/octet-stream";
  if (ext == ".jpg" || ext == ".jpeg") media = "image/jpeg";
  else if (ext == ".png") media = "image/png";
  else if (ext == ".gif") media = "image/gif";
  else if (ext == ".webp") media = "image/webp";
  else if (ext == ".bmp") media = "image/bmp";
  return from_bytes(buf.str(), media);
}

void ChatRequest::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
}

void EmbedRequest::validate() const {
  if (kind == EmbedKind::Image && !image) throw std::invalid_argument("image embed request without image");
}

void TagRequest::validate() const {
  if (labels.empty()) throw std::invalid_argument("tag request needs at least one label");
  if (!image) throw std::invalid_argument("tag request without image");
}

ChatResponse ModelBackend::chat(const ChatRequest& req) {
  req.validate();
  return do_chat(req);
}

EmbedResponse ModelBackend::embed(const EmbedRequest& req) {
  req.validate();
  EmbedResponse resp = do_embed(req);
  if (resp.dim != static_cast<int>(resp.vector.size())) {
    throw ProtocolError("embedding length " + std::to_string(resp.vector.size()) + " != dim " +
                        std::to_string(resp.dim));
  }
  return resp;
}

TagResponse ModelBackend::tag(const TagRequest& req) {
  req.validate();
  TagResponse resp = do_tag(req);
  if (resp.confidences.size() != req.labels.size()) {
    throw ProtocolError("tagger returned " + std::to_string(resp.confidences.size()) + " confidences for " +
                        std::to_string(req.labels.size()) + " labels");
  }
  return resp;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Endpoint e) noexcept {
  switch (e) {
    case Endpoint::Chat: return "chat";
    case Endpoint::Embed: return "embed";
    case Endpoint::Tag: return "tag";
  }
  return "unknown";
}

namespace {

std::string key_for(Endpoint endpoint, const std::string& model, const wire::json& body) {
  wire::json envelope = {
      {"endpoint", std::string(to_string(endpoint))},
      {"model", model},
      {"body", body},
  };
  return sha256_hex(envelope.dump());
}

}  // namespace

std::string cache_key(const ChatRequest& req) { return key_for(Endpoint::Chat, req.model, wire::canonical(req)); }
std::string cache_key(const EmbedRequest& req) { return key_for(Endpoint::Embed, req.model, wire::canonical(req)); }
std::string cache_key(const TagRequest& req) { return key_for(Endpoint::Tag, req.model, wire::canonical(req)); }

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw ConfigError("cannot create cache directory " + root_.string() + ": " + ec.message());
}

fs::path ResponseCache::path_for(const std::string& key) const {
  return root_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string ResponseCache::put(const std::string& key, const std::string& payload) const {
  fs::path target = path_for(key);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);

  // Write privately, then hard-link into place: link() refuses to replace
  // an existing file, so exactly one writer wins.
  static std::atomic<std::uint64_t> counter{0};
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache file " + tmp.string());
    out << payload;
  }
  fs::create_hard_link(tmp, target, ec);
  fs::remove(tmp);
  if (!ec) return payload;
  if (auto existing = get(key)) return *existing;
  throw Error("cache write failed for " + target.string() + ": " + ec.message());
}

CachingBackend::CachingBackend(std::shared_ptr<ModelBackend> inner, std::shared_ptr<const ResponseCache> cache,
                               bool read_enabled)
    : inner_(std::move(inner)), cache_(std::move(cache)), read_enabled_(read_enabled) {
  if (!inner_ || !cache_) throw std::invalid_argument("CachingBackend needs an inner backend and a cache");
}

CacheStats CachingBackend::stats() const noexcept { return {hits_.load(), misses_.load()}; }

ChatResponse CachingBackend::do_chat(const ChatRequest& req) {
  const std::string key = cache_key(req);
  if (read_enabled_) {
    if (auto stored = cache_->get(key)) {
      ++hits_;
      ChatResponse resp = wire::decode_chat_response(*stored);
      resp.latency_ms = 0;
      resp.cache_hit = true;
      return resp;
    }
  }
  ++misses_;
  ChatResponse fresh = inner_->chat(req);
  std::string stored = cache_->put(key, wire::encode(fresh).dump());
  ChatResponse resp = wire::decode_chat_response(stored);
  resp.latency_ms = fresh.latency_ms;
  resp.cache_hit = false;
  return resp;
}

EmbedResponse CachingBackend::do_embed(const EmbedRequest& req) {
  const std::string key = cache_key(req);
  if (read_enabled_) {
    if (auto stored = cache_->get(key)) {
      ++hits_;
      EmbedResponse resp = wire::decode_embed_response(*stored);
      resp.cache_hit = true;
      return resp;
    }
  }
  ++misses_;
  EmbedResponse fresh = inner_->embed(req);
  return wire::decode_embed_response(cache_->put(key, wire::encode(fresh).dump()));
}

TagResponse CachingBackend::do_tag(const TagRequest& req) {
  const std::string key = cache_key(req);
  if (read_enabled_) {
    if (auto stored = cache_->get(key)) {
      ++hits_;
      TagResponse resp = wire::decode_tag_response(*stored);
      resp.cache_hit = true;
      return resp;
    }
  }
  ++misses_;
  TagResponse fresh = inner_->tag(req);
  return wire::decode_tag_response(cache_->put(key, wire::encode(fresh).dump()));
}

void DimensionGuard::check(EmbedKind kind, int dim) {
  std::lock_guard lock(mu_);
  auto& mine = kind == EmbedKind::Text ? text_dim_ : image_dim_;
  auto& other = kind == EmbedKind::Text ? image_dim_ : text_dim_;
  if (mine && *mine != dim) {
    throw ConfigError("embedding width changed mid-run: " + std::to_string(*mine) + " vs " + std::to_string(dim));
  }
  if (other && *other != dim) {
    throw ConfigError("text/image embedding width mismatch: " +
                      std::to_string(kind == EmbedKind::Text ? dim : *other) + " (text) vs " +
                      std::to_string(kind == EmbedKind::Text ? *other : dim) + " (image)");
  }
  mine = dim;
}

std::optional<int> DimensionGuard::text_dim() const {
  std::lock_guard lock(mu_);
  return text_dim_;
}

std::optional<int> DimensionGuard::image_dim() const {
  std::lock_guard lock(mu_);
  return image_dim_;
}

}  // namespace coa
