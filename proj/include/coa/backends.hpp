#pragma once

// Clients for the three model services (chat, embed, tag), a scripted
// mock that answers all three from a fixture file, and a content-addressed
// response cache that can sit in front of either.
//
// Wire protocol: JSON over HTTP POST to /chat, /embed and /tag. See
// wire.hpp for the exact schemas.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "coa/domain.hpp"

namespace coa {

struct ImagePayload {
  std::string bytes;
  std::string media_type = "image/jpeg";
  std::string digest;  // sha256 of bytes

  static std::shared_ptr<const ImagePayload> from_bytes(std::string bytes, std::string media_type);
  // Media type guessed from the extension. Throws InputError if unreadable.
  static std::shared_ptr<const ImagePayload> from_file(const std::filesystem::path& path);
};

using ImageHandle = std::shared_ptr<const ImagePayload>;

// Default decoding for action prompts and for Yes/No questions.
inline constexpr int kActionMaxTokens = 256;
inline constexpr int kYesNoMaxTokens = 64;

struct ChatRequest {
  std::string model;
  std::string prompt;
  ImageHandle image;  // may be null
  int max_tokens = kActionMaxTokens;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;

  // Routing hints. Real models ignore them; the scripted mock keys on them.
  ActionKind action = ActionKind::Caption;
  std::string template_id = "default";
  std::string subject;  // the entity under test for Self-Correct

  void validate() const;  // throws std::invalid_argument
};

struct ChatResponse {
  std::string text;
  std::int64_t latency_ms = 0;
  bool cache_hit = false;
};

enum class EmbedKind { Text, Image };

struct EmbedRequest {
  std::string model;
  EmbedKind kind = EmbedKind::Text;
  std::string text;   // when kind == Text
  ImageHandle image;  // when kind == Image

  void validate() const;
};

struct EmbedResponse {
  std::vector<double> vector;
  int dim = 0;
  bool cache_hit = false;
};

struct TagRequest {
  std::string model;
  ImageHandle image;
  std::vector<std::string> labels;

  void validate() const;  // non-empty labels, image present
};

struct TagResponse {
  std::vector<double> confidences;
  bool cache_hit = false;
};

// A service handle. Implementations are shareable across threads.
// The public entry points validate the request before any call goes out.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  ChatResponse chat(const ChatRequest& req);
  EmbedResponse embed(const EmbedRequest& req);
  // Result is length-checked against req.labels (ProtocolError otherwise).
  TagResponse tag(const TagRequest& req);

 protected:
  virtual ChatResponse do_chat(const ChatRequest& req) = 0;
  virtual EmbedResponse do_embed(const EmbedRequest& req) = 0;
  virtual TagResponse do_tag(const TagRequest& req) = 0;
};

struct CallCounts {
  std::int64_t chat = 0;
  std::int64_t embed = 0;
  std::int64_t tag = 0;
  std::int64_t total() const noexcept { return chat + embed + tag; }
};

// ---------------------------------------------------------------------------
// Scripted mock

struct MockChatEntry {
  std::string image;        // digest or "*"
  std::optional<ActionKind> action;
  std::string template_id;  // "*" matches any
  std::string subject;      // "*" matches any
  std::optional<std::string> prompt_contains;
  std::optional<std::string> prompt_sha256;
  std::string response;
  std::int64_t latency_ms = 0;

  int specificity() const noexcept;
};

struct MockOptions {
  // Sleep for the synthetic latency instead of only reporting it.
  bool sleep_for_latency = false;
};

// Answers chat by (image digest, action, template id, subject) plus optional
// prompt conditions; embed and tag from explicit tables. Any request the
// fixture does not cover raises FixtureMissError naming the key.
class MockBackend final : public ModelBackend {
 public:
  // Fixture schema (JSON):
  //   latency_ms:  default synthetic latency per chat call (>= 1, default 1)
  //   images:      {alias: path relative to the fixture file}
  //   chat:        [{image, action, template?, subject?, prompt_contains?,
  //                  prompt_sha256?, response, latency_ms?}]
  //   embed_text:  {text: [floats]}
  //   embed_image: {alias-or-digest: [floats]}
  //   tag:         {alias-or-digest-or-"*": {label: confidence}}
  static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path, MockOptions opts = {});
  static std::shared_ptr<MockBackend> from_json_text(const std::string& text,
                                                     const std::filesystem::path& base_dir,
                                                     MockOptions opts = {});

  CallCounts calls() const noexcept;
  void reset_counts() noexcept;

  // Human-readable name for an image digest (the alias if one exists).
  std::string describe_image(const std::string& digest) const;

 protected:
  ChatResponse do_chat(const ChatRequest& req) override;
  EmbedResponse do_embed(const EmbedRequest& req) override;
  TagResponse do_tag(const TagRequest& req) override;

 private:
  MockBackend() = default;

  MockOptions opts_;
  std::int64_t default_latency_ms_ = 1;
  std::map<std::string, std::string> alias_to_digest_;
  std::map<std::string, std::string> digest_to_alias_;
  std::vector<MockChatEntry> chat_;
  std::map<std::string, std::vector<double>> embed_text_;
  std::map<std::string, std::vector<double>> embed_image_;
  std::map<std::string, std::map<std::string, double>> tag_;

  std::atomic<std::int64_t> chat_calls_{0};
  std::atomic<std::int64_t> embed_calls_{0};
  std::atomic<std::int64_t> tag_calls_{0};
};

std::shared_ptr<MockBackend> mock_from_fixtures(const std::filesystem::path& path, MockOptions opts = {});

// ---------------------------------------------------------------------------
// HTTP client

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds request_timeout{120};
};

struct HttpEndpoints {
  std::string chat_url;  // base URL; "/chat" is appended
  std::string embed_url;
  std::string tag_url;
  std::optional<std::string> bearer_token;
};

class HttpBackend final : public ModelBackend {
 public:
  explicit HttpBackend(HttpEndpoints endpoints, RetryPolicy retry = {});

  CallCounts calls() const noexcept;

 protected:
  ChatResponse do_chat(const ChatRequest& req) override;
  EmbedResponse do_embed(const EmbedRequest& req) override;
  TagResponse do_tag(const TagRequest& req) override;

 private:
  // POST body to base_url + path with retries. Returns the response body.
  std::string post(const std::string& base_url, const std::string& path, const std::string& body);

  HttpEndpoints endpoints_;
  RetryPolicy retry_;
  std::atomic<std::int64_t> chat_calls_{0};
  std::atomic<std::int64_t> embed_calls_{0};
  std::atomic<std::int64_t> tag_calls_{0};
};

// ---------------------------------------------------------------------------
// Cache

enum class Endpoint { Chat, Embed, Tag };

std::string_view to_string(Endpoint e) noexcept;

// sha256 over the endpoint name, model id and canonical request JSON with
// the image bytes replaced by their digest. Stable across runs and hosts.
std::string cache_key(const ChatRequest& req);
std::string cache_key(const EmbedRequest& req);
std::string cache_key(const TagRequest& req);

// One file per key under root/<first two hex chars>/<key>.json.
// Concurrent readers are fine; the first completed write for a key wins
// and later writers get the winner's bytes back.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  std::optional<std::string> get(const std::string& key) const;
  // Returns the bytes that are stored for key after the call.
  std::string put(const std::string& key, const std::string& payload) const;

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path root_;
};

struct CacheStats {
  std::int64_t hits = 0;
  std::int64_t misses = 0;
};

// Decorator: answers from the cache when allowed, else forwards to the
// inner backend and stores the result.
class CachingBackend final : public ModelBackend {
 public:
  CachingBackend(std::shared_ptr<ModelBackend> inner, std::shared_ptr<const ResponseCache> cache,
                 bool read_enabled = true);

  CacheStats stats() const noexcept;
  ModelBackend& inner() noexcept { return *inner_; }

 protected:
  ChatResponse do_chat(const ChatRequest& req) override;
  EmbedResponse do_embed(const EmbedRequest& req) override;
  TagResponse do_tag(const TagRequest& req) override;

 private:
  std::shared_ptr<ModelBackend> inner_;
  std::shared_ptr<const ResponseCache> cache_;
  bool read_enabled_;
  std::atomic<std::int64_t> hits_{0};
  std::atomic<std::int64_t> misses_{0};
};

// Records the embedding width seen for text and image inputs during a run
// and raises ConfigError on the first disagreement.
class DimensionGuard {
 public:
  void check(EmbedKind kind, int dim);
  std::optional<int> text_dim() const;
  std::optional<int> image_dim() const;

 private:
  mutable std::mutex mu_;
  std::optional<int> text_dim_;
  std::optional<int> image_dim_;
};

}  // namespace coa
