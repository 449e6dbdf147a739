#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <thread>

#include "coa/backends.hpp"
#include "coa/errors.hpp"
#include "coa/wire.hpp"

namespace coa {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.origin = url;
  } else {
    out.origin = url.substr(0, path_start);
    out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  auto d = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  // A real round trip never reports zero; zero is reserved for cache hits.
  return std::max<std::int64_t>(1, d.count());
}

}  // namespace

HttpBackend::HttpBackend(HttpEndpoints endpoints, RetryPolicy retry)
    : endpoints_(std::move(endpoints)), retry_(retry) {
  if (retry_.attempts < 1) throw ConfigError("retry attempts must be >= 1");
}

CallCounts HttpBackend::calls() const noexcept {
  return {chat_calls_.load(), embed_calls_.load(), tag_calls_.load()};
}

std::string HttpBackend::post(const std::string& base_url, const std::string& path, const std::string& body) {
  if (base_url.empty()) throw ConfigError("no endpoint configured for " + path);
  const SplitUrl url = split_url(base_url);
  const std::string full_path = url.prefix + path;

  std::string last_error;
  auto backoff = retry_.initial_backoff;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    httplib::Client client(url.origin);
    client.set_connection_timeout(retry_.request_timeout);
    client.set_read_timeout(retry_.request_timeout);
    client.set_write_timeout(retry_.request_timeout);
    if (endpoints_.bearer_token) client.set_bearer_token_auth(*endpoints_.bearer_token);

    auto res = client.Post(full_path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      return res->body;
    } else if (res->status >= 500) {
      // 503 while models load, or a crashed worker: worth another try.
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      throw ProtocolError("HTTP " + std::to_string(res->status) + " from " + url.origin + full_path, res->body);
    }
    if (attempt < retry_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError(url.origin + full_path + " failed after " + std::to_string(retry_.attempts) +
                       " attempts: " + last_error);
}

ChatResponse HttpBackend::do_chat(const ChatRequest& req) {
  ++chat_calls_;
  auto start = std::chrono::steady_clock::now();
  std::string body = post(endpoints_.chat_url, "/chat", wire::encode(req).dump());
  ChatResponse resp = wire::decode_chat_response(body);
  resp.latency_ms = elapsed_ms(start);
  resp.cache_hit = false;
  return resp;
}

EmbedResponse HttpBackend::do_embed(const EmbedRequest& req) {
  ++embed_calls_;
  return wire::decode_embed_response(post(endpoints_.embed_url, "/embed", wire::encode(req).dump()));
}

TagResponse HttpBackend::do_tag(const TagRequest& req) {
  ++tag_calls_;
  return wire::decode_tag_response(post(endpoints_.tag_url, "/tag", wire::encode(req).dump()));
}

}  // namespace coa
