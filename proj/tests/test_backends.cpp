#include <doctest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <thread>

#include "coa/backends.hpp"
#include "coa/errors.hpp"
#include "coa/hashing.hpp"
#include "coa/server.hpp"
#include "coa/wire.hpp"
#include "test_support.hpp"

using namespace coa;
using coa_test::TempDir;

namespace {

ImageHandle image_of(const std::string& bytes) { return ImagePayload::from_bytes(bytes, "image/jpeg"); }

ChatRequest chat_req(ImageHandle img, ActionKind action, std::string prompt = "p", std::string subject = "") {
  ChatRequest r;
  r.model = "m";
  r.prompt = std::move(prompt);
  r.image = std::move(img);
  r.action = action;
  r.subject = std::move(subject);
  return r;
}

// Two images on disk plus a fixture naming them.
struct MockWorld {
  TempDir dir;
  ImageHandle a;
  ImageHandle b;
  std::shared_ptr<MockBackend> mock;

  explicit MockWorld(const std::string& extra_chat = "") {
    coa_test::write_file(dir / "a.jpg", "image-a");
    coa_test::write_file(dir / "b.jpg", "image-b");
    a = ImagePayload::from_file(dir / "a.jpg");
    b = ImagePayload::from_file(dir / "b.jpg");
    std::string fixture = R"({
      "latency_ms": 7,
      "images": {"a": "a.jpg", "b": "b.jpg"},
      "chat": [
        {"image": "a", "action": "caption", "response": "a dog"},
        {"image": "*", "action": "caption", "response": "something"},
        {"image": "a", "action": "self_correct", "subject": "dog", "response": "Yes"},
        {"image": "a", "action": "self_correct", "subject": "*", "response": "No"},
        {"image": "a", "action": "final", "template": "v2", "response": "v2 answer", "latency_ms": 3},
        {"image": "a", "action": "final", "response": "default answer"},
        {"image": "a", "action": "final", "prompt_contains": "special", "response": "special answer"})" +
                          extra_chat + R"(
      ],
      "embed_text": {"hello": [1, 0, 0]},
      "embed_image": {"a": [0, 1, 0]},
      "tag": {"a": {"Dogs": 0.9}, "*": {"dog": 0.5, "cat": 0.25}}
    })";
    coa_test::write_file(dir / "mock.json", fixture);
    mock = MockBackend::from_file(dir / "mock.json");
  }
};

}  // namespace

TEST_CASE("sha256 and base64 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(base64_encode("hello") == "aGVsbG8=");
  CHECK(base64_decode("aGVsbG8=") == "hello");
  CHECK(base64_decode(base64_encode(std::string("\0\1\2\xff", 4))) == std::string("\0\1\2\xff", 4));
  CHECK_THROWS_AS(base64_decode("a$b="), ProtocolError);
}

TEST_CASE("request validation") {
  auto img = image_of("x");
  auto r = chat_req(img, ActionKind::Caption);
  CHECK_NOTHROW(r.validate());
  r.max_tokens = 0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  r.max_tokens = 1;
  r.temperature = -0.1;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);

  TagRequest t;
  t.model = "ram";
  t.image = img;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t.labels = {"dog"};
  CHECK_NOTHROW(t.validate());
  t.image = nullptr;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("wire round trips") {
  auto img = image_of(std::string("\x89PNG\0data", 9));
  auto req = chat_req(img, ActionKind::SelfCorrect, "Is there a dog?", "dog");
  req.seed = 42;
  req.template_id = "v2";
  auto back = wire::decode_chat_request(wire::encode(req));
  CHECK(back.prompt == req.prompt);
  CHECK(back.image->bytes == img->bytes);
  CHECK(back.image->digest == img->digest);
  CHECK(back.action == ActionKind::SelfCorrect);
  CHECK(back.subject == "dog");
  CHECK(back.template_id == "v2");
  CHECK(back.seed == 42);

  EmbedRequest e{"clip", EmbedKind::Image, "", img};
  auto e2 = wire::decode_embed_request(wire::encode(e));
  CHECK(e2.kind == EmbedKind::Image);
  CHECK(e2.image->bytes == img->bytes);

  TagRequest t{"ram", img, {"dog", "cat"}};
  CHECK(wire::decode_tag_request(wire::encode(t)).labels == t.labels);

  CHECK(wire::decode_chat_response(R"({"text":"hi","latency_ms":5})").text == "hi");
  auto er = wire::decode_embed_response(R"({"vector":[1,2],"dim":2})");
  CHECK(er.vector == std::vector<double>{1, 2});
}

TEST_CASE("wire response validation keeps the raw payload") {
  CHECK_THROWS_AS(wire::decode_embed_response(R"({"vector":[1,2],"dim":3})"), ProtocolError);
  CHECK_THROWS_AS(wire::decode_tag_response(R"({"confidences":[1.5]})"), ProtocolError);
  CHECK_THROWS_AS(wire::decode_chat_response("not json"), ProtocolError);
  try {
    wire::decode_chat_response(R"({"txt":"x"})");
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.raw_payload() == R"({"txt":"x"})");
  }
}

TEST_CASE("canonical form replaces image bytes with the digest") {
  auto img = image_of("bytes");
  auto c = wire::canonical(chat_req(img, ActionKind::Caption));
  CHECK(c.at("image").at("sha256") == img->digest);
  CHECK_FALSE(c.at("image").contains("data"));
}

TEST_CASE("cache keys change with every request field") {
  auto img = image_of("x");
  auto base = chat_req(img, ActionKind::Caption);
  std::string k = cache_key(base);
  CHECK(k.size() == 64);
  CHECK(cache_key(base) == k);

  auto m = base;
  m.model = "other";
  CHECK(cache_key(m) != k);
  auto p = base;
  p.prompt = "q";
  CHECK(cache_key(p) != k);
  auto i = base;
  i.image = image_of("y");
  CHECK(cache_key(i) != k);
  auto s = base;
  s.seed = 1;
  CHECK(cache_key(s) != k);

  EmbedRequest e{"m", EmbedKind::Text, "p", nullptr};
  CHECK(cache_key(e) != k);
}

TEST_CASE("mock answers by most specific entry") {
  MockWorld w;
  CHECK(w.mock->chat(chat_req(w.a, ActionKind::Caption)).text == "a dog");
  CHECK(w.mock->chat(chat_req(w.b, ActionKind::Caption)).text == "something");
  CHECK(w.mock->chat(chat_req(w.a, ActionKind::SelfCorrect, "p", "dog")).text == "Yes");
  CHECK(w.mock->chat(chat_req(w.a, ActionKind::SelfCorrect, "p", "cat")).text == "No");

  auto fin = chat_req(w.a, ActionKind::Final);
  auto r = w.mock->chat(fin);
  CHECK(r.text == "default answer");
  CHECK(r.latency_ms == 7);
  fin.template_id = "v2";
  r = w.mock->chat(fin);
  CHECK(r.text == "v2 answer");
  CHECK(r.latency_ms == 3);
  fin.template_id = "default";
  fin.prompt = "a special prompt";
  CHECK(w.mock->chat(fin).text == "special answer");
  CHECK(w.mock->calls().chat == 7);
}

TEST_CASE("mock misses name the key") {
  MockWorld w;
  try {
    w.mock->chat(chat_req(w.b, ActionKind::Relationship));
    FAIL("expected a miss");
  } catch (const FixtureMissError& e) {
    std::string msg = e.what();
    CHECK(msg.find("b") != std::string::npos);
    CHECK(msg.find("relationship") != std::string::npos);
  }
  CHECK_THROWS_AS(w.mock->embed({"clip", EmbedKind::Text, "bye", nullptr}), FixtureMissError);
  CHECK_THROWS_AS(w.mock->embed({"clip", EmbedKind::Image, "", w.b}), FixtureMissError);
  CHECK_THROWS_AS(w.mock->tag({"ram", w.a, {"horse"}}), FixtureMissError);
  CHECK(w.mock->tag({"ram", w.a, {"cat"}}).confidences == std::vector<double>{0.25});
}

TEST_CASE("mock ambiguity at equal specificity is a miss") {
  MockWorld w(R"(, {"image": "*", "action": "final", "prompt_contains": "special", "template": "default", "response": "other"})");
  auto fin = chat_req(w.a, ActionKind::Final, "special");
  CHECK_THROWS_AS(w.mock->chat(fin), FixtureMissError);
}

TEST_CASE("mock embed and tag tables") {
  MockWorld w;
  auto e = w.mock->embed({"clip", EmbedKind::Text, "hello", nullptr});
  CHECK(e.vector == std::vector<double>{1, 0, 0});
  CHECK(e.dim == 3);
  CHECK(w.mock->embed({"clip", EmbedKind::Image, "", w.a}).vector == std::vector<double>{0, 1, 0});
  CHECK(w.mock->tag({"ram", w.a, {"dog"}}).confidences == std::vector<double>{0.9});
  CHECK(w.mock->tag({"ram", w.b, {"cat", "dog"}}).confidences == std::vector<double>{0.25, 0.5});
}

TEST_CASE("fixture loading errors") {
  TempDir dir;
  auto load = [&](const std::string& text) { return MockBackend::from_json_text(text, dir.path()); };
  CHECK_THROWS_AS(load("[]"), InputError);
  CHECK_THROWS_AS(load(R"({"latency_ms": 0})"), InputError);
  CHECK_THROWS_AS(load(R"({"chat": [{"image": "nope", "action": "caption", "response": ""}]})"), InputError);
  CHECK_THROWS_AS(load(R"({"chat": [{"image": "*", "action": "cap", "response": ""}]})"), InputError);
  CHECK_THROWS_AS(load(R"({"chat": [{"image": "*", "action": "caption", "response": "1"},
                                    {"image": "*", "action": "caption", "response": "2"}]})"),
                  InputError);
  CHECK_THROWS_AS(load(R"({"tag": {"*": {"dog": 1.5}}})"), InputError);
  CHECK_THROWS_AS(load(R"({"images": {"x": "missing.jpg"}})"), InputError);
  CHECK_NOTHROW(load(R"({"chat": [{"prompt_sha256": "00", "response": "r"}]})"));
}

TEST_CASE("response cache stores and returns bytes") {
  TempDir dir;
  ResponseCache cache(dir / "cache");
  CHECK_FALSE(cache.get("ab12"));
  CHECK(cache.put("ab12", "first") == "first");
  CHECK(cache.get("ab12") == std::optional<std::string>("first"));
  // First writer wins.
  CHECK(cache.put("ab12", "second") == "first");
  CHECK(std::filesystem::exists(dir / "cache" / "ab" / "ab12.json"));
}

TEST_CASE("concurrent writers to one cache key agree") {
  TempDir dir;
  ResponseCache cache(dir / "cache");
  std::vector<std::string> seen(8);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { seen[i] = cache.put("cafe", "writer-" + std::to_string(i)); });
  }
  for (auto& t : threads) t.join();
  for (const auto& s : seen) CHECK(s == seen[0]);
  CHECK(cache.get("cafe") == seen[0]);
}

TEST_CASE("caching backend hits skip the inner backend") {
  MockWorld w;
  TempDir dir;
  auto cache = std::make_shared<const ResponseCache>(dir / "cache");
  CachingBackend cached(w.mock, cache);
  auto req = chat_req(w.a, ActionKind::Caption);
  auto first = cached.chat(req);
  CHECK(first.text == "a dog");
  CHECK(first.latency_ms == 7);
  CHECK_FALSE(first.cache_hit);
  auto second = cached.chat(req);
  CHECK(second.text == "a dog");
  CHECK(second.latency_ms == 0);
  CHECK(second.cache_hit);
  CHECK(w.mock->calls().chat == 1);
  CHECK(cached.stats().hits == 1);
  CHECK(cached.stats().misses == 1);

  cached.embed({"clip", EmbedKind::Text, "hello", nullptr});
  cached.tag({"ram", w.a, {"dog"}});
  auto e = cached.embed({"clip", EmbedKind::Text, "hello", nullptr});
  auto t = cached.tag({"ram", w.a, {"dog"}});
  CHECK(e.cache_hit);
  CHECK(t.cache_hit);
  CHECK(t.confidences == std::vector<double>{0.9});
  CHECK(w.mock->calls().total() == 3);

  // Write-only mode never reads.
  CachingBackend write_only(w.mock, cache, false);
  CHECK_FALSE(write_only.chat(req).cache_hit);
  CHECK(w.mock->calls().chat == 2);
}

TEST_CASE("dimension guard") {
  DimensionGuard g;
  g.check(EmbedKind::Text, 512);
  g.check(EmbedKind::Image, 512);
  g.check(EmbedKind::Text, 512);
  CHECK(g.text_dim() == 512);
  CHECK_THROWS_AS(g.check(EmbedKind::Text, 768), ConfigError);
  CHECK_THROWS_AS(g.check(EmbedKind::Image, 256), ConfigError);
}

TEST_CASE("HTTP client against the mock server") {
  MockWorld w;
  BackendServer server(w.mock);
  server.start();
  HttpEndpoints eps{server.base_url(), server.base_url(), server.base_url(), "secret"};
  HttpBackend http(eps, RetryPolicy{1, std::chrono::milliseconds(1), std::chrono::seconds(5)});

  auto r = http.chat(chat_req(w.a, ActionKind::Caption));
  CHECK(r.text == "a dog");
  CHECK(r.latency_ms >= 1);
  CHECK(http.embed({"clip", EmbedKind::Image, "", w.a}).vector == std::vector<double>{0, 1, 0});
  CHECK(http.tag({"ram", w.a, {"dog"}}).confidences == std::vector<double>{0.9});
  // A fixture miss is a 400, surfaced as a protocol error.
  CHECK_THROWS_AS(http.chat(chat_req(w.b, ActionKind::Relationship)), ProtocolError);
  CHECK(http.calls().total() == 4);
  server.stop();
}

TEST_CASE("mock server rejects malformed requests") {
  MockWorld w;
  BackendServer server(w.mock);
  int port = server.start();
  httplib::Client client("127.0.0.1", port);
  auto ready = client.Get("/ready");
  REQUIRE(ready);
  CHECK(ready->status == 200);
  auto bad = client.Post("/chat", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto missing = client.Post("/tag", R"({"model":"ram","labels":[]})", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 400);
  server.stop();
}

TEST_CASE("HTTP retries 5xx and gives up with a transport error") {
  httplib::Server flaky;
  std::atomic<int> hits{0};
  flaky.Post("/chat", [&](const httplib::Request&, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 503;
      res.set_content(R"({"error":"loading"})", "application/json");
      return;
    }
    res.set_content(R"({"text":"finally","latency_ms":1})", "application/json");
  });
  flaky.Post("/embed", [&](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  int port = flaky.bind_to_any_port("127.0.0.1");
  std::thread t([&] { flaky.listen_after_bind(); });
  flaky.wait_until_ready();
  std::string url = "http://127.0.0.1:" + std::to_string(port);

  HttpBackend http({url, url, url, std::nullopt}, RetryPolicy{3, std::chrono::milliseconds(1), std::chrono::seconds(5)});
  CHECK(http.chat(chat_req(image_of("x"), ActionKind::Caption)).text == "finally");
  CHECK(hits == 3);
  CHECK_THROWS_AS(http.embed({"clip", EmbedKind::Text, "t", nullptr}), TransportError);

  flaky.stop();
  t.join();

  // Nothing listening at all.
  HttpBackend dead({url, url, url, std::nullopt}, RetryPolicy{2, std::chrono::milliseconds(1), std::chrono::seconds(1)});
  CHECK_THROWS_AS(dead.chat(chat_req(image_of("x"), ActionKind::Caption)), TransportError);
}

TEST_CASE("endpoint URLs must carry a scheme") {
  HttpBackend http({"localhost:1", "", "", std::nullopt});
  CHECK_THROWS_AS(http.chat(chat_req(image_of("x"), ActionKind::Caption)), ConfigError);
  CHECK_THROWS_AS(http.embed({"clip", EmbedKind::Text, "t", nullptr}), ConfigError);
}
