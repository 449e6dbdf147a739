#include <fstream>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "coa/backends.hpp"
#include "coa/errors.hpp"
#include "coa/hashing.hpp"

namespace coa {

namespace fs = std::filesystem;
using nlohmann::json;

int MockChatEntry::specificity() const noexcept {
  int s = 0;
  if (image != "*") ++s;
  if (action) ++s;
  if (template_id != "*") ++s;
  if (subject != "*") ++s;
  if (prompt_contains) ++s;
  if (prompt_sha256) ++s;
  return s;
}

namespace {

bool is_hex_digest(const std::string& s) {
  return s.size() == 64 && s.find_first_not_of("0123456789abcdef") == std::string::npos;
}

std::vector<double> parse_vector(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw InputError("fixture " + where + ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) throw InputError("fixture " + where + ": non-numeric entry");
    out.push_back(x.get<double>());
  }
  return out;
}

std::string get_string(const json& obj, const char* name, const std::string& where) {
  if (!obj.contains(name)) throw InputError("fixture " + where + ": missing '" + name + "'");
  if (!obj.at(name).is_string()) throw InputError("fixture " + where + ": '" + name + "' must be a string");
  return obj.at(name).get<std::string>();
}

}  // namespace

std::shared_ptr<MockBackend> MockBackend::from_file(const fs::path& path, MockOptions opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read fixture file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), path.parent_path(), opts);
}

std::shared_ptr<MockBackend> MockBackend::from_json_text(const std::string& text, const fs::path& base_dir,
                                                         MockOptions opts) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("fixture is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw InputError("fixture root must be an object");

  std::shared_ptr<MockBackend> mock(new MockBackend());
  mock->opts_ = opts;

  if (root.contains("latency_ms")) {
    mock->default_latency_ms_ = root.at("latency_ms").get<std::int64_t>();
    if (mock->default_latency_ms_ < 1) throw InputError("fixture latency_ms must be >= 1");
  }

  if (root.contains("images")) {
    for (const auto& [alias, rel] : root.at("images").items()) {
      if (!rel.is_string()) throw InputError("fixture images." + alias + " must be a path");
      fs::path p = rel.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      auto image = ImagePayload::from_file(p);
      mock->alias_to_digest_[alias] = image->digest;
      mock->digest_to_alias_.emplace(image->digest, alias);
    }
  }

  auto resolve_image = [&](const std::string& ref, const std::string& where) -> std::string {
    if (ref == "*") return ref;
    if (auto it = mock->alias_to_digest_.find(ref); it != mock->alias_to_digest_.end()) return it->second;
    if (is_hex_digest(ref)) return ref;
    throw InputError("fixture " + where + ": unknown image '" + ref + "' (not an alias or sha256 digest)");
  };

  if (root.contains("chat")) {
    const json& chat = root.at("chat");
    if (!chat.is_array()) throw InputError("fixture chat must be an array");
    using Key = std::tuple<std::string, std::string, std::string, std::string, std::string, std::string>;
    std::map<Key, std::size_t> seen;
    for (std::size_t i = 0; i < chat.size(); ++i) {
      const json& e = chat[i];
      const std::string where = "chat[" + std::to_string(i) + "]";
      MockChatEntry entry;
      if (e.contains("prompt_sha256")) entry.prompt_sha256 = get_string(e, "prompt_sha256", where);
      if (e.contains("prompt_contains")) entry.prompt_contains = get_string(e, "prompt_contains", where);
      // Prompt-hash entries may leave image and action open.
      const bool open_ok = entry.prompt_sha256.has_value();
      entry.image = e.contains("image") || !open_ok ? resolve_image(get_string(e, "image", where), where) : "*";
      if (e.contains("action") || !open_ok) {
        auto kind = parse_action_kind(get_string(e, "action", where));
        if (!kind) throw InputError("fixture " + where + ": unknown action");
        entry.action = kind;
      }
      entry.template_id = e.contains("template") ? get_string(e, "template", where) : "*";
      entry.subject = e.contains("subject") ? normalize_label(get_string(e, "subject", where)) : "";
      if (e.contains("subject") && get_string(e, "subject", where) == "*") entry.subject = "*";
      entry.response = get_string(e, "response", where);
      entry.latency_ms = e.contains("latency_ms") ? e.at("latency_ms").get<std::int64_t>() : mock->default_latency_ms_;
      if (entry.latency_ms < 1) throw InputError("fixture " + where + ": latency_ms must be >= 1");

      Key key{entry.image,
              entry.action ? std::string(to_string(*entry.action)) : "*",
              entry.template_id,
              entry.subject,
              entry.prompt_contains.value_or("\x01"),
              entry.prompt_sha256.value_or("\x01")};
      if (auto [it, inserted] = seen.emplace(key, i); !inserted) {
        throw InputError("fixture " + where + ": duplicate key (same as chat[" + std::to_string(it->second) +
                         "]) for image " + mock->describe_image(entry.image) + ", action " + std::get<1>(key));
      }
      mock->chat_.push_back(std::move(entry));
    }
  }

  if (root.contains("embed_text")) {
    for (const auto& [text, vec] : root.at("embed_text").items()) {
      mock->embed_text_[text] = parse_vector(vec, "embed_text['" + text + "']");
    }
  }
  if (root.contains("embed_image")) {
    for (const auto& [ref, vec] : root.at("embed_image").items()) {
      std::string digest = resolve_image(ref, "embed_image");
      if (!mock->embed_image_.emplace(digest, parse_vector(vec, "embed_image['" + ref + "']")).second) {
        throw InputError("fixture embed_image: duplicate entry for " + ref);
      }
    }
  }
  if (root.contains("tag")) {
    for (const auto& [ref, table] : root.at("tag").items()) {
      std::string digest = resolve_image(ref, "tag");
      if (!table.is_object()) throw InputError("fixture tag['" + ref + "'] must be an object");
      auto& slot = mock->tag_[digest];
      if (!slot.empty()) throw InputError("fixture tag: duplicate entry for " + ref);
      for (const auto& [label, conf] : table.items()) {
        if (!conf.is_number()) throw InputError("fixture tag['" + ref + "']['" + label + "'] must be a number");
        double c = conf.get<double>();
        if (c < 0.0 || c > 1.0) throw InputError("fixture tag confidence outside [0,1] for " + label);
        std::string n = normalize_label(label);
        if (!slot.emplace(n, c).second) throw InputError("fixture tag['" + ref + "']: duplicate label " + n);
      }
    }
  }
  return mock;
}

std::shared_ptr<MockBackend> mock_from_fixtures(const fs::path& path, MockOptions opts) {
  return MockBackend::from_file(path, opts);
}

std::string MockBackend::describe_image(const std::string& digest) const {
  if (digest == "*") return "*";
  if (auto it = digest_to_alias_.find(digest); it != digest_to_alias_.end()) return it->second;
  return digest.substr(0, 12);
}

CallCounts MockBackend::calls() const noexcept {
  return {chat_calls_.load(), embed_calls_.load(), tag_calls_.load()};
}

void MockBackend::reset_counts() noexcept {
  chat_calls_ = 0;
  embed_calls_ = 0;
  tag_calls_ = 0;
}

ChatResponse MockBackend::do_chat(const ChatRequest& req) {
  ++chat_calls_;
  const std::string image = req.image ? req.image->digest : "";
  const std::string prompt_hash = sha256_hex(req.prompt);

  const MockChatEntry* best = nullptr;
  int best_score = -1;
  bool tie = false;
  for (const auto& e : chat_) {
    if (e.image != "*" && e.image != image) continue;
    if (e.action && *e.action != req.action) continue;
    if (e.template_id != "*" && e.template_id != req.template_id) continue;
    if (e.subject != "*" && e.subject != req.subject) continue;
    if (e.prompt_contains && req.prompt.find(*e.prompt_contains) == std::string::npos) continue;
    if (e.prompt_sha256 && *e.prompt_sha256 != prompt_hash) continue;
    int score = e.specificity();
    if (score > best_score) {
      best = &e;
      best_score = score;
      tie = false;
    } else if (score == best_score) {
      tie = true;
    }
  }

  const std::string key_desc = "image=" + (req.image ? describe_image(image) : "<none>") +
                               " action=" + std::string(to_string(req.action)) + " template=" + req.template_id +
                               (req.subject.empty() ? "" : " subject=" + req.subject);
  if (!best) throw FixtureMissError("no chat fixture for " + key_desc);
  if (tie) throw FixtureMissError("ambiguous chat fixture for " + key_desc);

  if (opts_.sleep_for_latency) std::this_thread::sleep_for(std::chrono::milliseconds(best->latency_ms));
  return {best->response, best->latency_ms, false};
}

EmbedResponse MockBackend::do_embed(const EmbedRequest& req) {
  ++embed_calls_;
  const std::vector<double>* vec = nullptr;
  if (req.kind == EmbedKind::Text) {
    auto it = embed_text_.find(req.text);
    if (it == embed_text_.end()) throw FixtureMissError("no embed_text fixture for \"" + req.text + "\"");
    vec = &it->second;
  } else {
    auto it = embed_image_.find(req.image->digest);
    if (it == embed_image_.end()) {
      throw FixtureMissError("no embed_image fixture for image " + describe_image(req.image->digest));
    }
    vec = &it->second;
  }
  return {*vec, static_cast<int>(vec->size()), false};
}

TagResponse MockBackend::do_tag(const TagRequest& req) {
  ++tag_calls_;
  const auto* specific = [&]() -> const std::map<std::string, double>* {
    auto it = tag_.find(req.image->digest);
    return it == tag_.end() ? nullptr : &it->second;
  }();
  const auto* any = [&]() -> const std::map<std::string, double>* {
    auto it = tag_.find("*");
    return it == tag_.end() ? nullptr : &it->second;
  }();

  TagResponse resp;
  for (const auto& label : req.labels) {
    const std::string n = normalize_label(label);
    if (specific) {
      if (auto it = specific->find(n); it != specific->end()) {
        resp.confidences.push_back(it->second);
        continue;
      }
    }
    if (any) {
      if (auto it = any->find(n); it != any->end()) {
        resp.confidences.push_back(it->second);
        continue;
      }
    }
    throw FixtureMissError("no tag fixture for image " + describe_image(req.image->digest) + " label '" + label +
                           "'");
  }
  return resp;
}

}  // namespace coa
