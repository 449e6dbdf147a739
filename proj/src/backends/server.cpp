#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "coa/server.hpp"

#include "coa/errors.hpp"
#include "coa/wire.hpp"

namespace coa {

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(wire::json{{"error", message}}.dump(), "application/json");
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      wire::json body = wire::json::parse(req.body);
      res.set_content(handler(body).dump(), "application/json");
    } catch (const wire::json::exception& e) {
      reply_error(res, 400, std::string("bad request: ") + e.what());
    } catch (const ProtocolError& e) {
      reply_error(res, 400, e.what());
    } catch (const FixtureMissError& e) {
      reply_error(res, 400, e.what());
    } catch (const std::invalid_argument& e) {
      reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what());
    }
  };
}

}  // namespace

BackendServer::BackendServer(std::shared_ptr<ModelBackend> backend)
    : backend_(std::move(backend)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

BackendServer::~BackendServer() { stop(); }

void BackendServer::install_routes() {
  server_->Get("/ready", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"ready":true})", "application/json");
  });
  server_->Post("/chat", guarded([this](const wire::json& j) {
    return wire::encode(backend_->chat(wire::decode_chat_request(j)));
  }));
  server_->Post("/embed", guarded([this](const wire::json& j) {
    return wire::encode(backend_->embed(wire::decode_embed_request(j)));
  }));
  server_->Post("/tag", guarded([this](const wire::json& j) {
    return wire::encode(backend_->tag(wire::decode_tag_request(j)));
  }));
}

int BackendServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void BackendServer::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
}

void BackendServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string BackendServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace coa
