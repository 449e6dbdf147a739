#pragma once

#include <memory>
#include <string>
#include <thread>

#include "coa/backends.hpp"

namespace httplib {
class Server;
}

namespace coa {

// Serves /chat, /embed, /tag and /ready over HTTP on top of any backend
// (normally the scripted mock). Errors map to 400 for bad requests and
// missing fixtures, 500 for anything else.
class BackendServer {
 public:
  explicit BackendServer(std::shared_ptr<ModelBackend> backend);
  ~BackendServer();

  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  // Binds and serves on a background thread. port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  std::string base_url() const;

 private:
  void install_routes();

  std::shared_ptr<ModelBackend> backend_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace coa
