#pragma once

#include <charconv>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include <httplib.h>

#include "bankxai/api.hpp"
#include "bankxai/error.hpp"

namespace bankxai {

struct ListenAddress {
  std::string host;
  int port = 0;
};

// "host:port" or ":port" (all interfaces).
inline ListenAddress parse_listen_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::kConfig, "listen address must be host:port, got '" + text + "'");
  ListenAddress addr;
  addr.host = colon == 0 ? "0.0.0.0" : text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  auto res = std::from_chars(port.data(), port.data() + port.size(), addr.port);
  if (res.ec != std::errc{} || res.ptr != port.data() + port.size() || addr.port < 0 || addr.port > 65535) {
    throw Error(ErrorKind::kConfig, "bad port in listen address '" + text + "'");
  }
  return addr;
}

// Adapts ApiService onto an httplib server. Construction binds the socket,
// so a busy port fails here rather than inside run().
class HttpServer {
 public:
  HttpServer(std::shared_ptr<ApiService> api, const std::string& listen) : api_(std::move(api)) {
    const ListenAddress addr = parse_listen_address(listen);
    auto handler = [this](const httplib::Request& req, httplib::Response& res) { dispatch(req, res); };
    const std::string any = R"(/[a-z]*)";
    server_.Get(any, handler);
    server_.Post(any, handler);
    // Other verbs reach the router too so they get a JSON 405.
    server_.Put(any, handler);
    server_.Delete(any, handler);
    server_.Patch(any, handler);
    // httplib's default also sets SO_REUSEPORT, which would let a second
    // server share the port silently.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    if (addr.port == 0) {
      port_ = server_.bind_to_any_port(addr.host);
      if (port_ < 0) throw Error(ErrorKind::kIo, "cannot listen on " + addr.host);
    } else {
      if (!server_.bind_to_port(addr.host, addr.port)) {
        throw Error(ErrorKind::kIo, "cannot listen on " + listen + " (address in use?)");
      }
      port_ = addr.port;
    }
  }

  int port() const { return port_; }

  // Blocks until stop().
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  void dispatch(const httplib::Request& req, httplib::Response& res) {
    ApiRequest api_req;
    api_req.method = req.method;
    api_req.path = req.path;
    for (const auto& [k, v] : req.params) api_req.query.emplace(k, v);
    api_req.body = req.body;
    const ApiResponse out = api_->handle(api_req);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  }

  std::shared_ptr<ApiService> api_;
  httplib::Server server_;
  int port_ = 0;
};

}  // namespace bankxai
