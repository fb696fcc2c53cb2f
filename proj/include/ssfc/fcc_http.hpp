#pragma once

// HTTP/JSON front end of the controller.
//
//   POST   /api/register   {function_id, group_id, link_capacity_mbps} -> 200 {token} | 409
//   DELETE /api/register   {function_id, token}                        -> 204 | 401
//   POST   /api/keepalive  {function_id, token}                        -> 200 {token} | 401
//   POST   /api/attack     {function_id, token, attack_class, strength_mbps} -> 202 | 401 | 422
//   GET    /api/status                                                 -> 200 snapshot
//   POST   /api/order      {order: [group_id...]}                      -> 202 | 400
//
// Error bodies are {"error": <code>, "message": <text>}.

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ssfc/clock.hpp"
#include "ssfc/fcc_controller.hpp"
#include "ssfc/json_io.hpp"

namespace ssfc {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::duplicate_registration: return 409;
    case ErrorCode::invalid_token:
    case ErrorCode::unknown_function:
    case ErrorCode::expired: return 401;
    case ErrorCode::implausible_strength: return 422;
    case ErrorCode::topology_error: return 500;
    default: return 400;
  }
}

class FccServer {
 public:
  explicit FccServer(FccController& controller, std::string static_dir = {}) : controller_(controller) {
    routes();
    if (!static_dir.empty()) server_.set_mount_point("/", static_dir);
  }

  ~FccServer() { stop(); }

  FccServer(const FccServer&) = delete;
  FccServer& operator=(const FccServer&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host, int port) {
    if (port == 0) port_ = server_.bind_to_any_port(host);
    else port_ = server_.bind_to_port(host, port) ? port : -1;
    if (port_ <= 0) throw Error(ErrorCode::invalid_argument, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop().
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  template <class Handler>
  auto guarded(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      try {
        h(req, res);
      } catch (const Error& e) {
        res.status = http_status(e.code());
        res.set_content(nlohmann::json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump(),
                        "application/json");
      } catch (const nlohmann::json::exception& e) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", "bad_request"}, {"message", e.what()}}.dump(), "application/json");
      }
    };
  }

  static nlohmann::json body(const httplib::Request& req) { return nlohmann::json::parse(req.body); }

  void routes() {
    server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server_.Post("/api/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto j = body(req);
                   const auto token = controller_.register_function(InstanceId(j.at("function_id").get<std::string>()),
                                                                    FunctionId(j.at("group_id").get<std::string>()),
                                                                    j.at("link_capacity_mbps").get<double>());
                   res.set_content(nlohmann::json{{"token", token}}.dump(), "application/json");
                 }));

    server_.Delete("/api/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
                     const auto j = body(req);
                     controller_.deregister(InstanceId(j.at("function_id").get<std::string>()),
                                            j.at("token").get<std::string>());
                     res.status = 204;
                   }));

    server_.Post("/api/keepalive", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto j = body(req);
                   const auto token = controller_.keepalive(InstanceId(j.at("function_id").get<std::string>()),
                                                            j.at("token").get<std::string>());
                   res.set_content(nlohmann::json{{"token", token}}.dump(), "application/json");
                 }));

    server_.Post("/api/attack", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto j = body(req);
                   AttackReport r;
                   r.function_id = InstanceId(j.at("function_id").get<std::string>());
                   r.token = j.at("token").get<std::string>();
                   r.attack_class = ClassId(j.at("attack_class").get<std::string>());
                   r.strength = j.at("strength_mbps").get<double>();
                   controller_.report_attack(r);
                   res.status = 202;
                   res.set_content(R"({"accepted":true})", "application/json");
                 }));

    server_.Get("/api/status", guarded([this](const httplib::Request&, httplib::Response& res) {
                  res.set_content(to_json(controller_.status()).dump(), "application/json");
                }));

    server_.Post("/api/order", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto j = body(req);
                   const auto epoch = controller_.apply_order(order_from_json(j.at("order")), Trigger::manual);
                   res.status = 202;
                   res.set_content(nlohmann::json{{"epoch", epoch}}.dump(), "application/json");
                 }));
  }

  FccController& controller_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace ssfc
