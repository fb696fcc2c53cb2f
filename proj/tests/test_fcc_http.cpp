#include <gtest/gtest.h>

#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ssfc/fcc_http.hpp"

using namespace ssfc;
using nlohmann::json;

namespace {

// A live controller behind a real socket on an ephemeral port.
class LiveFcc : public ::testing::Test {
 protected:
  void SetUp() override {
    ControllerConfig cfg;
    cfg.default_order = ChainOrder{"DPS", "FW", "IDPS"};
    clock_ = std::make_shared<ManualClock>(1'700'000'000.25);
    controller_ = std::make_unique<FccController>(cfg, clock_, nullptr);
    server_ = std::make_unique<FccServer>(*controller_);
    port_ = server_->start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override { server_->stop(); }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  std::string register_fn(const std::string& id, const std::string& group, double cap = 1000.0) {
    auto res = post("/api/register", {{"function_id", id}, {"group_id", group}, {"link_capacity_mbps", cap}});
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
    return json::parse(res->body).at("token").get<std::string>();
  }

  json status() {
    auto res = client_->Get("/api/status");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    return json::parse(res->body);
  }

  static std::string error_of(const httplib::Result& res) { return json::parse(res->body).at("error").get<std::string>(); }

  std::shared_ptr<ManualClock> clock_;
  std::unique_ptr<FccController> controller_;
  std::unique_ptr<FccServer> server_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

}  // namespace

TEST_F(LiveFcc, RegisterReturnsTokenAndConflictsOnDuplicate) {
  const auto token = register_fn("fw-1", "FW");
  EXPECT_FALSE(token.empty());
  auto res = post("/api/register", {{"function_id", "fw-1"}, {"group_id", "FW"}, {"link_capacity_mbps", 1000}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  EXPECT_EQ(error_of(res), "duplicate_registration");
}

TEST_F(LiveFcc, RegisterRejectsUnknownGroupAndMalformedBodies) {
  auto res = post("/api/register", {{"function_id", "waf-1"}, {"group_id", "WAF"}, {"link_capacity_mbps", 1000}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(error_of(res), "unknown_group");

  res = post("/api/register", {{"function_id", "fw-1"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(error_of(res), "bad_request");

  res = client_->Post("/api/register", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST_F(LiveFcc, TokenReuseAfterRotationIsRejected) {
  const auto first = register_fn("dps-1", "DPS");
  auto res = post("/api/keepalive", {{"function_id", "dps-1"}, {"token", first}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto second = json::parse(res->body).at("token").get<std::string>();
  EXPECT_NE(second, first);

  res = post("/api/keepalive", {{"function_id", "dps-1"}, {"token", first}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);
  EXPECT_EQ(error_of(res), "invalid_token");

  res = post("/api/attack", {{"function_id", "dps-1"}, {"token", first}, {"attack_class", "syn"}, {"strength_mbps", 10}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);

  res = post("/api/attack", {{"function_id", "dps-1"}, {"token", second}, {"attack_class", "syn"}, {"strength_mbps", 10}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 202);
}

TEST_F(LiveFcc, ImplausibleStrengthIs422) {
  const auto token = register_fn("fw-1", "FW", 1000.0);
  auto res = post("/api/attack", {{"function_id", "fw-1"}, {"token", token}, {"attack_class", "syn"}, {"strength_mbps", 5000}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 422);
  EXPECT_EQ(error_of(res), "implausible_strength");

  res = post("/api/attack", {{"function_id", "fw-1"}, {"token", token}, {"attack_class", "syn"}, {"strength_mbps", 500}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 202);
  const auto st = status();
  for (const auto& g : st.at("groups"))
    EXPECT_EQ(g.at("attack_counter").get<int>(), g.at("group_id") == "FW" ? 1 : 0);
}

TEST_F(LiveFcc, GracefulDeregistrationRemovesFromStatus) {
  const auto token = register_fn("idps-1", "IDPS");
  register_fn("fw-1", "FW");
  EXPECT_EQ(status().at("registry").size(), 2u);

  auto res = client_->Delete("/api/register", json{{"function_id", "idps-1"}, {"token", token}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  const auto st = status();
  ASSERT_EQ(st.at("registry").size(), 1u);
  EXPECT_EQ(st.at("registry")[0].at("function_id"), "fw-1");

  res = client_->Delete("/api/register", json{{"function_id", "idps-1"}, {"token", token}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);
}

TEST_F(LiveFcc, DeregisterWithWrongTokenIs401) {
  register_fn("idps-1", "IDPS");
  const auto other = register_fn("fw-1", "FW");
  auto res = client_->Delete("/api/register", json{{"function_id", "idps-1"}, {"token", other}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);
  EXPECT_EQ(status().at("registry").size(), 2u);
}

TEST_F(LiveFcc, ManualOrder) {
  auto res = post("/api/order", {{"order", {"IDPS", "FW", "DPS"}}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 202);
  EXPECT_EQ(json::parse(res->body).at("epoch"), 1);
  auto st = status();
  EXPECT_EQ(st.at("current_order"), json({"IDPS", "FW", "DPS"}));
  EXPECT_EQ(st.at("default_order"), json({"DPS", "FW", "IDPS"}));
  EXPECT_TRUE(st.at("manual_active").get<bool>());
  EXPECT_EQ(st.at("events").back().at("trigger"), "manual");

  for (const auto& bad : {json({{"order", {"IDPS", "FW"}}}), json({{"order", {"IDPS", "FW", "FW"}}}),
                          json({{"order", {"IDPS", "FW", 3}}}), json({{"order", "IDPS"}}), json::object()}) {
    res = post("/api/order", bad);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400) << bad.dump();
  }
  EXPECT_EQ(status().at("epoch"), 1);
}

TEST_F(LiveFcc, StatusShape) {
  register_fn("dps-1", "DPS");
  const auto st = status();
  for (const char* key : {"time", "epoch", "current_order", "default_order", "manual_active", "groups", "registry", "events"})
    EXPECT_TRUE(st.contains(key)) << key;
  EXPECT_EQ(st.at("groups").size(), 3u);
  const std::regex iso(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}\.\d{3}Z)");
  EXPECT_TRUE(std::regex_match(st.at("time").get<std::string>(), iso));
  EXPECT_EQ(st.at("time"), "2023-11-14T22:13:20.250Z");
  EXPECT_TRUE(std::regex_match(st.at("registry")[0].at("last_keepalive").get<std::string>(), iso));
  EXPECT_TRUE(std::regex_match(st.at("events")[0].at("time").get<std::string>(), iso));
  EXPECT_EQ(st.at("events")[0].at("trigger"), "initial");
}

TEST_F(LiveFcc, CorsPreflight) {
  auto res = client_->Options("/api/order");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  res = client_->Get("/api/status");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(LiveFcc, UnknownPathIs404) {
  auto res = client_->Get("/api/nope");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST(FccServer, HttpStatusMapping) {
  EXPECT_EQ(http_status(ErrorCode::duplicate_registration), 409);
  EXPECT_EQ(http_status(ErrorCode::invalid_token), 401);
  EXPECT_EQ(http_status(ErrorCode::expired), 401);
  EXPECT_EQ(http_status(ErrorCode::implausible_strength), 422);
  EXPECT_EQ(http_status(ErrorCode::invalid_order), 400);
}

TEST(FccServer, StopIsIdempotentAndPortIsReleased) {
  ControllerConfig cfg;
  cfg.default_order = ChainOrder{"A"};
  FccController c(cfg, std::make_shared<ManualClock>(), nullptr);
  int port = 0;
  {
    FccServer s(c);
    port = s.start("127.0.0.1", 0);
    EXPECT_GT(port, 0);
    s.stop();
    s.stop();
  }
  FccServer again(c);
  EXPECT_EQ(again.start("127.0.0.1", port), port);
}
