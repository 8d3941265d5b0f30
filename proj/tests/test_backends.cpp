#include "doctest.h"

#include <atomic>
#include <thread>

#include "httplib.h"

#include "clea/backends.hpp"
#include "clea/harness.hpp"
#include "clea/world.hpp"
#include "test_support.hpp"

using namespace clea;

namespace {

ChatRequest planner_request(const std::string& text) {
  ChatRequest request;
  request.role_tag = Role::Planner;
  request.messages = {{"system", "sys"}, {"user", text}};
  return request;
}

// Minimal chat-completions stub bound to a loopback port.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions",
                 [handler = std::move(handler)](const httplib::Request& req,
                                                httplib::Response& res) { handler(req, res); });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteConfig fast_config(const std::string& base_url) {
  RemoteConfig cfg;
  cfg.base_url = base_url;
  cfg.model = "test-model";
  cfg.timeout_ms = 2000;
  cfg.backoff_base_ms = 1;
  return cfg;
}

}  // namespace

TEST_CASE("scripted rules: first match wins, one-shot rules burn out") {
  std::vector<ScriptRule> rules = {
      {Role::Planner, "water", false, true, "first"},
      {Role::Planner, "water", false, false, "second"},
      {std::nullopt, "", false, false, "catch-all"},
  };
  ScriptedBackend backend(rules);

  auto r1 = backend.complete(planner_request("find the water"));
  REQUIRE(r1.ok());
  CHECK(r1.value() == "first");

  // The one-shot rule is consumed; the duplicate matcher takes over.
  auto r2 = backend.complete(planner_request("find the water"));
  REQUIRE(r2.ok());
  CHECK(r2.value() == "second");

  auto r3 = backend.complete(planner_request("anything else"));
  REQUIRE(r3.ok());
  CHECK(r3.value() == "catch-all");
}

TEST_CASE("scripted rules: role filters and regex matchers") {
  std::vector<ScriptRule> rules = {
      {Role::Critic, "", false, false, "critic says"},
      {Role::Planner, R"(go_to\(robot[0-9]+, \w+\))", true, false, "regex hit"},
  };
  ScriptedBackend backend(rules);

  ChatRequest critic_request = planner_request("whatever");
  critic_request.role_tag = Role::Critic;
  auto r = backend.complete(critic_request);
  REQUIRE(r.ok());
  CHECK(r.value() == "critic says");

  auto miss = backend.complete(planner_request("no call here"));
  REQUIRE(!miss.ok());
  CHECK(miss.error().kind == BackendError::Kind::NoRuleMatched);

  auto hit = backend.complete(planner_request("plan: go_to(robot1, sink)"));
  REQUIRE(hit.ok());
  CHECK(hit.value() == "regex hit");
}

TEST_CASE("scripted backend with no rules always misses") {
  ScriptedBackend backend({});
  auto res = backend.complete(planner_request("x"));
  REQUIRE(!res.ok());
  CHECK(res.error().kind == BackendError::Kind::NoRuleMatched);
}

TEST_CASE("scripted determinism across equal request sequences") {
  std::vector<ScriptRule> rules = {
      {Role::Planner, "a", false, true, "one"},
      {Role::Planner, "", false, false, "two"},
  };
  std::vector<std::string> first, second;
  for (auto* out : {&first, &second}) {
    ScriptedBackend backend(rules);
    for (const char* text : {"a", "a", "b"}) {
      auto res = backend.complete(planner_request(text));
      REQUIRE(res.ok());
      out->push_back(res.value());
    }
  }
  CHECK(first == second);
  CHECK(first == std::vector<std::string>{"one", "two", "two"});
}

TEST_CASE("request validation") {
  ScriptedBackend backend({{std::nullopt, "", false, false, "ok"}});
  ChatRequest bad;
  auto res = backend.complete(bad);
  REQUIRE(!res.ok());
  CHECK(res.error().kind == BackendError::Kind::Malformed);

  ChatRequest hot = planner_request("x");
  hot.temperature = 9.0;
  res = backend.complete(hot);
  REQUIRE(!res.ok());
  CHECK(res.error().kind == BackendError::Kind::Malformed);
}

TEST_CASE("remote config validation") {
  RemoteConfig no_url;
  no_url.model = "m";
  CHECK_THROWS_AS(RemoteBackend{no_url}, ConfigError);

  RemoteConfig no_model;
  no_model.base_url = "http://localhost:1/v1";
  CHECK_THROWS_AS(RemoteBackend{no_model}, ConfigError);

  const auto cfg = remote_config_from_json(nlohmann::json::parse(
      R"({"base_url": "http://h:1/v1", "model": "m", "model_overrides": {"critic": "m-vl"},
          "max_retries": 1})"));
  CHECK(cfg.model_overrides.at("critic") == "m-vl");
  CHECK(cfg.max_retries == 1);
}

TEST_CASE("remote backend: success path and wire format") {
  std::atomic<int> hits{0};
  nlohmann::json seen_body;
  std::string seen_auth;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    hits += 1;
    seen_body = nlohmann::json::parse(req.body);
    if (req.has_header("Authorization")) seen_auth = req.get_header_value("Authorization");
    res.set_content(
        R"({"choices": [{"message": {"role": "assistant", "content": "SUBGOAL: hi"}}]})",
        "application/json");
  });

  RemoteConfig cfg = fast_config(server.base_url());
  cfg.api_key = "sk-test";
  cfg.model_overrides["planner"] = "planner-model";
  RemoteBackend backend(cfg);

  auto res = backend.complete(planner_request("hello"));
  REQUIRE(res.ok());
  CHECK(res.value() == "SUBGOAL: hi");
  CHECK(hits == 1);
  CHECK(seen_auth == "Bearer sk-test");
  CHECK(seen_body.at("model") == "planner-model");  // per-role override
  CHECK(seen_body.at("messages").size() == 2);
  CHECK(seen_body.at("messages")[0].at("role") == "system");
  CHECK(seen_body.at("messages")[1].at("content") == "hello");
  CHECK(seen_body.contains("temperature"));
  CHECK(seen_body.contains("max_tokens"));
}

TEST_CASE("remote backend: 5xx retries up to the bound, then reports Http") {
  std::atomic<int> hits{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    hits += 1;
    res.status = 500;
    res.set_content("boom", "text/plain");
  });

  RemoteConfig cfg = fast_config(server.base_url());
  cfg.max_retries = 2;
  RemoteBackend backend(cfg);

  auto res = backend.complete(planner_request("x"));
  REQUIRE(!res.ok());
  CHECK(res.error().kind == BackendError::Kind::Http);
  CHECK(res.error().status == 500);
  CHECK(hits == 3);  // total attempts = retries + 1
}

TEST_CASE("remote backend: 4xx fails fast, malformed body is Malformed") {
  std::atomic<int> hits{0};
  std::atomic<bool> garbage{false};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    hits += 1;
    if (garbage) {
      res.set_content("{\"weird\": true}", "application/json");
    } else {
      res.status = 401;
      res.set_content("no key", "text/plain");
    }
  });

  RemoteConfig cfg = fast_config(server.base_url());
  RemoteBackend backend(cfg);

  auto res = backend.complete(planner_request("x"));
  REQUIRE(!res.ok());
  CHECK(res.error().kind == BackendError::Kind::Http);
  CHECK(res.error().status == 401);
  CHECK(hits == 1);  // no retry on 4xx

  garbage = true;
  res = backend.complete(planner_request("x"));
  REQUIRE(!res.ok());
  CHECK(res.error().kind == BackendError::Kind::Malformed);
}

TEST_CASE("remote backend: connection failure surfaces as Timeout kind") {
  RemoteConfig cfg = fast_config("http://127.0.0.1:9/v1");  // discard port, nothing listens
  cfg.max_retries = 0;
  cfg.timeout_ms = 200;
  RemoteBackend backend(cfg);
  auto res = backend.complete(planner_request("x"));
  REQUIRE(!res.ok());
  CHECK(res.error().kind == BackendError::Kind::Timeout);
}

TEST_CASE("remote backend drives a whole trial against a live endpoint") {
  // All four roles hit the same stub. Its fixed text parses as a plan; the
  // summarizer and critic responses are unparseable, so their deterministic
  // fallbacks carry the episode.
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    nlohmann::json body = {
        {"choices",
         {{{"message",
            {{"role", "assistant"},
             {"content",
              "SUBGOAL: look in the refrigerator\nACTIONS:\ngo_to(robot1, refrigerator)\n"
              "open(robot1, refrigerator)"}}}}}}};
    res.set_content(body.dump(), "application/json");
  });

  RemoteBackend backend(fast_config(server.base_url()));
  clea::RoleBackends backends = clea::RoleBackends::all(backend);

  const clea::Suite suite = clea::testing::default_suite();
  const clea::TaskSpec* search = nullptr;
  for (const auto& spec : suite.tasks) {
    if (spec.family == clea::TaskFamily::Search) search = &spec;
  }
  REQUIRE(search != nullptr);

  const clea::TrialResult result =
      clea::run_trial(*search, clea::AgentVariant::Clea, backends, 0, 0);
  CHECK(result.failure != clea::FailureClass::Infrastructure);
  CHECK(result.success);
  CHECK(result.score == result.max_score);
}
