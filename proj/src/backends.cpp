#include "clea/backends.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include "httplib.h"

#include "clea/world.hpp"  // ConfigError

namespace clea {

const char* to_string(Role role) {
  switch (role) {
    case Role::Observer: return "observer";
    case Role::Summarizer: return "summarizer";
    case Role::Planner: return "planner";
    case Role::Critic: return "critic";
  }
  return "?";
}

const char* to_string(BackendError::Kind kind) {
  switch (kind) {
    case BackendError::Kind::Timeout: return "Timeout";
    case BackendError::Kind::Http: return "Http";
    case BackendError::Kind::NoRuleMatched: return "NoRuleMatched";
    case BackendError::Kind::Malformed: return "Malformed";
  }
  return "?";
}

namespace {

std::optional<std::string> final_user_message(const ChatRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  return std::nullopt;
}

std::optional<BackendError> check_request(const ChatRequest& request) {
  if (request.messages.empty())
    return BackendError{BackendError::Kind::Malformed, 0, "request has no messages"};
  for (const auto& m : request.messages) {
    if (m.content.empty())
      return BackendError{BackendError::Kind::Malformed, 0, "empty message content"};
  }
  if (request.temperature < 0.0 || request.temperature > 2.0)
    return BackendError{BackendError::Kind::Malformed, 0, "temperature out of [0, 2]"};
  return std::nullopt;
}

}  // namespace

ScriptedBackend::ScriptedBackend(std::vector<ScriptRule> rules)
    : rules_(std::move(rules)), used_(rules_.size(), false) {}

Result<std::string, BackendError> ScriptedBackend::complete(const ChatRequest& request) {
  if (auto err = check_request(request)) return *err;
  const auto message = final_user_message(request);
  if (!message)
    return BackendError{BackendError::Kind::Malformed, 0, "request has no user message"};

  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const ScriptRule& rule = rules_[i];
    if (rule.one_shot && used_[i]) continue;
    if (rule.role && *rule.role != request.role_tag) continue;
    bool hit;
    if (rule.match.empty()) {
      hit = true;
    } else if (rule.is_regex) {
      hit = std::regex_search(*message, std::regex(rule.match));
    } else {
      hit = message->find(rule.match) != std::string::npos;
    }
    if (hit) {
      used_[i] = true;
      return rule.response;
    }
  }
  return BackendError{BackendError::Kind::NoRuleMatched, 0,
                      "no scripted rule matched a " + std::string(to_string(request.role_tag)) +
                          " request"};
}

std::vector<ScriptRule> script_rules_from_json(const nlohmann::json& j) {
  std::vector<ScriptRule> rules;
  for (const auto& r : j) {
    ScriptRule rule;
    if (r.contains("role")) {
      const std::string role = r.at("role").get<std::string>();
      if (role == "observer") rule.role = Role::Observer;
      else if (role == "summarizer") rule.role = Role::Summarizer;
      else if (role == "planner") rule.role = Role::Planner;
      else if (role == "critic") rule.role = Role::Critic;
      else throw ConfigError("unknown script rule role '" + role + "'");
    }
    rule.match = r.value("match", "");
    rule.is_regex = r.value("regex", false);
    rule.one_shot = r.value("one_shot", false);
    rule.response = r.at("response").get<std::string>();
    rules.push_back(std::move(rule));
  }
  return rules;
}

nlohmann::json script_rules_to_json(const std::vector<ScriptRule>& rules) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rule : rules) {
    nlohmann::json r;
    if (rule.role) r["role"] = to_string(*rule.role);
    r["match"] = rule.match;
    if (rule.is_regex) r["regex"] = true;
    if (rule.one_shot) r["one_shot"] = true;
    r["response"] = rule.response;
    arr.push_back(std::move(r));
  }
  return arr;
}

RemoteConfig remote_config_from_json(const nlohmann::json& j) {
  RemoteConfig cfg;
  cfg.base_url = j.value("base_url", "");
  cfg.model = j.value("model", "");
  if (j.contains("model_overrides")) {
    for (const auto& [role, model] : j.at("model_overrides").items())
      cfg.model_overrides[role] = model.get<std::string>();
  }
  cfg.api_key = j.value("api_key", "");
  cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
  cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
  cfg.max_retries = j.value("max_retries", cfg.max_retries);
  cfg.backoff_base_ms = j.value("backoff_base_ms", cfg.backoff_base_ms);
  return cfg;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ConfigError("remote backend needs a base URL");
  if (config_.model.empty()) throw ConfigError("remote backend needs a model id");

  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("base URL needs a scheme: " + config_.base_url);
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    host_ = config_.base_url;
  } else {
    host_ = config_.base_url.substr(0, path_start);
    path_prefix_ = config_.base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
}

Result<std::string, BackendError> RemoteBackend::complete(const ChatRequest& request) {
  if (auto err = check_request(request)) return *err;

  std::string model = request.model;
  if (model.empty()) {
    auto it = config_.model_overrides.find(to_string(request.role_tag));
    model = it != config_.model_overrides.end() ? it->second : config_.model;
  }

  nlohmann::json body;
  body["model"] = model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages)
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});

  httplib::Headers headers;
  std::string key = config_.api_key;
  if (key.empty() && !config_.api_key_env.empty()) {
    if (const char* env = std::getenv(config_.api_key_env.c_str())) key = env;
  }
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  const std::string path = path_prefix_ + "/chat/completions";
  const std::string payload = body.dump();

  BackendError last{BackendError::Kind::Timeout, 0, "no attempt made"};
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.backoff_base_ms << (attempt - 1)));
    }
    // One client per call keeps complete() safe to use from worker threads.
    httplib::Client cli(host_);
    cli.set_connection_timeout(0, config_.timeout_ms * 1000);
    cli.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

    auto res = cli.Post(path, headers, payload, "application/json");
    if (!res) {
      last = BackendError{BackendError::Kind::Timeout, 0,
                          "transport failure: " + httplib::to_string(res.error())};
      continue;
    }
    if (res->status >= 500) {
      last = BackendError{BackendError::Kind::Http, res->status,
                          "server error " + std::to_string(res->status)};
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      return BackendError{BackendError::Kind::Http, res->status,
                          "http " + std::to_string(res->status) + ": " + res->body};
    }
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      return BackendError{BackendError::Kind::Malformed,
                          0, std::string("unexpected response shape: ") + e.what()};
    }
  }
  return last;
}

}  // namespace clea
