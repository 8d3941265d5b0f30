#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clea/result.hpp"

namespace clea {

// Which module of the control loop a request comes from. Scripted rules can
// filter on it and the remote backend can route it to a different model.
enum class Role { Observer, Summarizer, Planner, Critic };

const char* to_string(Role role);

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model;  // empty: backend default (possibly per-role)
  double temperature = 0.2;
  int max_tokens = 512;
  Role role_tag = Role::Planner;
};

struct BackendError {
  enum class Kind { Timeout, Http, NoRuleMatched, Malformed };
  Kind kind = Kind::Malformed;
  int status = 0;  // Http only
  std::string message;
};

const char* to_string(BackendError::Kind kind);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Result<std::string, BackendError> complete(const ChatRequest& request) = 0;
};

// One canned response. Matching is first-rule-wins over the final user
// message; an empty matcher matches everything. One-shot rules fire once per
// backend instance, so each trial gets its own scripted session.
struct ScriptRule {
  std::optional<Role> role;
  std::string match;
  bool is_regex = false;
  bool one_shot = false;
  std::string response;
};

class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptRule> rules);

  Result<std::string, BackendError> complete(const ChatRequest& request) override;

 private:
  std::vector<ScriptRule> rules_;
  std::vector<bool> used_;
};

std::vector<ScriptRule> script_rules_from_json(const nlohmann::json& j);
nlohmann::json script_rules_to_json(const std::vector<ScriptRule>& rules);

struct RemoteConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string model;
  std::map<std::string, std::string> model_overrides;  // by role name
  std::string api_key;                                 // takes precedence over api_key_env
  std::string api_key_env = "CLEA_API_KEY";
  int timeout_ms = 30000;
  int max_retries = 2;      // total attempts = max_retries + 1
  int backoff_base_ms = 200;
};

RemoteConfig remote_config_from_json(const nlohmann::json& j);

// Chat-completions HTTP client: POST {base_url}/chat/completions with
// {model, messages, temperature, max_tokens}; reads
// choices[0].message.content. Retries timeouts, connection failures and 5xx
// with exponential backoff; 4xx is returned immediately. Throws ConfigError
// from the constructor when base URL or model id is missing.
class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);

  Result<std::string, BackendError> complete(const ChatRequest& request) override;

  const RemoteConfig& config() const { return config_; }

 private:
  RemoteConfig config_;
  std::string host_;  // scheme://host[:port]
  std::string path_prefix_;
};

}  // namespace clea
