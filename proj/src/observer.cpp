#include "clea/observer.hpp"

#include <sstream>

#include "clea/prompts.hpp"

namespace clea {

TextObservation describe_deterministic(const RawObservation& raw, const std::string& task) {
  (void)task;  // the template reports everything; selection is the LLM path's job
  std::ostringstream os;
  os << raw.robot << " is at " << raw.position << ".";

  for (const auto& [container, open] : raw.container_flags) {
    os << " " << container << " is " << (open ? "open" : "closed") << ".";
  }

  bool any_placed = false;
  std::vector<const VisibleFact*> held;
  for (const auto& fact : raw.facts) {
    if (fact.attribute == "held") {
      held.push_back(&fact);
      continue;
    }
    const bool in = raw.container_flags.count(fact.place) > 0;
    os << " " << fact.entity << " is " << (in ? "in" : "on") << " " << fact.place << ".";
    any_placed = true;
  }
  if (held.empty()) {
    os << " " << raw.robot << " is holding nothing.";
  } else {
    for (const auto* fact : held) os << " " << fact->place << " is holding " << fact->entity << ".";
  }
  if (!any_placed && raw.container_flags.empty()) {
    os << " Nothing else is visible.";
  }
  return TextObservation{os.str(), raw.robot, raw.step};
}

Result<TextObservation, BackendError> describe(Backend& backend, const RawObservation& raw,
                                               const std::string& task,
                                               const DescribeOptions& options) {
  const auto& tmpl = prompts::defaults();
  const std::string user = prompts::render(
      tmpl.observer, {{"task", task}, {"scene", observation_to_json(raw).dump()}});

  ChatRequest request;
  request.role_tag = Role::Observer;
  request.model = options.model;
  request.temperature = options.temperature;
  request.messages = {{"system", std::string(prompts::kObserverSystem)}, {"user", user}};

  auto res = backend.complete(request);
  if (res.ok()) {
    std::string text = res.value();
    const auto b = text.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      const auto e = text.find_last_not_of(" \t\r\n");
      return TextObservation{text.substr(b, e - b + 1), raw.robot, raw.step};
    }
    // Empty response counts as a failure; fall through.
    res = BackendError{BackendError::Kind::Malformed, 0, "observer returned empty text"};
  }
  if (options.allow_fallback) return describe_deterministic(raw, task);
  return res.error();
}

}  // namespace clea
