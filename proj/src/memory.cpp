#include "clea/memory.hpp"

#include <regex>
#include <sstream>

#include "clea/prompts.hpp"
#include "clea/skills.hpp"

namespace clea {

HistoryBuffer::HistoryBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw InvalidCapacity("history capacity must be >= 1");
}

void HistoryBuffer::push(HistoryEntry entry) {
  if (!entries_.empty() && entry.step <= entries_.back().step) {
    throw NonMonotonicStep("step " + std::to_string(entry.step) + " after step " +
                           std::to_string(entries_.back().step));
  }
  entries_.push_back(std::move(entry));
  if (entries_.size() > capacity_) entries_.pop_front();
}

std::string render_belief(const Belief& belief) {
  std::ostringstream os;
  os << "SUMMARY: " << belief.summary << "\n";
  os << "FACTS:\n";
  for (const auto& [obj, place] : belief.facts) os << obj << " -> " << place << "\n";
  os << "DONE:\n";
  for (const auto& g : belief.completed_subgoals) os << "- " << g << "\n";
  os << "ISSUES:\n";
  for (const auto& issue : belief.open_issues) os << "- " << issue << "\n";
  return os.str();
}

std::string render_history(std::span<const HistoryEntry> entries) {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << "step " << e.step << " | obs: " << e.observation << " | action: " << e.action
       << " | feedback: ";
    if (e.feedback.ok) {
      os << "ok";
      if (!e.feedback.message.empty()) os << " — " << e.feedback.message;
    } else {
      os << e.feedback.kind << " — " << e.feedback.message;
    }
    os << "\n";
  }
  return os.str();
}

Belief summarize_deterministic(std::span<const HistoryEntry> entries, const std::string& task) {
  Belief belief;
  int ok_count = 0, err_count = 0, skip_count = 0;

  // Facts from the observer's template sentences.
  static const std::regex kPlaced(R"(([a-z][a-z0-9_]*) is (?:in|on) ([a-z][a-z0-9_]*)\.)");
  static const std::regex kHeld(R"(([a-z][a-z0-9_]*) is holding ([a-z][a-z0-9_]*)\.)");

  std::map<std::string, std::vector<std::string>> hand;  // reconstructed pick order
  for (const auto& e : entries) {
    for (auto it = std::sregex_iterator(e.observation.begin(), e.observation.end(), kPlaced);
         it != std::sregex_iterator(); ++it) {
      belief.facts[(*it)[1]] = (*it)[2];
    }
    for (auto it = std::sregex_iterator(e.observation.begin(), e.observation.end(), kHeld);
         it != std::sregex_iterator(); ++it) {
      if ((*it)[2] != "nothing") belief.facts[(*it)[2]] = (*it)[1];
    }

    if (e.action == kSkippedAction) {
      ++skip_count;
    } else if (!e.feedback.ok) {
      ++err_count;
    } else {
      ++ok_count;
      // Action effects override whatever the observation said.
      if (auto parsed = parse_action(e.action); parsed.ok()) {
        if (const auto* pick = std::get_if<PickFromAction>(&parsed.value())) {
          belief.facts[pick->object.token] = pick->robot.token;
          hand[pick->robot.token].push_back(pick->object.token);
        } else if (const auto* rel = std::get_if<ReleaseToAction>(&parsed.value())) {
          auto& stack = hand[rel->robot.token];
          if (!stack.empty()) {
            belief.facts[stack.back()] = rel->space.token;
            stack.pop_back();
          }
        }
      }
    }

    if (!e.feedback.ok) {
      belief.open_issues.push_back("step " + std::to_string(e.step) + ": " + e.action + " — " +
                                   e.feedback.kind + " — " + e.feedback.message);
    }
  }
  constexpr std::size_t kMaxIssues = 5;
  if (belief.open_issues.size() > kMaxIssues) {
    belief.open_issues.erase(belief.open_issues.begin(),
                             belief.open_issues.end() - static_cast<long>(kMaxIssues));
  }

  std::ostringstream os;
  if (entries.empty()) {
    os << "No interactions yet for task: " << task;
  } else {
    os << "Recorded " << entries.size() << " interactions for task: " << task << ". " << ok_count
       << " succeeded, " << err_count << " failed, " << skip_count << " rejected by the critic.";
    if (!belief.facts.empty()) {
      os << " Known locations:";
      for (const auto& [obj, place] : belief.facts) os << " " << obj << " at " << place << ";";
    }
  }
  belief.summary = os.str();
  return belief;
}

std::optional<Belief> parse_belief(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Belief belief;
  bool have_summary = false;
  enum class Section { None, Facts, Done, Issues } section = Section::None;

  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };

  while (std::getline(in, line)) {
    line = trim(line);
    if (line.rfind("SUMMARY:", 0) == 0) {
      belief.summary = trim(line.substr(8));
      have_summary = true;
      section = Section::None;
    } else if (line == "FACTS:") {
      section = Section::Facts;
    } else if (line == "DONE:") {
      section = Section::Done;
    } else if (line == "ISSUES:") {
      section = Section::Issues;
    } else if (!line.empty()) {
      switch (section) {
        case Section::Facts: {
          const auto arrow = line.find("->");
          if (arrow != std::string::npos) {
            const std::string obj = trim(line.substr(0, arrow));
            const std::string place = trim(line.substr(arrow + 2));
            if (!obj.empty() && !place.empty()) belief.facts[obj] = place;
          }
          break;
        }
        case Section::Done:
          belief.completed_subgoals.push_back(line.rfind("- ", 0) == 0 ? line.substr(2) : line);
          break;
        case Section::Issues:
          belief.open_issues.push_back(line.rfind("- ", 0) == 0 ? line.substr(2) : line);
          break;
        case Section::None:
          break;
      }
    }
  }
  if (!have_summary) return std::nullopt;
  return belief;
}

Result<Belief, BackendError> summarize(Backend& backend, std::span<const HistoryEntry> entries,
                                       const std::string& task,
                                       const SummarizeOptions& options) {
  const auto& tmpl = prompts::defaults();
  std::string history = render_history(entries);
  if (history.empty()) history = "(no interactions yet)";
  const std::string user =
      prompts::render(tmpl.summarizer, {{"task", task}, {"history", history}});

  ChatRequest request;
  request.role_tag = Role::Summarizer;
  request.model = options.model;
  request.temperature = options.temperature;
  request.messages = {{"system", std::string(prompts::kSummarizerSystem)}, {"user", user}};

  auto fallback = [&]() -> Result<Belief, BackendError> {
    return summarize_deterministic(entries, task);
  };

  auto first = backend.complete(request);
  if (!first.ok()) {
    if (options.allow_fallback) return fallback();
    return first.error();
  }
  if (auto belief = parse_belief(first.value())) return *belief;

  // One retry with the parse problem spelled out.
  request.messages.push_back({"assistant", first.value()});
  request.messages.push_back(
      {"user",
       "That response could not be parsed: the SUMMARY: tag is required. Reply again using "
       "exactly the tags SUMMARY:, FACTS:, DONE:, ISSUES:."});
  auto second = backend.complete(request);
  if (second.ok()) {
    if (auto belief = parse_belief(second.value())) return *belief;
  }
  if (options.allow_fallback) return fallback();
  if (!second.ok()) return second.error();
  return BackendError{BackendError::Kind::Malformed, 0, "summarizer response unparseable"};
}

}  // namespace clea
