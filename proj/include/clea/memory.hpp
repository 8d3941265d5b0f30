#pragma once

#include <deque>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clea/backends.hpp"
#include "clea/result.hpp"

namespace clea {

struct InvalidCapacity : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonMonotonicStep : std::logic_error {
  using std::logic_error::logic_error;
};

// Feedback as remembered by the agent. For executed actions this mirrors the
// world feedback (kind one of the world error kinds, or empty when ok); for
// critic-vetoed steps the action is kSkippedAction and kind is
// "vetoed:<category>".
struct FeedbackNote {
  bool ok = true;
  std::string kind;
  std::string message;
};

inline constexpr const char* kSkippedAction = "skipped";

struct HistoryEntry {
  int step = 0;
  std::string observation;  // the step's text observation
  std::string action;       // canonical call, or kSkippedAction
  FeedbackNote feedback;
};

// Bounded FIFO of interaction records. Eviction is strictly oldest-first and
// step indices must strictly increase.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(std::size_t capacity);

  void push(HistoryEntry entry);

  const std::deque<HistoryEntry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::size_t capacity_;
  std::deque<HistoryEntry> entries_;
};

inline constexpr std::size_t kDefaultHistoryCapacity = 32;

// The agent's current estimate of the environment and its own progress.
struct Belief {
  std::string summary;
  std::map<std::string, std::string> facts;  // object -> last known place
  std::vector<std::string> completed_subgoals;
  std::vector<std::string> open_issues;
};

std::string render_belief(const Belief& belief);
std::string render_history(std::span<const HistoryEntry> entries);

// Pure template-based summarization: object locations recovered from
// observation sentences and successful pick/release actions (latest wins),
// recent failures and vetoes listed as open issues.
Belief summarize_deterministic(std::span<const HistoryEntry> entries, const std::string& task);

struct SummarizeOptions {
  bool allow_fallback = true;
  std::string model;
  double temperature = 0.2;
};

// LLM:d summarization with a structured SUMMARY/FACTS/DONE/ISSUES response
// contract. An unparseable response is retried once with the parse problem
// appended; after that (or on backend failure) it falls back to the
// deterministic summarizer unless fallback is disabled.
Result<Belief, BackendError> summarize(Backend& backend, std::span<const HistoryEntry> entries,
                                       const std::string& task,
                                       const SummarizeOptions& options = {});

// Parses the structured summarizer response; nullopt when the SUMMARY tag is
// missing.
std::optional<Belief> parse_belief(const std::string& text);

}  // namespace clea
