#pragma once

#include <string>

#include "clea/backends.hpp"
#include "clea/result.hpp"
#include "clea/world.hpp"

namespace clea {

struct TextObservation {
  std::string text;
  std::string robot;
  int step = 0;
};

// Pure template rendering of a scene graph: a position sentence, one sentence
// per visible fact, container flag sentences, a hand sentence. Every entity
// token in the output appears in the raw observation.
TextObservation describe_deterministic(const RawObservation& raw, const std::string& task);

struct DescribeOptions {
  bool allow_fallback = true;
  std::string model;
  double temperature = 0.2;
};

// LLM:d description of the scene graph; falls back to the deterministic
// template on backend failure or an empty response unless disabled.
Result<TextObservation, BackendError> describe(Backend& backend, const RawObservation& raw,
                                               const std::string& task,
                                               const DescribeOptions& options = {});

}  // namespace clea
