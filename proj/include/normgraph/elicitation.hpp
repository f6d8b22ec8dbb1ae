#pragma once

// Norm elicitation: a fixed four-step prompt script run as one chat session
// per conversation, and a tolerant parser for the structured answer.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "normgraph/provider.hpp"
#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"

namespace normgraph::elicitation {

enum class Step { translate, participants, norms_violations_effects, summary };

struct PromptScript {
  struct Entry {
    Step step;
    std::string name;
    std::string text;
  };
  std::vector<Entry> steps;

  /// The default script. The conversation text is appended to the first
  /// step; later steps rely on the session history.
  static PromptScript standard();
};

struct ParsedItem {
  std::string title;
  std::string body;
};

struct ParsedEffect {
  std::string title;
  std::string body;
  std::optional<std::size_t> violation_index;
};

struct Sections {
  std::vector<ParsedItem> norms;
  std::vector<ParsedItem> violations;
  /// Only effects that could be linked to a violation.
  std::vector<ParsedEffect> effects;
  std::vector<std::string> diagnostics;
  bool any_header = false;
};

/// Never throws. Section headers match case-insensitively; items split on
/// the first colon; colon-less lines continue the previous item. Effects
/// link to violations by the longest matching title prefix, then by an
/// explicit index, then by position.
Sections parse_sections(std::string_view response);

struct TranscriptStep {
  std::string step;
  std::string request;
  std::string response;
  std::string started;
  std::string finished;
  int retries = 0;
  std::string error;
};

struct Transcript {
  std::string conversation_id;
  std::string run_id;
  std::vector<TranscriptStep> steps;
};

void to_json(Json& j, const TranscriptStep& s);
void from_json(const Json& j, TranscriptStep& s);
void to_json(Json& j, const Transcript& t);
void from_json(const Json& j, Transcript& t);

/// Writes <dir>/<conversation>-<run>.json atomically.
std::filesystem::path write_transcript(const std::filesystem::path& dir, const Transcript& t);

struct ElicitResult {
  std::string conversation_id;
  std::vector<NormDescription> descriptions;
  std::optional<std::string> summary;
  std::vector<Relationship> relationships;
  std::string translation;
  Transcript transcript;
  std::vector<std::string> failures;
};

/// Content-derived description id, so re-running on the same transcript
/// yields the same records.
std::string description_id(const std::string& conversation_id, DescriptionKind kind, std::size_t ordinal,
                           const std::string& title, const std::string& body);

struct ElicitOptions {
  RetryPolicy retry;
  util::RateLimiter* limiter = nullptr;
  util::Clock clock;
  std::string run_id = "run";
};

ElicitResult elicit(const Conversation& c, ChatProvider& provider, const PromptScript& script,
                    const ElicitOptions& opts = {});

/// Builds descriptions from parsed sections (ids derived from content).
std::vector<NormDescription> to_descriptions(const std::string& conversation_id, const Sections& s);

/// add_description events for records not already stored, plus a
/// fill_conversation event for a summary or relationships the conversation
/// lacks.
std::vector<Event> plan_elicit(const ProjectState& s, const std::vector<ElicitResult>& results);

}  // namespace normgraph::elicitation
