#pragma once

// Symbolic grounding of <conversation, description, concept> triples: the
// request renderer, the header-anchored response parser and its canonical
// inverse, and the batch driver with one repair reprompt per triple.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "normgraph/provider.hpp"
#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"

namespace normgraph::grounding {

/// Template body without its comment header.
std::string_view prompt_template();
std::string_view prompt_version();

/// The "Response Format" tail of the template, quoted back on repair.
std::string_view response_skeleton();

std::string render_request(const Conversation& c, const NormDescription& d, const NormConcept& nc);

/// Parses one response. Labels match case-insensitively; unknown labelled
/// lines land in `justifications`. Throws ParseError on a missing required
/// header, an emotion outside the closed set, a role equal to a speaker
/// name, or a violation block that contradicts the violation status.
SymbolicGrounding parse_grounding(std::string_view response, const std::vector<std::string>& speakers = {});

/// Canonical text form; parse_grounding(render_grounding(g)) == g for every
/// valid g with single-line values.
std::string render_grounding(const SymbolicGrounding& g);

struct GroundResult {
  std::string description_id;
  std::string concept_id;
  std::optional<SymbolicGrounding> grounding;
  std::vector<std::string> errors;
  int provider_calls = 0;
  bool repaired = false;
};

GroundResult ground(const Conversation& c, const NormDescription& d, const NormConcept& nc,
                    ChatProvider& provider, const RetryPolicy& retry = {}, util::RateLimiter* limiter = nullptr);

/// Active assignments of non-discarded descriptions that have no grounding
/// yet, as (description, concept) pairs in description id order.
std::vector<std::pair<std::string, std::string>> pending_targets(const ProjectState& s);

struct BatchResult {
  std::vector<Event> events;
  std::vector<GroundResult> results;
};

/// Grounds up to `limit` pending targets (0 = all) with bounded parallelism;
/// events are ordered like the targets.
BatchResult ground_batch(const ProjectState& s, ChatProvider& provider, std::size_t parallelism,
                         std::size_t limit = 0, const RetryPolicy& retry = {}, util::RateLimiter* limiter = nullptr);

}  // namespace normgraph::grounding
