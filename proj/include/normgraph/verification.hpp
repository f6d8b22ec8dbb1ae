#pragma once

// Refinement of generated content. Two workflows:
//   self        the provider reconsiders its own yes/no judgment
//   multiagent  critic -> verifier build a rubric once per aspect; then per
//               target the quantifier rates every robust criterion and a
//               deterministic evaluator thresholds the mean normalized score
// This module owns every retain/discard decision.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "normgraph/provider.hpp"
#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"

namespace normgraph::verification {

// ---------------------------------------------------------------------------
// Targets

/// Ids eligible for a workflow: not yet judged by it and in a status the
/// workflow may move (raw for self; raw or self_verified for multiagent).
/// Relevance targets are descriptions, mapping targets are non-seed active
/// assignments, violation targets are groundings with a violation status.
std::vector<std::string> pending_targets(const ProjectState& s, Aspect aspect, Workflow workflow);

/// Conversation, description and (for mapping/violation) concept and
/// grounding text shown to every agent.
std::string target_context(const ProjectState& s, Aspect aspect, const std::string& target_id);

// ---------------------------------------------------------------------------
// Self-verification

std::string self_question(Aspect aspect);
/// The judgment the pipeline already made, phrased as the assistant turn.
std::string prior_answer(const ProjectState& s, Aspect aspect, const std::string& target_id);
/// First yes/no token of a reply.
std::optional<Verdict> parse_yes_no(std::string_view reply);

/// Retain iff the reconsidered answer equals the prior one. nullopt when
/// the reply is unparseable twice (the target stays raw).
std::optional<VerificationVerdict> self_verify(const ProjectState& s, Aspect aspect, const std::string& target_id,
                                               ChatProvider& provider, const RetryPolicy& retry = {},
                                               util::RateLimiter* limiter = nullptr,
                                               std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Multi-agent pieces

std::string default_task_description(Aspect aspect);

/// Criteria from a critic reply: a JSON array of {name, description,
/// accepted_values}, a JSON object keyed by name, or "Criterion:" /
/// "Description:" / "Accepted Values:" line blocks. Criteria without values
/// are dropped with a warning.
std::vector<Criterion> parse_criteria(std::string_view reply, std::vector<std::string>* warnings = nullptr);

/// Throws Error("no criteria") when nothing usable comes back.
std::vector<Criterion> generate_criteria(const std::string& task_description,
                                         const std::vector<std::string>& success_examples,
                                         const std::vector<std::string>& failure_examples, ChatProvider& provider,
                                         const RetryPolicy& retry = {}, std::vector<std::string>* warnings = nullptr);

/// Marks criteria the verifier rejects as non-robust. Needs at least two
/// probes; throws when every criterion is rejected.
std::vector<Criterion> verify_criteria(std::vector<Criterion> criteria, const std::vector<std::string>& probes,
                                       ChatProvider& provider, const RetryPolicy& retry = {});

/// Index of the accepted value a reply names: exact (case-insensitive),
/// bare number on ordinal scales, or the label after "N - ".
std::optional<std::size_t> match_value(const Criterion& c, std::string_view reply);

/// index / (len - 1) on ordinal scales; the declared table otherwise
/// (0.5 when undeclared, and then not counted).
CriterionScore score_value(const Criterion& c, std::size_t index);

/// Rates `context` on every robust criterion. Invalid or missing values get
/// one reprompt naming the valid values, then the criterion is skipped.
std::vector<CriterionScore> quantify(const std::string& context, const Rubric& rubric, ChatProvider& provider,
                                     const RetryPolicy& retry = {}, util::RateLimiter* limiter = nullptr,
                                     std::vector<std::string>* warnings = nullptr);

/// Retain iff the mean normalized score of counted criteria reaches the
/// threshold. Throws PreconditionError without a counted score.
VerificationVerdict evaluate(const std::string& target_id, Aspect aspect, const std::vector<CriterionScore>& scores,
                             double threshold);

// ---------------------------------------------------------------------------
// Batches

struct RubricExamples {
  std::string task_description;
  std::vector<std::string> success;
  std::vector<std::string> failure;
  std::vector<std::string> probes;
};

/// Critic then verifier; returns the set_rubric event (version one above
/// any stored rubric for the aspect).
Event build_rubric(const ProjectState& s, Aspect aspect, const RubricExamples& ex, ChatProvider& provider,
                   const RetryPolicy& retry = {}, std::vector<std::string>* warnings = nullptr);

struct VerifyOptions {
  Aspect aspect = Aspect::relevance;
  Workflow workflow = Workflow::self;
  double threshold = 0.7;
  std::size_t parallelism = 1;
  /// Targets per commit; a killed run loses at most one chunk of work.
  std::size_t chunk = 16;
  /// Stop after this many targets (0 = all).
  std::size_t limit = 0;
  RetryPolicy retry;
  util::RateLimiter* limiter = nullptr;
};

struct VerifyReport {
  std::size_t targets = 0;
  std::size_t retained = 0;
  std::size_t discarded = 0;
  std::size_t withheld = 0;
  std::vector<std::string> warnings;
  std::vector<Event> events;
};

/// Verdict events for the given targets, computed in parallel and returned
/// in target order.
VerifyReport verify_targets(const ProjectState& s, const std::vector<std::string>& targets, ChatProvider& provider,
                            const VerifyOptions& opts);

/// Plans verdicts for every pending target without committing.
VerifyReport plan_verification(const ProjectState& s, ChatProvider& provider, const VerifyOptions& opts);

/// Chunked run against a store: each chunk is appended before the next is
/// computed, so an interrupted run resumes where it stopped and produces
/// the same verdict log. `after_chunk` (optional) is called after each
/// commit with the number of targets done so far.
VerifyReport run_verification(ProjectStore& store, ChatProvider& provider, const VerifyOptions& opts,
                              const std::function<void(std::size_t)>& after_chunk = {});

}  // namespace normgraph::verification
