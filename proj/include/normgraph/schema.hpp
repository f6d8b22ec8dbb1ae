#pragma once

// Domain types for the cultural context schema. The factual segment covers
// conversations, turns, relationships, settings and summaries; the cultural
// segment covers norm descriptions, concepts, assignments, groundings and
// the verification trail.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "normgraph/error.hpp"

namespace normgraph {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Closed vocabularies

enum class Provenance { gold, provider_filled };
enum class LabelTask { emotion, sentiment, dialogue_act, norm_violation };
enum class DescriptionKind { norm, violation, effect };
enum class DescriptionStatus { raw, self_verified, agent_verified, discarded };
enum class AssignmentProvenance { human_seed, knn, reassigned };
enum class Compatibility { match, no_match };
enum class Relevance { relevant, irrelevant };
enum class ViolationStatus { adhere, violate };
enum class Emotion {
  anger,
  disgust,
  fear,
  happiness,
  sadness,
  surprise,
  contempt,
  anticipation,
  neutral
};
enum class Aspect { relevance, mapping, violation };
enum class Verdict { yes, no };
enum class Workflow { self, multiagent };
enum class Decision { retain, discard };

template <class E>
struct EnumNames;

#define NORMGRAPH_ENUM_NAMES(E, ...)                                        \
  template <>                                                              \
  struct EnumNames<E> {                                                    \
    static constexpr auto values =                                         \
        std::to_array<std::pair<E, std::string_view>>({__VA_ARGS__});     \
    static constexpr std::string_view type_name = #E;                      \
  };

NORMGRAPH_ENUM_NAMES(Provenance, {Provenance::gold, "gold"},
                     {Provenance::provider_filled, "provider-filled"})
NORMGRAPH_ENUM_NAMES(LabelTask, {LabelTask::emotion, "emotion"},
                     {LabelTask::sentiment, "sentiment"},
                     {LabelTask::dialogue_act, "dialogue_act"},
                     {LabelTask::norm_violation, "norm_violation"})
NORMGRAPH_ENUM_NAMES(DescriptionKind, {DescriptionKind::norm, "norm"},
                     {DescriptionKind::violation, "violation"},
                     {DescriptionKind::effect, "effect"})
NORMGRAPH_ENUM_NAMES(DescriptionStatus, {DescriptionStatus::raw, "raw"},
                     {DescriptionStatus::self_verified, "self_verified"},
                     {DescriptionStatus::agent_verified, "agent_verified"},
                     {DescriptionStatus::discarded, "discarded"})
NORMGRAPH_ENUM_NAMES(AssignmentProvenance, {AssignmentProvenance::human_seed, "human_seed"},
                     {AssignmentProvenance::knn, "knn"},
                     {AssignmentProvenance::reassigned, "reassigned"})
NORMGRAPH_ENUM_NAMES(Compatibility, {Compatibility::match, "match"},
                     {Compatibility::no_match, "no_match"})
NORMGRAPH_ENUM_NAMES(Relevance, {Relevance::relevant, "relevant"},
                     {Relevance::irrelevant, "irrelevant"})
NORMGRAPH_ENUM_NAMES(ViolationStatus, {ViolationStatus::adhere, "adhere"},
                     {ViolationStatus::violate, "violate"})
NORMGRAPH_ENUM_NAMES(Emotion, {Emotion::anger, "anger"}, {Emotion::disgust, "disgust"},
                     {Emotion::fear, "fear"}, {Emotion::happiness, "happiness"},
                     {Emotion::sadness, "sadness"}, {Emotion::surprise, "surprise"},
                     {Emotion::contempt, "contempt"},
                     {Emotion::anticipation, "anticipation"},
                     {Emotion::neutral, "neutral"})
NORMGRAPH_ENUM_NAMES(Aspect, {Aspect::relevance, "relevance"}, {Aspect::mapping, "mapping"},
                     {Aspect::violation, "violation"})
NORMGRAPH_ENUM_NAMES(Verdict, {Verdict::yes, "yes"}, {Verdict::no, "no"})
NORMGRAPH_ENUM_NAMES(Workflow, {Workflow::self, "self"}, {Workflow::multiagent, "multiagent"})
NORMGRAPH_ENUM_NAMES(Decision, {Decision::retain, "retain"}, {Decision::discard, "discard"})

#undef NORMGRAPH_ENUM_NAMES

template <class E>
std::string_view to_string(E e) {
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (v == e) return name;
  }
  return "?";
}

template <class E>
std::optional<E> try_parse_enum(std::string_view s) {
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (name == s) return v;
  }
  return std::nullopt;
}

template <class E>
E parse_enum(std::string_view s) {
  if (auto v = try_parse_enum<E>(s)) return *v;
  throw ParseError("unknown " + std::string(EnumNames<E>::type_name) + " value '" +
                   std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Factual segment

struct Turn {
  int index = 0;
  std::string speaker;
  std::string text;
  /// Keys drawn from LabelTask names.
  std::map<std::string, std::string> labels;
  bool operator==(const Turn&) const = default;
};

struct Relationship {
  std::string speaker_a;
  std::string speaker_b;
  std::string relation;
  Provenance provenance = Provenance::gold;
  bool operator==(const Relationship&) const = default;
};

struct SettingsRecord {
  std::string field;
  Provenance field_provenance = Provenance::gold;
  std::map<std::string, std::string> attributes;
  std::map<std::string, Provenance> attribute_provenance;
  bool operator==(const SettingsRecord&) const = default;
};

struct Conversation {
  std::string id;
  std::string source;
  std::vector<Turn> turns;
  std::vector<Relationship> relationships;
  std::optional<SettingsRecord> settings;
  std::optional<std::string> summary;
  Provenance summary_provenance = Provenance::gold;
  std::string language = "zh";

  std::vector<std::string> speakers() const;
  /// "Speaker: text" lines in turn order.
  std::string render() const;
  bool operator==(const Conversation&) const = default;
};

// ---------------------------------------------------------------------------
// Cultural segment

struct NormDescription {
  std::string id;
  std::string conversation_id;
  DescriptionKind kind = DescriptionKind::norm;
  std::string title;
  std::string body;
  std::optional<std::string> parent_id;
  DescriptionStatus status = DescriptionStatus::raw;

  /// "Title: body", or just the body when the title is empty.
  std::string text() const;
  bool operator==(const NormDescription&) const = default;
};

/// Human-authored fields of a concept (the symbolic structure).
struct ConceptStructure {
  std::string name;
  std::string description;
  std::vector<std::string> settings;
  std::string violation_sketch;
  std::string actor_roles;
  std::string recipient_roles;
  bool operator==(const ConceptStructure&) const = default;
};

struct NormConcept {
  std::string id;
  ConceptStructure structure;
  std::vector<std::string> seed_ids;
  std::vector<std::string> good_ids;
  std::vector<std::string> bad_ids;
  std::string created_by;
  int iteration = 0;
  /// Store version at which the concept was created; orders concepts for
  /// similarity tie-breaking.
  std::uint64_t created_seq = 0;
  bool operator==(const NormConcept&) const = default;
};

struct ConceptAssignment {
  std::string description_id;
  std::string concept_id;
  AssignmentProvenance provenance = AssignmentProvenance::knn;
  double score = 0.0;
  int iteration = 0;
  bool active = true;
  bool operator==(const ConceptAssignment&) const = default;
};

struct EmbeddingRecord {
  std::string target_id;
  std::vector<double> vector;
  std::string model_tag;
  bool normalized = false;
  bool operator==(const EmbeddingRecord&) const = default;
};

struct ViolationDetail {
  std::string action;
  std::string violator_role;
  std::string victim_role;
  Emotion violator_emotion = Emotion::neutral;
  Emotion victim_emotion = Emotion::neutral;
  bool operator==(const ViolationDetail&) const = default;
};

struct SymbolicGrounding {
  std::string description_id;
  std::string concept_id;
  Compatibility compatibility = Compatibility::match;
  std::optional<Relevance> relevance;
  std::optional<std::string> enactor_role;
  std::optional<std::string> acceptor_role;
  std::optional<ViolationStatus> violation_status;
  std::optional<ViolationDetail> violation;
  /// Keyed by lower-case field name ("compatibility", "relevance",
  /// "violation status", plus any extra labelled line).
  std::map<std::string, std::string> justifications;

  /// no_match or irrelevant verdicts flag the assignment for verification.
  bool flagged() const;
  bool operator==(const SymbolicGrounding&) const = default;
};

struct HumanJudgment {
  std::string target_id;
  std::string annotator_id;
  Aspect aspect = Aspect::relevance;
  Verdict verdict = Verdict::yes;
  /// 1-5 rating of a k-NN augmentation against its concept; only on
  /// mapping judgments.
  std::optional<int> likert;
  bool operator==(const HumanJudgment&) const = default;
};

struct Criterion {
  std::string name;
  std::string description;
  std::vector<std::string> accepted_values;
  bool robust = true;
  /// Declared value -> score table for non-ordinal scales. Empty means
  /// the criterion is informational unless its scale is ordinal.
  std::map<std::string, double> score_map;

  /// True when every accepted value starts with an integer ("1 - very
  /// unclear" ...).
  bool ordinal() const;
  /// Counted in the evaluator mean.
  bool scored() const { return robust && (ordinal() || !score_map.empty()); }
  bool operator==(const Criterion&) const = default;
};

struct Rubric {
  Aspect aspect = Aspect::relevance;
  int version = 1;
  std::string task_description;
  std::vector<Criterion> criteria;
  bool operator==(const Rubric&) const = default;
};

struct CriterionScore {
  std::string criterion;
  std::string value;
  double normalized = 0.0;
  bool counted = true;
  bool operator==(const CriterionScore&) const = default;
};

struct VerificationVerdict {
  std::string target_id;
  Aspect aspect = Aspect::relevance;
  Workflow workflow = Workflow::self;
  Decision decision = Decision::retain;
  std::vector<CriterionScore> scores;
  std::string rationale;
  bool operator==(const VerificationVerdict&) const = default;
};

struct ClusterView {
  int cluster_id = 0;
  std::vector<std::string> member_ids;
  std::vector<double> centroid;
  int iteration = 0;
  std::vector<std::string> exemplar_ids;
  bool operator==(const ClusterView&) const = default;
};

// ---------------------------------------------------------------------------
// Verification target ids

std::string mapping_target_id(std::string_view description_id, std::string_view concept_id);
std::string grounding_key(std::string_view description_id, std::string_view concept_id);
std::string violation_target_id(std::string_view description_id, std::string_view concept_id);

// ---------------------------------------------------------------------------
// Project snapshot

struct ProjectState {
  std::uint64_t version = 0;
  std::map<std::string, Conversation> conversations;
  std::map<std::string, NormDescription> descriptions;
  std::map<std::string, NormConcept> concepts;
  /// Full history, including deactivated assignments.
  std::vector<ConceptAssignment> assignments;
  std::map<std::string, EmbeddingRecord> embeddings;
  /// Keyed by grounding_key(description, concept).
  std::map<std::string, SymbolicGrounding> groundings;
  std::vector<HumanJudgment> judgments;
  std::vector<VerificationVerdict> verdicts;
  /// Status of mapping and violation targets (descriptions carry their own).
  std::map<std::string, DescriptionStatus> target_status;
  std::map<std::string, Rubric> rubrics;
  /// Archived cluster views per discovery round.
  std::map<int, std::vector<ClusterView>> clusters;
  int round = 0;

  /// Active assignment of a description, or nullptr.
  const ConceptAssignment* active_assignment(const std::string& description_id) const;
  /// Concepts in creation order.
  std::vector<const NormConcept*> concepts_by_creation() const;
  DescriptionStatus status_of(const std::string& target_id) const;
  void rebuild_indexes();

  /// Index into `assignments` of the active assignment per description.
  std::map<std::string, std::size_t> active_index;
};

struct ViolationReport {
  std::string target_id;
  std::string rule;
  std::string detail;
  bool operator==(const ViolationReport&) const = default;
};

/// Every broken invariant across the snapshot; empty iff consistent.
std::vector<ViolationReport> validate_project(const ProjectState& state);

/// Status may only move rightward (raw -> self_verified -> agent_verified)
/// or to discarded; discarded is terminal.
bool status_transition_allowed(DescriptionStatus from, DescriptionStatus to);

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const Turn& v);
void from_json(const Json& j, Turn& v);
void to_json(Json& j, const Relationship& v);
void from_json(const Json& j, Relationship& v);
void to_json(Json& j, const SettingsRecord& v);
void from_json(const Json& j, SettingsRecord& v);
void to_json(Json& j, const Conversation& v);
void from_json(const Json& j, Conversation& v);
void to_json(Json& j, const NormDescription& v);
void from_json(const Json& j, NormDescription& v);
void to_json(Json& j, const ConceptStructure& v);
void from_json(const Json& j, ConceptStructure& v);
void to_json(Json& j, const NormConcept& v);
void from_json(const Json& j, NormConcept& v);
void to_json(Json& j, const ConceptAssignment& v);
void from_json(const Json& j, ConceptAssignment& v);
void to_json(Json& j, const EmbeddingRecord& v);
void from_json(const Json& j, EmbeddingRecord& v);
void to_json(Json& j, const ViolationDetail& v);
void from_json(const Json& j, ViolationDetail& v);
void to_json(Json& j, const SymbolicGrounding& v);
void from_json(const Json& j, SymbolicGrounding& v);
void to_json(Json& j, const HumanJudgment& v);
void from_json(const Json& j, HumanJudgment& v);
void to_json(Json& j, const Criterion& v);
void from_json(const Json& j, Criterion& v);
void to_json(Json& j, const Rubric& v);
void from_json(const Json& j, Rubric& v);
void to_json(Json& j, const CriterionScore& v);
void from_json(const Json& j, CriterionScore& v);
void to_json(Json& j, const VerificationVerdict& v);
void from_json(const Json& j, VerificationVerdict& v);
void to_json(Json& j, const ClusterView& v);
void from_json(const Json& j, ClusterView& v);
void to_json(Json& j, const ViolationReport& v);
void to_json(Json& j, const ProjectState& v);
void from_json(const Json& j, ProjectState& v);

}  // namespace normgraph
