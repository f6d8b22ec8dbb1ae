#include "normgraph/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace normgraph {

// ---------------------------------------------------------------------------
// Helpers on types

std::vector<std::string> Conversation::speakers() const {
  std::vector<std::string> out;
  for (const auto& t : turns) {
    if (std::find(out.begin(), out.end(), t.speaker) == out.end()) out.push_back(t.speaker);
  }
  return out;
}

std::string Conversation::render() const {
  std::string out;
  for (const auto& t : turns) {
    out += t.speaker;
    out += ": ";
    out += t.text;
    out += '\n';
  }
  return out;
}

std::string NormDescription::text() const {
  if (title.empty()) return body;
  if (body.empty()) return title;
  return title + ": " + body;
}

bool SymbolicGrounding::flagged() const {
  return compatibility == Compatibility::no_match ||
         (relevance && *relevance == Relevance::irrelevant);
}

bool Criterion::ordinal() const {
  if (accepted_values.empty()) return false;
  return std::all_of(accepted_values.begin(), accepted_values.end(), [](const std::string& v) {
    return !v.empty() && std::isdigit(static_cast<unsigned char>(v.front()));
  });
}

std::string mapping_target_id(std::string_view description_id, std::string_view concept_id) {
  return "map:" + std::string(description_id) + "|" + std::string(concept_id);
}

std::string grounding_key(std::string_view description_id, std::string_view concept_id) {
  return std::string(description_id) + "|" + std::string(concept_id);
}

std::string violation_target_id(std::string_view description_id, std::string_view concept_id) {
  return "viol:" + std::string(description_id) + "|" + std::string(concept_id);
}

const ConceptAssignment* ProjectState::active_assignment(const std::string& description_id) const {
  auto it = active_index.find(description_id);
  return it == active_index.end() ? nullptr : &assignments[it->second];
}

std::vector<const NormConcept*> ProjectState::concepts_by_creation() const {
  std::vector<const NormConcept*> out;
  out.reserve(concepts.size());
  for (const auto& [id, c] : concepts) out.push_back(&c);
  std::stable_sort(out.begin(), out.end(), [](const NormConcept* a, const NormConcept* b) {
    if (a->created_seq != b->created_seq) return a->created_seq < b->created_seq;
    return a->id < b->id;
  });
  return out;
}

DescriptionStatus ProjectState::status_of(const std::string& target_id) const {
  if (auto it = descriptions.find(target_id); it != descriptions.end()) return it->second.status;
  if (auto it = target_status.find(target_id); it != target_status.end()) return it->second;
  return DescriptionStatus::raw;
}

void ProjectState::rebuild_indexes() {
  active_index.clear();
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i].active) active_index[assignments[i].description_id] = i;
  }
}

bool status_transition_allowed(DescriptionStatus from, DescriptionStatus to) {
  if (from == DescriptionStatus::discarded) return false;
  if (to == DescriptionStatus::discarded) return true;
  return static_cast<int>(to) > static_cast<int>(from);
}

// ---------------------------------------------------------------------------
// Validation

namespace {

class Reporter {
 public:
  void add(std::string target, std::string rule, std::string detail = {}) {
    out_.push_back({std::move(target), std::move(rule), std::move(detail)});
  }
  std::vector<ViolationReport> take() { return std::move(out_); }

 private:
  std::vector<ViolationReport> out_;
};

void check_conversation(const std::string& key, const Conversation& c, Reporter& r) {
  if (key != c.id) r.add(key, "conversation id mismatch", "stored under " + key);
  if (c.turns.empty()) r.add(c.id, "turns must be non-empty");
  std::set<std::string> speakers;
  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    const auto& t = c.turns[i];
    speakers.insert(t.speaker);
    if (t.index != static_cast<int>(i)) {
      r.add(c.id, "turn indices must be contiguous",
            "turn " + std::to_string(i) + " has index " + std::to_string(t.index));
    }
    if (t.text.empty()) r.add(c.id, "turn text must be non-empty", "turn " + std::to_string(i));
    for (const auto& [task, label] : t.labels) {
      if (!try_parse_enum<LabelTask>(task)) {
        r.add(c.id, "turn label task unknown", task);
      }
    }
  }
  for (const auto& rel : c.relationships) {
    if (rel.speaker_a == rel.speaker_b) {
      r.add(c.id, "relationship endpoints must differ", rel.speaker_a);
    }
    for (const auto* who : {&rel.speaker_a, &rel.speaker_b}) {
      if (!speakers.count(*who)) r.add(c.id, "relationship endpoint not a speaker", *who);
    }
  }
  if (c.settings) {
    if (c.settings->field.empty()) r.add(c.id, "settings field must be non-empty");
    for (const auto& [k, v] : c.settings->attributes) {
      if (!c.settings->attribute_provenance.count(k)) {
        r.add(c.id, "settings attribute missing provenance", k);
      }
    }
  }
}

void check_description(const ProjectState& s, const std::string& key, const NormDescription& d,
                       Reporter& r) {
  if (key != d.id) r.add(key, "description id mismatch");
  if (!s.conversations.count(d.conversation_id)) {
    r.add(d.id, "description conversation unknown", d.conversation_id);
  }
  if (d.kind == DescriptionKind::effect) {
    if (!d.parent_id) {
      r.add(d.id, "effect requires parent");
    } else {
      auto it = s.descriptions.find(*d.parent_id);
      if (it == s.descriptions.end()) {
        r.add(d.id, "effect parent unknown", *d.parent_id);
      } else if (it->second.kind != DescriptionKind::violation) {
        r.add(d.id, "effect parent must be violation", *d.parent_id);
      }
    }
  } else if (d.parent_id) {
    r.add(d.id, "parent only allowed on effects", *d.parent_id);
  }
}

void check_concepts(const ProjectState& s, Reporter& r) {
  std::map<std::string, std::string> names;
  for (const auto& [key, c] : s.concepts) {
    if (key != c.id) r.add(key, "concept id mismatch");
    const auto n = c.seed_ids.size();
    if (n < 5 || n > 10) {
      r.add(c.id, "seed count out of range", std::to_string(n) + " seeds");
    }
    std::set<std::string> seen;
    for (const auto* set : {&c.seed_ids, &c.good_ids, &c.bad_ids}) {
      std::set<std::string> local(set->begin(), set->end());
      for (const auto& id : local) {
        if (!seen.insert(id).second) r.add(c.id, "concept example sets must be disjoint", id);
        if (!s.descriptions.count(id)) r.add(c.id, "concept references unknown description", id);
      }
    }
    const auto lname = c.structure.name;
    if (auto [it, ok] = names.emplace(lname, c.id); !ok) {
      r.add(c.id, "concept name must be unique", lname + " also used by " + it->second);
    }
  }
}

void check_assignments(const ProjectState& s, Reporter& r) {
  std::map<std::string, int> active;
  for (const auto& a : s.assignments) {
    if (!s.descriptions.count(a.description_id)) {
      r.add(a.description_id, "assignment references unknown description");
    }
    if (!s.concepts.count(a.concept_id)) {
      r.add(a.description_id, "assignment references unknown concept", a.concept_id);
    }
    if (!(a.score >= -1.0 - 1e-9 && a.score <= 1.0 + 1e-9)) {
      r.add(a.description_id, "assignment score out of range", std::to_string(a.score));
    }
    if (a.active) ++active[a.description_id];
  }
  for (const auto& [id, n] : active) {
    if (n > 1) r.add(id, "many-to-one violated", std::to_string(n) + " active assignments");
  }
}

void check_embeddings(const ProjectState& s, Reporter& r) {
  const EmbeddingRecord* first = nullptr;
  for (const auto& [key, e] : s.embeddings) {
    if (key != e.target_id) r.add(key, "embedding id mismatch");
    if (!first) {
      first = &e;
    } else {
      if (e.vector.size() != first->vector.size()) {
        r.add(e.target_id, "embedding length mismatch");
      }
      if (e.model_tag != first->model_tag) r.add(e.target_id, "embedding model mismatch");
    }
    if (e.normalized) {
      double n2 = 0;
      for (double x : e.vector) n2 += x * x;
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) r.add(e.target_id, "embedding not normalized");
    }
  }
}

void check_grounding(const std::string& key, const SymbolicGrounding& g, Reporter& r) {
  if (key != grounding_key(g.description_id, g.concept_id)) r.add(key, "grounding key mismatch");
  const bool violate = g.violation_status && *g.violation_status == ViolationStatus::violate;
  if (violate != g.violation.has_value()) {
    r.add(key, "violation block iff violate");
  }
  if (g.compatibility == Compatibility::no_match &&
      (g.relevance || g.enactor_role || g.acceptor_role || g.violation_status || g.violation)) {
    r.add(key, "grounding fields require match");
  }
}

}  // namespace

std::vector<ViolationReport> validate_project(const ProjectState& s) {
  Reporter r;
  for (const auto& [k, c] : s.conversations) check_conversation(k, c, r);
  for (const auto& [k, d] : s.descriptions) check_description(s, k, d, r);
  check_concepts(s, r);
  check_assignments(s, r);
  check_embeddings(s, r);
  for (const auto& [k, g] : s.groundings) check_grounding(k, g, r);
  for (const auto& j : s.judgments) {
    if (j.likert) {
      if (j.aspect != Aspect::mapping) r.add(j.target_id, "likert only on mapping judgments");
      if (*j.likert < 1 || *j.likert > 5) r.add(j.target_id, "likert out of range");
    }
  }
  for (const auto& v : s.verdicts) {
    if (v.workflow == Workflow::multiagent &&
        std::none_of(v.scores.begin(), v.scores.end(),
                     [](const CriterionScore& c) { return c.counted; })) {
      r.add(v.target_id, "multiagent verdict needs robust score");
    }
  }
  return r.take();
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <class E>
void put_enum(Json& j, const char* key, E e) {
  j[key] = std::string(to_string(e));
}

template <class E>
E get_enum(const Json& j, const char* key, E fallback) {
  if (!j.contains(key)) return fallback;
  return parse_enum<E>(j.at(key).get<std::string>());
}

template <class T>
void put_opt(Json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
void get_opt(const Json& j, const char* key, std::optional<T>& v) {
  if (j.contains(key) && !j.at(key).is_null()) {
    v = j.at(key).get<T>();
  } else {
    v.reset();
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

void to_json(Json& j, const Turn& v) {
  j = Json{{"index", v.index}, {"speaker", v.speaker}, {"text", v.text}};
  if (!v.labels.empty()) j["labels"] = v.labels;
}
void from_json(const Json& j, Turn& v) {
  v.index = get_or(j, "index", 0);
  v.speaker = j.at("speaker").get<std::string>();
  v.text = j.at("text").get<std::string>();
  v.labels = get_or(j, "labels", std::map<std::string, std::string>{});
}

void to_json(Json& j, const Relationship& v) {
  j = Json{{"speaker_a", v.speaker_a}, {"speaker_b", v.speaker_b}, {"relation", v.relation}};
  put_enum(j, "provenance", v.provenance);
}
void from_json(const Json& j, Relationship& v) {
  v.speaker_a = j.at("speaker_a").get<std::string>();
  v.speaker_b = j.at("speaker_b").get<std::string>();
  v.relation = j.at("relation").get<std::string>();
  v.provenance = get_enum(j, "provenance", Provenance::gold);
}

void to_json(Json& j, const SettingsRecord& v) {
  j = Json{{"field", v.field}, {"attributes", v.attributes}};
  put_enum(j, "field_provenance", v.field_provenance);
  Json prov = Json::object();
  for (const auto& [k, p] : v.attribute_provenance) prov[k] = std::string(to_string(p));
  j["attribute_provenance"] = prov;
}
void from_json(const Json& j, SettingsRecord& v) {
  v.field = get_or<std::string>(j, "field", "");
  v.field_provenance = get_enum(j, "field_provenance", Provenance::gold);
  v.attributes = get_or(j, "attributes", std::map<std::string, std::string>{});
  v.attribute_provenance.clear();
  if (j.contains("attribute_provenance")) {
    for (const auto& [k, p] : j.at("attribute_provenance").items()) {
      v.attribute_provenance[k] = parse_enum<Provenance>(p.get<std::string>());
    }
  } else {
    // Loader default: attributes without explicit provenance are gold.
    for (const auto& [k, _] : v.attributes) v.attribute_provenance[k] = Provenance::gold;
  }
}

void to_json(Json& j, const Conversation& v) {
  j = Json{{"id", v.id},
           {"source", v.source},
           {"turns", v.turns},
           {"relationships", v.relationships},
           {"language", v.language}};
  put_opt(j, "settings", v.settings);
  if (v.summary) {
    j["summary"] = *v.summary;
    put_enum(j, "summary_provenance", v.summary_provenance);
  }
}
void from_json(const Json& j, Conversation& v) {
  v.id = get_or<std::string>(j, "id", "");
  v.source = get_or<std::string>(j, "source", "");
  v.turns = j.at("turns").get<std::vector<Turn>>();
  v.relationships = get_or(j, "relationships", std::vector<Relationship>{});
  get_opt(j, "settings", v.settings);
  get_opt(j, "summary", v.summary);
  v.summary_provenance = get_enum(j, "summary_provenance", Provenance::gold);
  v.language = get_or<std::string>(j, "language", "zh");
}

void to_json(Json& j, const NormDescription& v) {
  j = Json{{"id", v.id},
           {"conversation_id", v.conversation_id},
           {"title", v.title},
           {"body", v.body}};
  put_enum(j, "kind", v.kind);
  put_enum(j, "status", v.status);
  put_opt(j, "parent_id", v.parent_id);
}
void from_json(const Json& j, NormDescription& v) {
  v.id = get_or<std::string>(j, "id", "");
  v.conversation_id = j.at("conversation_id").get<std::string>();
  v.kind = get_enum(j, "kind", DescriptionKind::norm);
  v.title = get_or<std::string>(j, "title", "");
  v.body = get_or<std::string>(j, "body", "");
  get_opt(j, "parent_id", v.parent_id);
  v.status = get_enum(j, "status", DescriptionStatus::raw);
}

void to_json(Json& j, const ConceptStructure& v) {
  j = Json{{"name", v.name},
           {"description", v.description},
           {"settings", v.settings},
           {"violation_sketch", v.violation_sketch},
           {"actor_roles", v.actor_roles},
           {"recipient_roles", v.recipient_roles}};
}
void from_json(const Json& j, ConceptStructure& v) {
  v.name = get_or<std::string>(j, "name", "");
  v.description = get_or<std::string>(j, "description", "");
  v.settings = get_or(j, "settings", std::vector<std::string>{});
  v.violation_sketch = get_or<std::string>(j, "violation_sketch", "");
  v.actor_roles = get_or<std::string>(j, "actor_roles", "");
  v.recipient_roles = get_or<std::string>(j, "recipient_roles", "");
}

void to_json(Json& j, const NormConcept& v) {
  j = Json{{"id", v.id},
           {"structure", v.structure},
           {"seed_ids", v.seed_ids},
           {"good_ids", v.good_ids},
           {"bad_ids", v.bad_ids},
           {"created_by", v.created_by},
           {"iteration", v.iteration},
           {"created_seq", v.created_seq}};
}
void from_json(const Json& j, NormConcept& v) {
  v.id = get_or<std::string>(j, "id", "");
  v.structure = j.at("structure").get<ConceptStructure>();
  v.seed_ids = get_or(j, "seed_ids", std::vector<std::string>{});
  v.good_ids = get_or(j, "good_ids", std::vector<std::string>{});
  v.bad_ids = get_or(j, "bad_ids", std::vector<std::string>{});
  v.created_by = get_or<std::string>(j, "created_by", "");
  v.iteration = get_or(j, "iteration", 0);
  v.created_seq = get_or<std::uint64_t>(j, "created_seq", 0);
}

void to_json(Json& j, const ConceptAssignment& v) {
  j = Json{{"description_id", v.description_id},
           {"concept_id", v.concept_id},
           {"score", v.score},
           {"iteration", v.iteration},
           {"active", v.active}};
  put_enum(j, "provenance", v.provenance);
}
void from_json(const Json& j, ConceptAssignment& v) {
  v.description_id = j.at("description_id").get<std::string>();
  v.concept_id = j.at("concept_id").get<std::string>();
  v.provenance = get_enum(j, "provenance", AssignmentProvenance::knn);
  v.score = get_or(j, "score", 0.0);
  v.iteration = get_or(j, "iteration", 0);
  v.active = get_or(j, "active", true);
}

void to_json(Json& j, const EmbeddingRecord& v) {
  j = Json{{"target_id", v.target_id},
           {"vector", v.vector},
           {"model_tag", v.model_tag},
           {"normalized", v.normalized}};
}
void from_json(const Json& j, EmbeddingRecord& v) {
  v.target_id = j.at("target_id").get<std::string>();
  v.vector = j.at("vector").get<std::vector<double>>();
  v.model_tag = get_or<std::string>(j, "model_tag", "");
  v.normalized = get_or(j, "normalized", false);
}

void to_json(Json& j, const ViolationDetail& v) {
  j = Json{{"action", v.action}, {"violator_role", v.violator_role}, {"victim_role", v.victim_role}};
  put_enum(j, "violator_emotion", v.violator_emotion);
  put_enum(j, "victim_emotion", v.victim_emotion);
}
void from_json(const Json& j, ViolationDetail& v) {
  v.action = j.at("action").get<std::string>();
  v.violator_role = j.at("violator_role").get<std::string>();
  v.victim_role = j.at("victim_role").get<std::string>();
  v.violator_emotion = parse_enum<Emotion>(j.at("violator_emotion").get<std::string>());
  v.victim_emotion = parse_enum<Emotion>(j.at("victim_emotion").get<std::string>());
}

void to_json(Json& j, const SymbolicGrounding& v) {
  j = Json{{"description_id", v.description_id},
           {"concept_id", v.concept_id},
           {"justifications", v.justifications}};
  put_enum(j, "compatibility", v.compatibility);
  if (v.relevance) put_enum(j, "relevance", *v.relevance);
  put_opt(j, "enactor_role", v.enactor_role);
  put_opt(j, "acceptor_role", v.acceptor_role);
  if (v.violation_status) put_enum(j, "violation_status", *v.violation_status);
  put_opt(j, "violation", v.violation);
}
void from_json(const Json& j, SymbolicGrounding& v) {
  v.description_id = j.at("description_id").get<std::string>();
  v.concept_id = j.at("concept_id").get<std::string>();
  v.compatibility = get_enum(j, "compatibility", Compatibility::match);
  v.relevance.reset();
  if (j.contains("relevance")) v.relevance = parse_enum<Relevance>(j.at("relevance").get<std::string>());
  get_opt(j, "enactor_role", v.enactor_role);
  get_opt(j, "acceptor_role", v.acceptor_role);
  v.violation_status.reset();
  if (j.contains("violation_status")) {
    v.violation_status = parse_enum<ViolationStatus>(j.at("violation_status").get<std::string>());
  }
  get_opt(j, "violation", v.violation);
  v.justifications = get_or(j, "justifications", std::map<std::string, std::string>{});
}

void to_json(Json& j, const HumanJudgment& v) {
  j = Json{{"target_id", v.target_id}, {"annotator_id", v.annotator_id}};
  put_enum(j, "aspect", v.aspect);
  put_enum(j, "verdict", v.verdict);
  put_opt(j, "likert", v.likert);
}
void from_json(const Json& j, HumanJudgment& v) {
  v.target_id = j.at("target_id").get<std::string>();
  v.annotator_id = j.at("annotator_id").get<std::string>();
  v.aspect = parse_enum<Aspect>(j.at("aspect").get<std::string>());
  v.verdict = parse_enum<Verdict>(j.at("verdict").get<std::string>());
  get_opt(j, "likert", v.likert);
}

void to_json(Json& j, const Criterion& v) {
  j = Json{{"name", v.name},
           {"description", v.description},
           {"accepted_values", v.accepted_values},
           {"robust", v.robust}};
  if (!v.score_map.empty()) j["score_map"] = v.score_map;
}
void from_json(const Json& j, Criterion& v) {
  v.name = j.at("name").get<std::string>();
  v.description = get_or<std::string>(j, "description", "");
  v.accepted_values = get_or(j, "accepted_values", std::vector<std::string>{});
  v.robust = get_or(j, "robust", true);
  v.score_map = get_or(j, "score_map", std::map<std::string, double>{});
}

void to_json(Json& j, const Rubric& v) {
  j = Json{{"version", v.version}, {"task_description", v.task_description}, {"criteria", v.criteria}};
  put_enum(j, "aspect", v.aspect);
}
void from_json(const Json& j, Rubric& v) {
  v.aspect = parse_enum<Aspect>(j.at("aspect").get<std::string>());
  v.version = get_or(j, "version", 1);
  v.task_description = get_or<std::string>(j, "task_description", "");
  v.criteria = get_or(j, "criteria", std::vector<Criterion>{});
}

void to_json(Json& j, const CriterionScore& v) {
  j = Json{{"criterion", v.criterion},
           {"value", v.value},
           {"normalized", v.normalized},
           {"counted", v.counted}};
}
void from_json(const Json& j, CriterionScore& v) {
  v.criterion = j.at("criterion").get<std::string>();
  v.value = j.at("value").get<std::string>();
  v.normalized = j.at("normalized").get<double>();
  v.counted = get_or(j, "counted", true);
}

void to_json(Json& j, const VerificationVerdict& v) {
  j = Json{{"target_id", v.target_id}, {"scores", v.scores}, {"rationale", v.rationale}};
  put_enum(j, "aspect", v.aspect);
  put_enum(j, "workflow", v.workflow);
  put_enum(j, "decision", v.decision);
}
void from_json(const Json& j, VerificationVerdict& v) {
  v.target_id = j.at("target_id").get<std::string>();
  v.aspect = parse_enum<Aspect>(j.at("aspect").get<std::string>());
  v.workflow = parse_enum<Workflow>(j.at("workflow").get<std::string>());
  v.decision = parse_enum<Decision>(j.at("decision").get<std::string>());
  v.scores = get_or(j, "scores", std::vector<CriterionScore>{});
  v.rationale = get_or<std::string>(j, "rationale", "");
}

void to_json(Json& j, const ClusterView& v) {
  j = Json{{"cluster_id", v.cluster_id},
           {"member_ids", v.member_ids},
           {"centroid", v.centroid},
           {"iteration", v.iteration},
           {"exemplar_ids", v.exemplar_ids}};
}
void from_json(const Json& j, ClusterView& v) {
  v.cluster_id = j.at("cluster_id").get<int>();
  v.member_ids = j.at("member_ids").get<std::vector<std::string>>();
  v.centroid = get_or(j, "centroid", std::vector<double>{});
  v.iteration = get_or(j, "iteration", 0);
  v.exemplar_ids = get_or(j, "exemplar_ids", std::vector<std::string>{});
}

void to_json(Json& j, const ViolationReport& v) {
  j = Json{{"target_id", v.target_id}, {"rule", v.rule}, {"detail", v.detail}};
}

void to_json(Json& j, const ProjectState& v) {
  Json clusters = Json::object();
  for (const auto& [round, views] : v.clusters) clusters[std::to_string(round)] = views;
  Json status = Json::object();
  for (const auto& [k, s] : v.target_status) status[k] = std::string(to_string(s));
  j = Json{{"version", v.version},
           {"conversations", v.conversations},
           {"descriptions", v.descriptions},
           {"concepts", v.concepts},
           {"assignments", v.assignments},
           {"embeddings", v.embeddings},
           {"groundings", v.groundings},
           {"judgments", v.judgments},
           {"verdicts", v.verdicts},
           {"target_status", status},
           {"rubrics", v.rubrics},
           {"clusters", clusters},
           {"round", v.round}};
}

void from_json(const Json& j, ProjectState& v) {
  v.version = j.at("version").get<std::uint64_t>();
  v.conversations = j.at("conversations").get<std::map<std::string, Conversation>>();
  v.descriptions = j.at("descriptions").get<std::map<std::string, NormDescription>>();
  v.concepts = j.at("concepts").get<std::map<std::string, NormConcept>>();
  v.assignments = j.at("assignments").get<std::vector<ConceptAssignment>>();
  v.embeddings = j.at("embeddings").get<std::map<std::string, EmbeddingRecord>>();
  v.groundings = j.at("groundings").get<std::map<std::string, SymbolicGrounding>>();
  v.judgments = j.at("judgments").get<std::vector<HumanJudgment>>();
  v.verdicts = j.at("verdicts").get<std::vector<VerificationVerdict>>();
  v.target_status.clear();
  for (const auto& [k, s] : j.at("target_status").items()) {
    v.target_status[k] = parse_enum<DescriptionStatus>(s.get<std::string>());
  }
  v.rubrics = j.at("rubrics").get<std::map<std::string, Rubric>>();
  v.clusters.clear();
  for (const auto& [k, views] : j.at("clusters").items()) {
    v.clusters[std::stoi(k)] = views.get<std::vector<ClusterView>>();
  }
  v.round = j.at("round").get<int>();
  v.rebuild_indexes();
}

}  // namespace normgraph
