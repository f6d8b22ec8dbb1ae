#include "normgraph/store.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "normgraph/util.hpp"

namespace normgraph {

void to_json(Json& j, const Event& e) { j = Json{{"type", e.type}, {"payload", e.payload}}; }

void from_json(const Json& j, Event& e) {
  e.type = j.at("type").get<std::string>();
  e.payload = j.at("payload");
}

namespace events {

Event add_conversation(const Conversation& c) { return {"add_conversation", Json{{"conversation", c}}}; }

Event fill_conversation(const std::string& conversation_id,
                        const std::optional<std::string>& summary,
                        const std::optional<std::vector<Relationship>>& relationships,
                        const std::optional<SettingsRecord>& settings) {
  Json p{{"conversation_id", conversation_id}};
  if (summary) p["summary"] = *summary;
  if (relationships) p["relationships"] = *relationships;
  if (settings) p["settings"] = *settings;
  return {"fill_conversation", p};
}

Event add_description(const NormDescription& d) { return {"add_description", Json{{"description", d}}}; }
Event set_embedding(const EmbeddingRecord& e) { return {"set_embedding", Json{{"record", e}}}; }

Event record_clusters(int round, const std::vector<ClusterView>& clusters) {
  return {"record_clusters", Json{{"round", round}, {"clusters", clusters}}};
}

Event create_concept(const NormConcept& c) { return {"create_concept", Json{{"concept", c}}}; }

Event mark_examples(const std::string& concept_id, const std::vector<std::string>& good,
                    const std::vector<std::string>& bad) {
  return {"mark_examples", Json{{"concept_id", concept_id}, {"good", good}, {"bad", bad}}};
}

Event assign(const ConceptAssignment& a) { return {"assign", Json{{"assignment", a}}}; }

Event unassign(const std::string& description_id, int iteration) {
  return {"unassign", Json{{"description_id", description_id}, {"iteration", iteration}}};
}

Event add_grounding(const SymbolicGrounding& g) { return {"add_grounding", Json{{"grounding", g}}}; }
Event add_judgment(const HumanJudgment& j) { return {"add_judgment", Json{{"judgment", j}}}; }
Event record_verdict(const VerificationVerdict& v) { return {"record_verdict", Json{{"verdict", v}}}; }
Event set_rubric(const Rubric& r) { return {"set_rubric", Json{{"rubric", r}}}; }

}  // namespace events

namespace {

[[noreturn]] void reject(const std::string& rule, const std::string& detail) {
  throw InvariantError(rule, detail);
}

void check_conversation_shape(const Conversation& c) {
  ProjectState probe;
  probe.conversations[c.id] = c;
  auto reports = validate_project(probe);
  if (!reports.empty()) reject(reports.front().rule, c.id + ": " + reports.front().detail);
}

void apply_add_conversation(ProjectState& s, const Json& p) {
  auto c = p.at("conversation").get<Conversation>();
  if (c.id.empty()) reject("conversation id required", "empty id");
  if (s.conversations.count(c.id)) reject("conversation id must be unique", c.id);
  check_conversation_shape(c);
  s.conversations.emplace(c.id, std::move(c));
}

void apply_fill(ProjectState& s, const Json& p) {
  const auto id = p.at("conversation_id").get<std::string>();
  auto it = s.conversations.find(id);
  if (it == s.conversations.end()) reject("conversation unknown", id);
  Conversation c = it->second;
  if (p.contains("summary")) {
    if (c.summary) reject("gold fields are never overwritten", id + ": summary present");
    c.summary = p.at("summary").get<std::string>();
    c.summary_provenance = Provenance::provider_filled;
  }
  if (p.contains("relationships")) {
    if (!c.relationships.empty()) {
      reject("gold fields are never overwritten", id + ": relationships present");
    }
    for (auto r : p.at("relationships").get<std::vector<Relationship>>()) {
      r.provenance = Provenance::provider_filled;
      c.relationships.push_back(std::move(r));
    }
  }
  if (p.contains("settings")) {
    auto filled = p.at("settings").get<SettingsRecord>();
    if (!c.settings) {
      c.settings = SettingsRecord{};
      c.settings->field = filled.field;
      c.settings->field_provenance = Provenance::provider_filled;
    } else if (!filled.field.empty() && !c.settings->field.empty()) {
      reject("gold fields are never overwritten", id + ": settings field present");
    } else if (c.settings->field.empty()) {
      c.settings->field = filled.field;
      c.settings->field_provenance = Provenance::provider_filled;
    }
    for (const auto& [k, v] : filled.attributes) {
      if (c.settings->attributes.count(k)) {
        reject("gold fields are never overwritten", id + ": settings attribute " + k);
      }
      c.settings->attributes[k] = v;
      c.settings->attribute_provenance[k] = Provenance::provider_filled;
    }
  }
  check_conversation_shape(c);
  it->second = std::move(c);
}

void apply_add_description(ProjectState& s, const Json& p) {
  auto d = p.at("description").get<NormDescription>();
  if (d.id.empty()) reject("description id required", "empty id");
  if (s.descriptions.count(d.id)) reject("description id must be unique", d.id);
  if (!s.conversations.count(d.conversation_id)) {
    reject("description conversation unknown", d.conversation_id);
  }
  if (d.status != DescriptionStatus::raw) reject("descriptions enter as raw", d.id);
  if (d.kind == DescriptionKind::effect) {
    if (!d.parent_id) reject("effect requires parent", d.id);
    auto pit = s.descriptions.find(*d.parent_id);
    if (pit == s.descriptions.end()) reject("effect parent unknown", *d.parent_id);
    if (pit->second.kind != DescriptionKind::violation) {
      reject("effect parent must be violation", d.id);
    }
  } else if (d.parent_id) {
    reject("parent only allowed on effects", d.id);
  }
  s.descriptions.emplace(d.id, std::move(d));
}

void apply_set_embedding(ProjectState& s, const Json& p) {
  auto e = p.at("record").get<EmbeddingRecord>();
  if (e.vector.empty()) reject("embedding must be non-empty", e.target_id);
  for (const auto& [id, other] : s.embeddings) {
    if (id == e.target_id) continue;
    if (other.vector.size() != e.vector.size()) reject("embedding length mismatch", e.target_id);
    if (other.model_tag != e.model_tag) reject("embedding model mismatch", e.target_id);
    break;
  }
  if (e.normalized) {
    double n2 = 0;
    for (double x : e.vector) n2 += x * x;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) reject("embedding not normalized", e.target_id);
  }
  s.embeddings[e.target_id] = std::move(e);
}

void apply_record_clusters(ProjectState& s, const Json& p) {
  const int round = p.at("round").get<int>();
  if (round != s.round + 1) {
    reject("rounds advance by one", "expected " + std::to_string(s.round + 1));
  }
  s.clusters[round] = p.at("clusters").get<std::vector<ClusterView>>();
  s.round = round;
}

void set_active(ProjectState& s, ConceptAssignment a) {
  if (auto it = s.active_index.find(a.description_id); it != s.active_index.end()) {
    s.assignments[it->second].active = false;
  }
  a.active = true;
  s.assignments.push_back(std::move(a));
  s.active_index[s.assignments.back().description_id] = s.assignments.size() - 1;
}

void apply_create_concept(ProjectState& s, const Json& p) {
  auto c = p.at("concept").get<NormConcept>();
  if (c.id.empty()) reject("concept id required", "empty id");
  if (s.concepts.count(c.id)) reject("concept id must be unique", c.id);
  for (const auto& [id, other] : s.concepts) {
    if (other.structure.name == c.structure.name) {
      reject("concept name must be unique", c.structure.name + " used by " + id);
    }
  }
  const std::set<std::string> seeds(c.seed_ids.begin(), c.seed_ids.end());
  if (seeds.size() != c.seed_ids.size()) reject("concept example sets must be disjoint", "duplicate seed");
  if (seeds.size() < 5 || seeds.size() > 10) {
    reject("seed count out of range", std::to_string(seeds.size()) + " seeds");
  }
  if (!c.good_ids.empty() || !c.bad_ids.empty()) {
    reject("concepts start without marks", c.id);
  }
  for (const auto& id : c.seed_ids) {
    auto dit = s.descriptions.find(id);
    if (dit == s.descriptions.end()) reject("concept references unknown description", id);
    if (dit->second.status == DescriptionStatus::discarded) reject("seed is discarded", id);
    if (const auto* a = s.active_assignment(id)) {
      reject("many-to-one violated", id + " already assigned to " + a->concept_id);
    }
  }
  c.created_seq = s.version + 1;
  c.iteration = s.round;
  for (const auto& id : c.seed_ids) {
    set_active(s, ConceptAssignment{id, c.id, AssignmentProvenance::human_seed, 1.0, s.round, true});
  }
  s.concepts.emplace(c.id, std::move(c));
}

void apply_mark_examples(ProjectState& s, const Json& p) {
  const auto id = p.at("concept_id").get<std::string>();
  auto it = s.concepts.find(id);
  if (it == s.concepts.end()) reject("concept unknown", id);
  const auto good = p.at("good").get<std::vector<std::string>>();
  const auto bad = p.at("bad").get<std::vector<std::string>>();
  NormConcept c = it->second;
  const std::set<std::string> seeds(c.seed_ids.begin(), c.seed_ids.end());
  auto add = [&](std::vector<std::string>& into, std::vector<std::string>& other,
                 const std::string& d) {
    if (!s.descriptions.count(d)) reject("concept references unknown description", d);
    if (seeds.count(d)) reject("concept example sets must be disjoint", d + " is a seed");
    other.erase(std::remove(other.begin(), other.end(), d), other.end());
    if (std::find(into.begin(), into.end(), d) == into.end()) into.push_back(d);
  };
  for (const auto& d : good) {
    if (std::find(bad.begin(), bad.end(), d) != bad.end()) {
      reject("concept example sets must be disjoint", d + " marked good and bad");
    }
    add(c.good_ids, c.bad_ids, d);
  }
  for (const auto& d : bad) add(c.bad_ids, c.good_ids, d);
  it->second = std::move(c);
}

void apply_assign(ProjectState& s, const Json& p) {
  auto a = p.at("assignment").get<ConceptAssignment>();
  auto dit = s.descriptions.find(a.description_id);
  if (dit == s.descriptions.end()) reject("assignment references unknown description", a.description_id);
  if (dit->second.status == DescriptionStatus::discarded) {
    reject("discarded descriptions are not assigned", a.description_id);
  }
  if (!s.concepts.count(a.concept_id)) reject("assignment references unknown concept", a.concept_id);
  if (a.provenance == AssignmentProvenance::human_seed) {
    reject("human_seed assignments come from concept creation", a.description_id);
  }
  if (!(a.score >= -1.0 - 1e-9 && a.score <= 1.0 + 1e-9)) {
    reject("assignment score out of range", a.description_id);
  }
  if (const auto* cur = s.active_assignment(a.description_id);
      cur && cur->provenance == AssignmentProvenance::human_seed) {
    reject("human_seed assignments are fixed", a.description_id);
  }
  set_active(s, std::move(a));
}

void apply_unassign(ProjectState& s, const Json& p) {
  const auto id = p.at("description_id").get<std::string>();
  auto it = s.active_index.find(id);
  if (it == s.active_index.end()) reject("no active assignment", id);
  if (s.assignments[it->second].provenance == AssignmentProvenance::human_seed) {
    reject("human_seed assignments are fixed", id);
  }
  s.assignments[it->second].active = false;
  s.active_index.erase(it);
}

void apply_add_grounding(ProjectState& s, const Json& p) {
  auto g = p.at("grounding").get<SymbolicGrounding>();
  const auto key = grounding_key(g.description_id, g.concept_id);
  const auto* a = s.active_assignment(g.description_id);
  if (!a || a->concept_id != g.concept_id) reject("grounding requires active assignment", key);
  if (s.groundings.count(key)) reject("grounding already recorded", key);
  ProjectState probe;
  probe.groundings[key] = g;
  auto reports = validate_project(probe);
  if (!reports.empty()) reject(reports.front().rule, key);
  s.groundings.emplace(key, std::move(g));
}

void apply_add_judgment(ProjectState& s, const Json& p) {
  auto j = p.at("judgment").get<HumanJudgment>();
  if (j.likert) {
    if (j.aspect != Aspect::mapping) reject("likert only on mapping judgments", j.target_id);
    if (*j.likert < 1 || *j.likert > 5) reject("likert out of range", j.target_id);
  }
  if (j.annotator_id.empty()) reject("annotator required", j.target_id);
  s.judgments.push_back(std::move(j));
}

void apply_record_verdict(ProjectState& s, const Json& p) {
  auto v = p.at("verdict").get<VerificationVerdict>();
  for (const auto& prior : s.verdicts) {
    if (prior.target_id == v.target_id && prior.aspect == v.aspect &&
        prior.workflow == v.workflow) {
      reject("verdict already recorded", v.target_id);
    }
  }
  if (v.workflow == Workflow::multiagent &&
      std::none_of(v.scores.begin(), v.scores.end(),
                   [](const CriterionScore& c) { return c.counted; })) {
    reject("multiagent verdict needs robust score", v.target_id);
  }
  DescriptionStatus next = DescriptionStatus::discarded;
  if (v.decision == Decision::retain) {
    next = v.workflow == Workflow::self ? DescriptionStatus::self_verified
                                        : DescriptionStatus::agent_verified;
  }
  const DescriptionStatus cur = s.status_of(v.target_id);
  if (!status_transition_allowed(cur, next)) {
    reject("status transition not allowed",
           v.target_id + ": " + std::string(to_string(cur)) + " -> " + std::string(to_string(next)));
  }

  switch (v.aspect) {
    case Aspect::relevance: {
      auto it = s.descriptions.find(v.target_id);
      if (it == s.descriptions.end()) reject("verdict target unknown", v.target_id);
      it->second.status = next;
      if (next == DescriptionStatus::discarded) {
        // Seeds were picked by a human; their assignment survives and the
        // discarded description simply stops counting toward coverage.
        if (auto ai = s.active_index.find(v.target_id);
            ai != s.active_index.end() &&
            s.assignments[ai->second].provenance != AssignmentProvenance::human_seed) {
          s.assignments[ai->second].active = false;
          s.active_index.erase(ai);
        }
      }
      break;
    }
    case Aspect::mapping: {
      // map:<description>|<concept>
      const auto body = v.target_id.substr(v.target_id.find(':') + 1);
      const auto desc = body.substr(0, body.find('|'));
      const auto concept_id = body.substr(body.find('|') + 1);
      const auto* a = s.active_assignment(desc);
      if (!a || a->concept_id != concept_id) reject("verdict target unknown", v.target_id);
      if (a->provenance == AssignmentProvenance::human_seed) {
        reject("human_seed assignments are fixed", v.target_id);
      }
      s.target_status[v.target_id] = next;
      if (next == DescriptionStatus::discarded) {
        auto ai = s.active_index.find(desc);
        s.assignments[ai->second].active = false;
        s.active_index.erase(ai);
      }
      break;
    }
    case Aspect::violation: {
      const auto body = v.target_id.substr(v.target_id.find(':') + 1);
      if (!s.groundings.count(body)) reject("verdict target unknown", v.target_id);
      s.target_status[v.target_id] = next;
      break;
    }
  }
  s.verdicts.push_back(std::move(v));
}

void apply_set_rubric(ProjectState& s, const Json& p) {
  auto r = p.at("rubric").get<Rubric>();
  if (r.criteria.empty()) reject("rubric needs criteria", std::string(to_string(r.aspect)));
  const std::string key(to_string(r.aspect));
  if (auto it = s.rubrics.find(key); it != s.rubrics.end() && it->second.version >= r.version) {
    reject("rubric versions increase", key);
  }
  s.rubrics[key] = std::move(r);
}

}  // namespace

void apply_event(ProjectState& state, const Event& e) {
  // Handlers run every check before the first mutation.
  try {
    if (e.type == "add_conversation") {
      apply_add_conversation(state, e.payload);
    } else if (e.type == "fill_conversation") {
      apply_fill(state, e.payload);
    } else if (e.type == "add_description") {
      apply_add_description(state, e.payload);
    } else if (e.type == "set_embedding") {
      apply_set_embedding(state, e.payload);
    } else if (e.type == "record_clusters") {
      apply_record_clusters(state, e.payload);
    } else if (e.type == "create_concept") {
      apply_create_concept(state, e.payload);
    } else if (e.type == "mark_examples") {
      apply_mark_examples(state, e.payload);
    } else if (e.type == "assign") {
      apply_assign(state, e.payload);
    } else if (e.type == "unassign") {
      apply_unassign(state, e.payload);
    } else if (e.type == "add_grounding") {
      apply_add_grounding(state, e.payload);
    } else if (e.type == "add_judgment") {
      apply_add_judgment(state, e.payload);
    } else if (e.type == "record_verdict") {
      apply_record_verdict(state, e.payload);
    } else if (e.type == "set_rubric") {
      apply_set_rubric(state, e.payload);
    } else {
      reject("unknown event type", e.type);
    }
  } catch (const InvariantError&) {
    throw;
  } catch (const Json::exception& ex) {
    throw InvariantError("malformed event", e.type + ": " + ex.what());
  } catch (const ParseError& ex) {
    throw InvariantError("malformed event", e.type + ": " + ex.what());
  }
  ++state.version;
}

std::string serialize_state(const ProjectState& state) {
  Json j = state;
  return j.dump(1) + "\n";
}

ProjectState deserialize_state(const std::string& bytes) { return Json::parse(bytes).get<ProjectState>(); }

std::vector<Event> read_event_log(const std::filesystem::path& file) {
  std::vector<Event> out;
  if (!std::filesystem::exists(file)) return out;
  const auto text = util::read_file(file);
  const auto lines = util::split_lines(text);
  const bool unterminated = !text.empty() && text.back() != '\n';
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (util::trim(lines[i]).empty()) continue;
    try {
      out.push_back(Json::parse(lines[i]).get<Event>());
    } catch (const Json::exception& ex) {
      // A writer killed mid-append leaves an unterminated last line.
      if (unterminated && i + 1 == lines.size()) break;
      throw Error(file.string() + ":" + std::to_string(i + 1) + ": " + ex.what());
    }
  }
  return out;
}

std::string serialize_events(const std::vector<Event>& es) {
  std::string out;
  for (const auto& e : es) {
    out += Json(e).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// ProjectStore

ProjectStore::ProjectStore() = default;

ProjectStore::ProjectStore(std::filesystem::path dir, std::uint64_t snapshot_interval)
    : dir_(std::move(dir)), snapshot_interval_(snapshot_interval) {
  std::filesystem::create_directories(*dir_);
  const auto log_file = *dir_ / "events.jsonl";
  log_ = read_event_log(log_file);
  if (std::filesystem::exists(log_file) && std::filesystem::file_size(log_file) > 0 &&
      util::read_file(log_file).back() != '\n') {
    util::write_file_atomic(log_file, serialize_events(log_));
  }

  // Start from the newest snapshot covering a prefix of the log.
  std::uint64_t best = 0;
  const auto snaps = *dir_ / "snapshots";
  if (std::filesystem::exists(snaps)) {
    for (const auto& entry : std::filesystem::directory_iterator(snaps)) {
      const auto name = entry.path().stem().string();  // snapshot-<v>
      if (name.rfind("snapshot-", 0) != 0) continue;
      const auto v = std::stoull(name.substr(9));
      if (v <= log_.size() && v > best) best = v;
    }
  }
  if (best > 0) {
    state_ = deserialize_state(util::read_file(snaps / ("snapshot-" + std::to_string(best) + ".json")));
  }
  for (std::size_t i = state_.version; i < log_.size(); ++i) apply_event(state_, log_[i]);
}

std::uint64_t ProjectStore::version() const {
  std::shared_lock lock(mu_);
  return state_.version;
}

ProjectState ProjectStore::state() const {
  std::shared_lock lock(mu_);
  return state_;
}

std::uint64_t ProjectStore::append(const Event& e) { return append_all({e}); }

std::uint64_t ProjectStore::append_all(const std::vector<Event>& es) {
  std::unique_lock lock(mu_);
  if (es.empty()) return state_.version;
  if (es.size() == 1) {
    apply_event(state_, es.front());
  } else {
    ProjectState next = state_;
    for (const auto& e : es) apply_event(next, e);
    state_ = std::move(next);
  }
  log_.insert(log_.end(), es.begin(), es.end());
  persist(es);
  maybe_checkpoint_locked();
  return state_.version;
}

ProjectState ProjectStore::snapshot(std::uint64_t version) const {
  std::shared_lock lock(mu_);
  if (version > log_.size()) throw NotFoundError("no such version " + std::to_string(version));
  ProjectState s;
  for (std::uint64_t i = 0; i < version; ++i) apply_event(s, log_[i]);
  return s;
}

std::vector<Event> ProjectStore::events() const {
  std::shared_lock lock(mu_);
  return log_;
}

void ProjectStore::persist(const std::vector<Event>& es) {
  if (!dir_) return;
  std::ofstream out(*dir_ / "events.jsonl", std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to event log in " + dir_->string());
  out << serialize_events(es);
  out.flush();
}

void ProjectStore::maybe_checkpoint_locked() {
  if (!dir_ || snapshot_interval_ == 0) return;
  if (state_.version % snapshot_interval_ != 0) return;
  util::write_file_atomic(*dir_ / "snapshots" / ("snapshot-" + std::to_string(state_.version) + ".json"),
                          serialize_state(state_));
}

void ProjectStore::checkpoint() {
  std::shared_lock lock(mu_);
  if (!dir_) return;
  util::write_file_atomic(*dir_ / "snapshots" / ("snapshot-" + std::to_string(state_.version) + ".json"),
                          serialize_state(state_));
}

}  // namespace normgraph
