#pragma once

// Event-sourced project persistence. The event log is the source of truth;
// snapshots are folds over a prefix of the log.
//
// On-disk layout of a project directory:
//   events.jsonl                 one event per line, append-only
//   snapshots/snapshot-<v>.json  fold of the first v events (periodic)
//   transcripts/                 provider transcripts, one file per run
//   exports/                     graph exports, named by project version

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "normgraph/schema.hpp"

namespace normgraph {

struct Event {
  std::string type;
  Json payload;
  bool operator==(const Event&) const = default;
};

void to_json(Json& j, const Event& e);
void from_json(const Json& j, Event& e);

namespace events {

Event add_conversation(const Conversation& c);
/// Fills absent factual fields; each present argument is recorded with
/// provider-filled provenance.
Event fill_conversation(const std::string& conversation_id,
                        const std::optional<std::string>& summary,
                        const std::optional<std::vector<Relationship>>& relationships,
                        const std::optional<SettingsRecord>& settings);
Event add_description(const NormDescription& d);
Event set_embedding(const EmbeddingRecord& e);
Event record_clusters(int round, const std::vector<ClusterView>& clusters);
Event create_concept(const NormConcept& c);
Event mark_examples(const std::string& concept_id, const std::vector<std::string>& good,
                    const std::vector<std::string>& bad);
Event assign(const ConceptAssignment& a);
Event unassign(const std::string& description_id, int iteration);
Event add_grounding(const SymbolicGrounding& g);
Event add_judgment(const HumanJudgment& j);
Event record_verdict(const VerificationVerdict& v);
Event set_rubric(const Rubric& r);

}  // namespace events

/// Applies one event, enforcing every invariant the event could break.
/// Throws InvariantError naming the rule; the state is left unchanged on
/// failure.
void apply_event(ProjectState& state, const Event& event);

/// Canonical byte serialization of a snapshot.
std::string serialize_state(const ProjectState& state);
ProjectState deserialize_state(const std::string& bytes);

/// An unterminated final line (a torn append) is dropped; any other
/// malformed line is an error.
std::vector<Event> read_event_log(const std::filesystem::path& file);
std::string serialize_events(const std::vector<Event>& events);

/// Single-writer, many-reader project store.
class ProjectStore {
 public:
  /// In-memory store (no persistence).
  ProjectStore();
  /// Opens (or creates) a project directory and replays its log.
  explicit ProjectStore(std::filesystem::path dir, std::uint64_t snapshot_interval = 1000);

  ProjectStore(const ProjectStore&) = delete;
  ProjectStore& operator=(const ProjectStore&) = delete;

  std::uint64_t version() const;
  /// Copy of the latest state.
  ProjectState state() const;
  /// Runs f(const ProjectState&) under a shared lock.
  template <class F>
  decltype(auto) read(F&& f) const {
    std::shared_lock lock(mu_);
    return f(state_);
  }

  /// Appends one event; returns the new version.
  std::uint64_t append(const Event& e);
  /// Appends all events or none.
  std::uint64_t append_all(const std::vector<Event>& es);

  /// Fold of the first `version` events.
  ProjectState snapshot(std::uint64_t version) const;
  std::vector<Event> events() const;

  /// Writes snapshots/snapshot-<version>.json.
  void checkpoint();

  const std::optional<std::filesystem::path>& dir() const { return dir_; }

 private:
  void persist(const std::vector<Event>& es);
  void maybe_checkpoint_locked();

  mutable std::shared_mutex mu_;
  std::optional<std::filesystem::path> dir_;
  std::uint64_t snapshot_interval_ = 1000;
  std::vector<Event> log_;
  ProjectState state_;
};

}  // namespace normgraph
