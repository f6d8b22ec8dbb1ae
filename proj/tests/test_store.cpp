#include "doctest.h"

#include <random>
#include <thread>

#include "normgraph/store.hpp"
#include "generators.hpp"
#include "testing.hpp"

using namespace normgraph;
using namespace ngtest;

TEST_CASE("append create_concept then snapshot shows the concept") {
  ProjectStore store;
  for (const auto& e : consistent_events()) store.append(e);
  const auto v = store.version();
  CHECK(v == consistent_events().size());
  const auto snap = store.snapshot(v);
  REQUIRE(snap.concepts.count("k1"));
  CHECK(snap.concepts.at("k1").seed_ids.size() == 5);
  CHECK(snap.active_assignment("n1")->provenance == AssignmentProvenance::human_seed);
  CHECK(snap.active_assignment("n1")->score == 1.0);
}

TEST_CASE("rejected events name the invariant and leave the state unchanged") {
  ProjectStore store;
  store.append_all(consistent_events());
  const auto before = serialize_state(store.state());
  try {
    store.append(events::create_concept(make_concept("k2", "Other", {"n1", "n5", "n9", "n10", "v1"})));
    FAIL("expected rejection");
  } catch (const InvariantError& e) {
    CHECK(e.rule() == "many-to-one violated");
    CHECK(std::string(e.what()).find("k1") != std::string::npos);
  }
  CHECK(serialize_state(store.state()) == before);
  CHECK_THROWS_AS(store.append(events::assign(ConceptAssignment{"n1", "k1", AssignmentProvenance::knn, 0.9, 0, true})),
                  InvariantError);
  CHECK(serialize_state(store.state()) == before);
}

TEST_CASE("append_all is all or nothing") {
  ProjectStore store;
  auto es = consistent_events();
  es.insert(es.begin() + 3, events::add_description(make_description("bad", "nowhere", DescriptionKind::norm, "t", "b")));
  CHECK_THROWS_AS(store.append_all(es), InvariantError);
  CHECK(store.version() == 0);
  CHECK(store.events().empty());
}

TEST_CASE("status never moves back out of discarded") {
  ProjectStore store;
  store.append_all(consistent_events());
  store.append(events::record_verdict(VerificationVerdict{"n5", Aspect::relevance, Workflow::self, Decision::discard, {}, ""}));
  CHECK(store.state().descriptions.at("n5").status == DescriptionStatus::discarded);
  VerificationVerdict again{"n5", Aspect::relevance, Workflow::multiagent, Decision::retain,
                            {CriterionScore{"Clarity", "5", 1.0, true}}, ""};
  try {
    store.append(events::record_verdict(again));
    FAIL("expected rejection");
  } catch (const InvariantError& e) {
    CHECK(e.rule() == "status transition not allowed");
  }
}

TEST_CASE("a discarded k-NN member loses its assignment; a discarded seed keeps it") {
  ProjectStore store;
  store.append_all(consistent_events());
  store.append(events::record_verdict(VerificationVerdict{"n8", Aspect::relevance, Workflow::self, Decision::discard, {}, ""}));
  store.append(events::record_verdict(VerificationVerdict{"n1", Aspect::relevance, Workflow::self, Decision::discard, {}, ""}));
  const auto s = store.state();
  CHECK(s.active_assignment("n8") == nullptr);
  REQUIRE(s.active_assignment("n1") != nullptr);
  CHECK(s.active_assignment("n1")->provenance == AssignmentProvenance::human_seed);
}

TEST_CASE("replaying the log twice gives identical snapshots") {
  TempDir dir;
  {
    ProjectStore store(dir.path());
    store.append_all(consistent_events());
  }
  const auto a = serialize_state(ProjectStore(dir.path()).state());
  const auto b = serialize_state(ProjectStore(dir.path()).state());
  CHECK(a == b);
  CHECK(a == serialize_state(consistent_state()));
}

TEST_CASE("1000-event random logs replay to a fixpoint") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    TempDir dir;
    EventFuzzer fuzz(seed);
    std::size_t accepted = 0, rejected = 0;
    std::map<std::string, std::size_t> by_type;
    {
      ProjectStore store(dir.path(), /*snapshot_interval=*/128);
      std::size_t attempts = 0;
      while (accepted < 1000 && attempts < 200000) {
        ++attempts;
        const auto before_version = store.version();
        const auto e = fuzz.next(store.state());
        try {
          store.append(e);
          ++accepted;
          ++by_type[e.type];
        } catch (const InvariantError&) {
          ++rejected;
          REQUIRE(store.version() == before_version);
        }
      }
      REQUIRE(accepted == 1000);
      CHECK(rejected > 0);
      // Every event kind shows up in the accepted log.
      CHECK(by_type.size() == 13);

      const auto live = serialize_state(store.state());
      const auto log = read_event_log(dir.path() / "events.jsonl");
      REQUIRE(log.size() == 1000);
      CHECK(log == store.events());
      CHECK(serialize_state(fold(log)) == live);

      // Prefix snapshots equal prefix folds, with or without a checkpoint.
      for (std::uint64_t v : {0ull, 1ull, 127ull, 128ull, 129ull, 500ull, 999ull, 1000ull}) {
        CAPTURE(v);
        const std::vector<Event> prefix(log.begin(), log.begin() + static_cast<long>(v));
        CHECK(serialize_state(store.snapshot(v)) == serialize_state(fold(prefix)));
      }
      CHECK(fs::exists(dir / "snapshots"));
    }
    ProjectStore reopened(dir.path());
    const auto replayed = reopened.state();
    CHECK(replayed.version == 1000);
    CHECK(serialize_state(replayed) == serialize_state(fold(read_event_log(dir.path() / "events.jsonl"))));
    CHECK(serialize_state(deserialize_state(serialize_state(replayed))) == serialize_state(replayed));
    // Independent count oracle over the accepted log.
    CHECK(replayed.descriptions.size() == by_type["add_description"]);
    CHECK(replayed.conversations.size() == by_type["add_conversation"]);
    CHECK(replayed.concepts.size() == by_type["create_concept"]);
    CHECK(replayed.judgments.size() == by_type["add_judgment"]);
    CHECK(replayed.verdicts.size() == by_type["record_verdict"]);
    CHECK(replayed.groundings.size() == by_type["add_grounding"]);
    CHECK(replayed.round == static_cast<int>(by_type["record_clusters"]));
    CHECK(validate_project(replayed).empty());
  }
}

TEST_CASE("a torn final log line is ignored on reopen") {
  TempDir dir;
  {
    ProjectStore store(dir.path());
    store.append_all(consistent_events());
  }
  {
    std::ofstream f(dir / "events.jsonl", std::ios::app);
    f << "{\"type\":\"add_judg";
  }
  ProjectStore reopened(dir.path());
  CHECK(reopened.version() == consistent_events().size());
}

TEST_CASE("readers see whole versions while a writer appends") {
  ProjectStore store;
  store.append(events::add_conversation(make_conversation("c", {{"A", "x"}})));
  std::atomic<bool> done{false};
  std::atomic<bool> torn{false};
  std::thread reader([&] {
    while (!done) {
      store.read([&](const ProjectState& s) {
        if (s.descriptions.size() + 1 != s.version) torn = true;
        return 0;
      });
    }
  });
  for (int i = 0; i < 300; ++i) {
    store.append(events::add_description(make_description("d" + std::to_string(i), "c", DescriptionKind::norm, "t", "b")));
  }
  done = true;
  reader.join();
  CHECK_FALSE(torn);
}
