#include "doctest.h"

#include <functional>

#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"
#include "testing.hpp"

using namespace normgraph;
using namespace ngtest;

namespace {

std::vector<std::string> rules(const ProjectState& s) {
  std::vector<std::string> out;
  for (const auto& r : validate_project(s)) out.push_back(r.rule);
  return out;
}

}  // namespace

TEST_CASE("enum names round-trip and unknown values are parse errors") {
  CHECK(to_string(Provenance::provider_filled) == "provider-filled");
  CHECK(parse_enum<DescriptionStatus>("agent_verified") == DescriptionStatus::agent_verified);
  CHECK(parse_enum<Compatibility>("no_match") == Compatibility::no_match);
  CHECK_THROWS_AS(parse_enum<Aspect>("hallucination"), ParseError);
  CHECK_FALSE(try_parse_enum<Emotion>("joy").has_value());
}

TEST_CASE("emotion vocabulary is the fixed nine") {
  std::vector<std::string> names;
  for (const auto& [e, n] : EnumNames<Emotion>::values) names.emplace_back(n);
  CHECK(names == std::vector<std::string>{"anger", "disgust", "fear", "happiness", "sadness", "surprise", "contempt",
                                          "anticipation", "neutral"});
}

TEST_CASE("description text splits title and body") {
  auto d = make_description("d", "c", DescriptionKind::norm, "Respect for parents", "Filial piety");
  CHECK(d.text() == "Respect for parents: Filial piety");
  d.title.clear();
  CHECK(d.text() == "Filial piety");
}

TEST_CASE("conversation render lists speaker lines in order") {
  const auto c = make_conversation("c", {{"A", "one"}, {"B", "two"}});
  CHECK(c.render() == "A: one\nB: two\n");
  CHECK(c.speakers() == std::vector<std::string>{"A", "B"});
}

TEST_CASE("criterion ordinal scales and scoring eligibility") {
  Criterion clarity{"Clarity", "", {"1 - very unclear", "2 - unclear", "3 - neutral", "4 - clear", "5 - very clear"}};
  CHECK(clarity.ordinal());
  CHECK(clarity.scored());
  Criterion role{"Role", "", {"enactor", "acceptor", "both"}};
  CHECK_FALSE(role.ordinal());
  CHECK_FALSE(role.scored());
  role.score_map = {{"enactor", 1.0}, {"acceptor", 0.0}, {"both", 0.5}};
  CHECK(role.scored());
  clarity.robust = false;
  CHECK_FALSE(clarity.scored());
}

TEST_CASE("grounding flags no_match and irrelevant verdicts") {
  SymbolicGrounding g;
  CHECK_FALSE(g.flagged());
  g.relevance = Relevance::irrelevant;
  CHECK(g.flagged());
  g.relevance.reset();
  g.compatibility = Compatibility::no_match;
  CHECK(g.flagged());
}

TEST_CASE("validate_project on a consistent fixture reports nothing") {
  CHECK(validate_project(consistent_state()).empty());
  CHECK(validate_project(ProjectState{}).empty());
}

TEST_CASE("an effect under a norm is one report") {
  auto s = consistent_state();
  s.descriptions["e1"].parent_id = "n1";
  const auto r = validate_project(s);
  REQUIRE(r.size() == 1);
  CHECK(r[0].rule == "effect parent must be violation");
  CHECK(r[0].target_id == "e1");
}

TEST_CASE("two active assignments for one description is one report") {
  auto s = consistent_state();
  s.assignments.push_back(ConceptAssignment{"n4", "k1", AssignmentProvenance::knn, 0.9, 1, true});
  const auto r = validate_project(s);
  REQUIRE(r.size() == 1);
  CHECK(r[0].rule == "many-to-one violated");
}

TEST_CASE("every planted invariant break is found") {
  struct Plant {
    const char* rule;
    std::function<void(ProjectState&)> mutate;
  };
  const std::vector<Plant> plants{
      {"turns must be non-empty", [](ProjectState& s) { s.conversations["c1"].turns.clear(); }},
      {"turn indices must be contiguous", [](ProjectState& s) { s.conversations["c1"].turns[1].index = 5; }},
      {"turn text must be non-empty", [](ProjectState& s) { s.conversations["c1"].turns[0].text.clear(); }},
      {"turn label task unknown", [](ProjectState& s) { s.conversations["c1"].turns[0].labels["mood"] = "x"; }},
      {"relationship endpoint not a speaker",
       [](ProjectState& s) { s.conversations["c1"].relationships[0].speaker_a = "Zhao"; }},
      {"relationship endpoints must differ",
       [](ProjectState& s) { s.conversations["c1"].relationships[0].speaker_b = "Wang"; }},
      {"settings field must be non-empty", [](ProjectState& s) { s.conversations["c1"].settings->field.clear(); }},
      {"description conversation unknown", [](ProjectState& s) { s.descriptions["n1"].conversation_id = "c9"; }},
      {"effect requires parent", [](ProjectState& s) { s.descriptions["e1"].parent_id.reset(); }},
      {"effect parent unknown", [](ProjectState& s) { s.descriptions["e1"].parent_id = "v9"; }},
      {"parent only allowed on effects", [](ProjectState& s) { s.descriptions["n1"].parent_id = "v1"; }},
      {"seed count out of range", [](ProjectState& s) { s.concepts["k1"].seed_ids.resize(4); }},
      {"concept example sets must be disjoint", [](ProjectState& s) { s.concepts["k1"].good_ids = {"n1"}; }},
      {"concept references unknown description", [](ProjectState& s) { s.concepts["k1"].bad_ids = {"zz"}; }},
      {"concept name must be unique",
       [](ProjectState& s) {
         auto c = s.concepts["k1"];
         c.id = "k2";
         s.concepts["k2"] = c;
       }},
      {"assignment references unknown concept", [](ProjectState& s) { s.assignments.back().concept_id = "k9"; }},
      {"assignment score out of range", [](ProjectState& s) { s.assignments.back().score = 1.5; }},
      {"embedding length mismatch",
       [](ProjectState& s) {
         s.embeddings["n1"] = EmbeddingRecord{"n1", {1, 0}, "m", false};
         s.embeddings["n2"] = EmbeddingRecord{"n2", {1, 0, 0}, "m", false};
       }},
      {"embedding not normalized",
       [](ProjectState& s) { s.embeddings["n1"] = EmbeddingRecord{"n1", {2, 0}, "m", true}; }},
      {"violation block iff violate", [](ProjectState& s) { s.groundings.begin()->second.violation.reset(); }},
      {"grounding fields require match",
       [](ProjectState& s) { s.groundings.begin()->second.compatibility = Compatibility::no_match; }},
      {"likert out of range", [](ProjectState& s) { s.judgments.back().likert = 6; }},
      {"likert only on mapping judgments", [](ProjectState& s) { s.judgments.front().likert = 3; }},
      {"multiagent verdict needs robust score",
       [](ProjectState& s) {
         s.verdicts.push_back(VerificationVerdict{"n1", Aspect::relevance, Workflow::multiagent, Decision::retain,
                                                  {CriterionScore{"Clarity", "3", 0.5, false}}, ""});
       }},
  };
  for (const auto& p : plants) {
    CAPTURE(p.rule);
    auto s = consistent_state();
    s.rebuild_indexes();
    p.mutate(s);
    const auto found = rules(s);
    CHECK(std::find(found.begin(), found.end(), p.rule) != found.end());
  }
}

TEST_CASE("status transitions form a DAG with discarded terminal") {
  using S = DescriptionStatus;
  const std::vector<S> all{S::raw, S::self_verified, S::agent_verified, S::discarded};
  for (auto from : all) {
    CHECK_FALSE(status_transition_allowed(from, S::raw));
    CHECK_FALSE(status_transition_allowed(from, from));
  }
  CHECK(status_transition_allowed(S::raw, S::self_verified));
  CHECK(status_transition_allowed(S::raw, S::agent_verified));
  CHECK(status_transition_allowed(S::self_verified, S::agent_verified));
  CHECK_FALSE(status_transition_allowed(S::agent_verified, S::self_verified));
  for (auto to : all) CHECK_FALSE(status_transition_allowed(S::discarded, to));
  CHECK(status_transition_allowed(S::agent_verified, S::discarded));
}

TEST_CASE("project state JSON round-trip is exact") {
  auto s = consistent_state();
  s.embeddings["n1"] = EmbeddingRecord{"n1", {0.6, 0.8}, "m", true};
  s.rubrics["relevance"] = Rubric{Aspect::relevance, 2, "task", {Criterion{"Clarity", "d", {"1 - a", "2 - b"}}}};
  s.clusters[1] = {ClusterView{0, {"n5"}, {1.0, 0.0}, 1, {"n5"}}};
  s.round = 1;
  const auto bytes = serialize_state(s);
  const auto back = deserialize_state(bytes);
  CHECK(serialize_state(back) == bytes);
  CHECK(back.conversations == s.conversations);
  CHECK(back.concepts == s.concepts);
  CHECK(back.groundings == s.groundings);
  CHECK(back.active_assignment("n4")->concept_id == "k1");
}

TEST_CASE("target ids are namespaced by aspect") {
  CHECK(mapping_target_id("d1", "k1") == "map:d1|k1");
  CHECK(violation_target_id("d1", "k1") == "viol:d1|k1");
  CHECK(grounding_key("d1", "k1") == "d1|k1");
}
