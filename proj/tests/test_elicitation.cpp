#include "doctest.h"

#include <random>

#include "normgraph/elicitation.hpp"
#include "testing.hpp"

using namespace normgraph;
using namespace normgraph::elicitation;
using namespace ngtest;

namespace {

Conversation transcript_conversation() {
  return Json::parse(read_fixture("transcripts/elicitation_conversation.json")).get<Conversation>();
}

/// Answers each scripted step with canned text; records history lengths.
ScriptedProvider scripted_session(std::vector<std::size_t>& history_sizes, const std::string& nve_answer) {
  return ScriptedProvider([&history_sizes, nve_answer](const std::vector<Message>& m) {
    history_sizes.push_back(m.size());
    const auto& p = m.back().content;
    if (p.rfind("Translate", 0) == 0) return ChatResult::success("(already English)");
    if (p.rfind("List the people", 0) == 0) {
      return ChatResult::success("Mrs. Zuo: Zho Zpeng - mother-son\nMr. Zuo and Mrs. Zuo: husband-wife");
    }
    if (p.rfind("List the Chinese", 0) == 0) return ChatResult::success(nve_answer);
    return ChatResult::success("A family argues about a gift.");
  });
}

std::vector<std::string> titles(const std::vector<ParsedItem>& v) {
  std::vector<std::string> out;
  for (const auto& i : v) out.push_back(i.title);
  return out;
}

}  // namespace

TEST_CASE("the worked elicitation response parses into three norms, two violations, two effects") {
  const auto s = parse_sections(read_fixture("transcripts/elicitation_response.txt"));
  CHECK(s.any_header);
  CHECK(s.diagnostics.empty());
  CHECK(titles(s.norms) == std::vector<std::string>{"Respect for parents", "Unity within the family",
                                                     "Social relationships and obligations"});
  CHECK(titles(s.violations) ==
        std::vector<std::string>{"Disrespectful language", "Opposition towards Zho Zpeng's relationship"});
  REQUIRE(s.effects.size() == 2);
  CHECK(s.effects[0].body.find("create tension and animosity") != std::string::npos);
  CHECK(s.effects[0].violation_index == 0u);
  CHECK(s.effects[1].body.find("disagreement and arguments") != std::string::npos);
  CHECK(s.effects[1].violation_index == 1u);
  CHECK(s.norms[0].body.rfind("Filial piety", 0) == 0);
}

TEST_CASE("effects link by number, by sub-header and by position") {
  const auto numbered = parse_sections(
      "**Violations:**\n1. **Shouting**: raised voice\n2. Ignoring: did not answer\n"
      "### Effects\n2. Hurt feelings: the father is upset\n1. Fear: the child is scared\n");
  REQUIRE(numbered.effects.size() == 2);
  CHECK(numbered.effects[0].violation_index == 1u);
  CHECK(numbered.effects[1].violation_index == 0u);
  CHECK(numbered.violations[0].title == "Shouting");

  const auto grouped = parse_sections(
      "Violations:\nShouting: raised voice\nIgnoring: did not answer\n"
      "Effects:\nViolation 2:\n- Distance: the two stop talking\n- Resentment: lasting anger\n");
  REQUIRE(grouped.effects.size() == 2);
  CHECK(grouped.effects[0].violation_index == 1u);
  CHECK(grouped.effects[1].violation_index == 1u);

  const auto positional =
      parse_sections("Violations:\nShouting: raised voice\nEffects:\n- it scares people\n- unrelated extra effect\n");
  REQUIRE(positional.effects.size() == 1);
  CHECK(positional.effects[0].body == "it scares people");
  CHECK(positional.diagnostics.size() == 1);
}

TEST_CASE("colon-less lines continue the previous item") {
  const auto s = parse_sections("Norms:\nHospitality: guests are offered tea\nand a seat near the host.\n- Modesty\n");
  REQUIRE(s.norms.size() == 2);
  CHECK(s.norms[0].body == "guests are offered tea and a seat near the host.");
  CHECK(s.norms[1].title.empty());
  CHECK(s.norms[1].body == "Modesty");
}

TEST_CASE("an empty or headerless response yields nothing and one diagnostic") {
  for (const char* text : {"", "I cannot help with that.", "\n\n\n"}) {
    CAPTURE(text);
    const auto s = parse_sections(text);
    CHECK(s.norms.empty());
    CHECK(s.violations.empty());
    CHECK(s.effects.empty());
    CHECK_FALSE(s.any_header);
    CHECK(s.diagnostics == std::vector<std::string>{"no recognized section header"});
  }
}

TEST_CASE("a response without an Effects block keeps norms and violations") {
  auto text = read_fixture("transcripts/elicitation_response.txt");
  text = text.substr(0, text.find("Effects:"));
  const auto s = parse_sections(text);
  CHECK(s.norms.size() == 3);
  CHECK(s.violations.size() == 2);
  CHECK(s.effects.empty());
  CHECK(s.diagnostics.empty());
}

TEST_CASE("the parser is total on random text") {
  const std::vector<std::string> tokens{"Norms:", "Violations:", "Effects:", "Summary:", "1.", "2)", "- ",
                                        "**", "##", ":", "Violation 3", "Shouting", "tension", "\n",
                                        "\n", " ", "尊重", "\t", "#", "99:", "Effects", "a: b"};
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1), len(0, 60);
  for (int round = 0; round < 500; ++round) {
    std::string text;
    for (std::size_t n = len(rng); n > 0; --n) text += tokens[pick(rng)];
    CAPTURE(text);
    Sections s;
    CHECK_NOTHROW(s = parse_sections(text));
    for (const auto& e : s.effects) {
      REQUIRE(e.violation_index);
      CHECK(*e.violation_index < s.violations.size());
    }
    // Whatever comes out is storable.
    ProjectState st;
    apply_event(st, events::add_conversation(make_conversation("c", {{"A", "x"}})));
    for (const auto& d : to_descriptions("c", s)) CHECK_NOTHROW(apply_event(st, events::add_description(d)));
    CHECK(validate_project(st).empty());
  }
}

TEST_CASE("elicit runs the four steps as one session") {
  const auto c = transcript_conversation();
  std::vector<std::size_t> sizes;
  auto provider = scripted_session(sizes, read_fixture("transcripts/elicitation_response.txt"));
  ElicitOptions opts;
  opts.clock = util::Clock::fixed("2024-06-11T00:00:00Z");
  const auto r = elicit(c, provider, PromptScript::standard(), opts);
  CHECK(sizes == std::vector<std::size_t>{1, 3, 5, 7});
  CHECK(r.failures.empty());
  REQUIRE(r.transcript.steps.size() == 4);
  CHECK(r.transcript.steps[0].request.find(c.render()) != std::string::npos);
  CHECK(r.transcript.steps[1].request.find("Mrs. Zuo") == std::string::npos);
  CHECK(r.transcript.steps[3].started == "2024-06-11T00:00:00Z");
  CHECK(r.summary == "A family argues about a gift.");
  CHECK(r.relationships.size() == 2);
  REQUIRE(r.descriptions.size() == 7);

  std::map<DescriptionKind, int> kinds;
  for (const auto& d : r.descriptions) ++kinds[d.kind];
  CHECK(kinds[DescriptionKind::norm] == 3);
  CHECK(kinds[DescriptionKind::violation] == 2);
  CHECK(kinds[DescriptionKind::effect] == 2);

  // The tension effect hangs off the disrespectful-language violation.
  const auto& tension = r.descriptions[5];
  REQUIRE(tension.parent_id);
  const auto parent = std::find_if(r.descriptions.begin(), r.descriptions.end(),
                                   [&](const NormDescription& d) { return d.id == *tension.parent_id; });
  REQUIRE(parent != r.descriptions.end());
  CHECK(parent->title == "Disrespectful language");
  CHECK(tension.body.find("create tension and animosity") != std::string::npos);

  ProjectState s;
  apply_event(s, events::add_conversation(c));
  const auto plan = plan_elicit(s, {r});
  REQUIRE(plan.size() == 8);
  CHECK(plan.back().type == "fill_conversation");
  apply_all(s, plan);
  CHECK(validate_project(s).empty());
  CHECK(s.conversations.at("appd-1").summary == "A family argues about a gift.");
}

TEST_CASE("re-running elicitation is idempotent") {
  const auto c = transcript_conversation();
  std::vector<std::size_t> sizes;
  auto provider = scripted_session(sizes, read_fixture("transcripts/elicitation_response.txt"));
  const auto a = elicit(c, provider, PromptScript::standard());
  const auto b = elicit(c, provider, PromptScript::standard());
  CHECK(a.descriptions == b.descriptions);

  ProjectState s;
  apply_event(s, events::add_conversation(c));
  apply_all(s, plan_elicit(s, {a}));
  CHECK(plan_elicit(s, {b}).empty());
  CHECK(plan_elicit(s, {a, a}).empty());
  CHECK_THROWS_AS(plan_elicit(ProjectState{}, {a}), NotFoundError);

  CHECK(description_id("c", DescriptionKind::norm, 0, "t", "b") ==
        description_id("c", DescriptionKind::norm, 0, "t", "b"));
  CHECK(description_id("c", DescriptionKind::norm, 0, "t", "b") !=
        description_id("c", DescriptionKind::violation, 0, "t", "b"));
  CHECK(description_id("c", DescriptionKind::norm, 0, "t", "b") !=
        description_id("c", DescriptionKind::norm, 1, "t", "b"));
}

TEST_CASE("a provider failure stops the session and is reported") {
  const auto c = transcript_conversation();
  int calls = 0;
  ScriptedProvider provider([&](const std::vector<Message>&) {
    return ++calls == 1 ? ChatResult::success("ok") : ChatResult::failure("quota exceeded", false);
  });
  const auto r = elicit(c, provider, PromptScript::standard());
  REQUIRE(r.transcript.steps.size() == 2);
  CHECK(r.transcript.steps[1].error == "quota exceeded");
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].find("participants") != std::string::npos);
  CHECK(r.descriptions.empty());
  CHECK_THROWS_AS(elicit(make_conversation("e", {}), provider, PromptScript::standard()), PreconditionError);
}

TEST_CASE("transcripts round-trip through disk") {
  TempDir dir;
  Transcript t{"c1", "r7", {TranscriptStep{"translate", "q", "a", "t0", "t1", 2, ""},
                            TranscriptStep{"summary", "q2", "", "t2", "t3", 0, "timeout"}}};
  const auto path = write_transcript(dir.path(), t);
  CHECK(path.filename() == "c1-r7.json");
  const auto back = Json::parse(util::read_file(path)).get<Transcript>();
  CHECK(Json(back) == Json(t));
  CHECK_FALSE(Json(t.steps[0]).contains("error"));
}
