#include "doctest.h"

#include <regex>

#include "normgraph/verification.hpp"
#include "session.hpp"

using namespace normgraph;
using namespace ngtest;

namespace {

struct Prepared {
  TempDir dir;
  Session session = prepare_session(dir.path());
};

Prepared& prepared() {
  static Prepared p;
  return p;
}

std::vector<Event> parse_events(const std::string& text) {
  std::vector<Event> out;
  for (const auto& line : util::split_lines(text))
    if (!util::trim(line).empty()) out.push_back(Json::parse(line).get<Event>());
  return out;
}

CliRun cli_on(const fs::path& project, std::vector<std::string> args) {
  args.insert(args.begin(), {"-p", project.string()});
  return run_cli(args);
}

/// Rates every relevance criterion at the top for descriptions in `keep`.
ScriptedProvider planted_quantifier(const Rubric& r, std::set<std::string> keep) {
  return ScriptedProvider([&r, keep](const std::vector<Message>& m) {
    static const std::regex id("s[0-9]{2}-n[0-9]");
    std::smatch match;
    std::string found;
    for (const auto& msg : m)
      if (std::regex_search(msg.content, match, id)) found = match.str();
    Json reply = Json::object();
    for (const auto& c : r.criteria)
      reply[c.name] = keep.count(found) ? c.accepted_values.back() : c.accepted_values.front();
    return ChatResult::success(reply.dump());
  });
}

}  // namespace

TEST_CASE("usage errors exit 2, runtime failures exit 1") {
  TempDir dir;
  auto r = run_cli({"cluster"});
  CHECK(r.code == 2);
  r = cli_on(dir / "proj", {"cluster", "--bogus"});
  CHECK(r.code == 2);
  CHECK_FALSE((r.out + r.err).empty());
  CHECK(run_cli({"-p", (dir / "proj").string()}).code == 2);

  r = cli_on(dir / "missing", {"cluster", "--k", "2"});
  CHECK(r.code == 1);
  CHECK(r.err.find("no project") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "missing" / "events.jsonl"));

  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("export-graph on an empty project writes an empty file") {
  TempDir dir;
  const auto project = dir / "proj";
  fs::create_directories(project);
  util::write_file_atomic(project / "events.jsonl", "");
  CHECK(cli_on(project, {"ingest", (dir / "none.jsonl").string()}).code == 1);
  auto r = cli_on(project, {"export-graph", "--out", (dir / "graph.jsonl").string()});
  CHECK(r.code == 0);
  REQUIRE(fs::exists(dir / "graph.jsonl"));
  CHECK(fs::file_size(dir / "graph.jsonl") == 0);
  CHECK(cli_on(project, {"validate"}).out == "ok: version 0\n");
}

TEST_CASE("clustering twice on the same snapshot writes identical cluster files") {
  auto& p = prepared();
  const auto a = copy_base(p.session, "cluster-a");
  const auto b = copy_base(p.session, "cluster-b");
  for (const auto& proj : {a, b}) {
    const auto r = cli_on(proj, {"cluster", "--k", "8", "--seed", "7", "--out", (proj / "views.json").string()});
    REQUIRE(r.code == 0);
  }
  const auto fa = util::read_file(a / "clusters" / "round-1.json");
  CHECK(fa == util::read_file(b / "clusters" / "round-1.json"));
  CHECK(fa == util::read_file(a / "views.json"));
  CHECK(Json::parse(fa).size() == 8);
  CHECK(util::read_file(a / "events.jsonl") == util::read_file(b / "events.jsonl"));
}

TEST_CASE("--dry-run prints the would-be events and leaves the project alone") {
  auto& p = prepared();
  const auto proj = copy_base(p.session, "dry");
  const auto before = util::read_file(proj / "events.jsonl");
  const auto r = cli_on(proj, {"--dry-run", "cluster", "--k", "2", "--seed", "7"});
  REQUIRE(r.code == 0);
  const auto events = parse_events(r.out);
  REQUIRE(events.size() == 1);
  CHECK(events[0].type == "record_clusters");
  CHECK(util::read_file(proj / "events.jsonl") == before);
  CHECK_FALSE(fs::exists(proj / "clusters"));
}

TEST_CASE("the config file supplies defaults and rejects unknown keys") {
  auto& p = prepared();
  const auto proj = copy_base(p.session, "config");
  REQUIRE(cli_on(proj, {"cluster", "--k", "2", "--seed", "7"}).code == 0);
  util::write_file_atomic(proj / "config.json", R"({"k": 3, "tua": 0.5})");
  auto r = cli_on(proj, {"progress"});
  CHECK(r.code == 1);
  CHECK(r.err.find("tua") != std::string::npos);

  util::write_file_atomic(proj / "config.json", R"({"k": 3, "seed": 11})");
  const auto other = proj.parent_path() / "other-config.json";
  util::write_file_atomic(other, R"({"tau": 2.5})");
  r = cli_on(proj, {"-c", other.string(), "augment"});
  CHECK(r.code == 1);
  CHECK(cli_on(proj, {"-c", (proj / "nope.json").string(), "progress"}).code == 1);

  REQUIRE(cli_on(proj, {"concept", "import", (p.dir / "respect-authority.json").string()}).code == 0);
  REQUIRE(cli_on(proj, {"augment"}).code == 0);
  r = cli_on(proj, {"--dry-run", "cluster"});
  REQUIRE(r.code == 0);
  const auto events = parse_events(r.out);
  REQUIRE(events.size() == 1);
  CHECK(events[0].payload["clusters"].size() == 3);
}

TEST_CASE("verify in agents mode replays to the recorded verdict log") {
  auto& p = prepared();
  const auto recorded = copy_base(p.session, "verify-recorded");
  const auto replayed = copy_base(p.session, "verify-replayed");
  const auto rubric_file = p.dir / "relevance-rubric.json";
  fs::copy_file(fixture("rubrics/relevance.json"), rubric_file, fs::copy_options::overwrite_existing);
  for (const auto& proj : {recorded, replayed}) REQUIRE(cli_on(proj, {"rubric", "import", rubric_file.string()}).code == 0);

  const auto rubric = Json::parse(read_fixture("rubrics/relevance.json")).get<Rubric>();
  std::set<std::string> keep(p.session.a_ids.begin(), p.session.a_ids.end());
  auto inner = std::make_shared<ScriptedProvider>(planted_quantifier(rubric, keep));
  const auto tape = p.dir / "verify-tape.jsonl";
  std::vector<VerificationVerdict> expected;
  {
    ProjectStore store(recorded);
    RecordingProvider rec(inner, tape);
    verification::VerifyOptions vo;
    vo.workflow = Workflow::multiagent;
    vo.threshold = 0.7;
    verification::run_verification(store, rec, vo);
    expected = store.state().verdicts;
  }
  REQUIRE(expected.size() == 60);

  const auto r = cli_on(replayed, {"--provider", "replay:" + tape.string(), "verify", "--aspect", "relevance",
                                   "--mode", "agents", "--threshold", "0.7"});
  CHECK(r.code == 0);
  CHECK(r.err.find("targets 60, retained 30, discarded 30") != std::string::npos);
  const auto got = ProjectStore(replayed).state().verdicts;
  CHECK(Json(got) == Json(expected));

  // A second pass has nothing pending and needs no provider calls.
  CHECK(cli_on(replayed, {"--provider", "replay:" + tape.string(), "verify", "--mode", "agents"}).code == 0);
  CHECK(ProjectStore(replayed).state().verdicts.size() == 60);
}

TEST_CASE("reports and exports run from the command line") {
  auto& p = prepared();
  const auto proj = copy_base(p.session, "reports");
  const auto state = run_session_cli(p.session, proj);
  util::write_file_atomic(p.dir / "judgments.csv",
                          "target_id,annotator_id,aspect,verdict,likert\n"
                          "s01-n1,a,relevance,yes,\ns01-n1,b,relevance,no,\n"
                          "s01-n3,a,relevance,yes,\ns01-n3,b,relevance,yes,\n");
  REQUIRE(cli_on(proj, {"judgments", "import", (p.dir / "judgments.csv").string()}).code == 0);

  auto r = cli_on(proj, {"metrics", "agreement", "--json"});
  CHECK(r.code == 0);
  CHECK(Json::parse(r.out)[0]["aspect"] == "relevance");
  r = cli_on(proj, {"metrics", "distribution", "--out-dir", (proj / "plots").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("Respect For Authority") != std::string::npos);
  CHECK(fs::exists(proj / "plots" / "distribution.vl.json"));
  r = cli_on(proj, {"metrics", "stages", "--json"});
  CHECK(Json::parse(r.out)["total"]["descriptions"]["norm"]["raw"] == 60);
  CHECK(cli_on(proj, {"metrics", "likert"}).code == 1);  // no ratings yet

  r = cli_on(proj, {"export-graph"});
  CHECK(r.code == 0);
  const auto path = proj / "exports" / ("graph-v" + std::to_string(state.version + 4) + ".jsonl");
  REQUIRE(fs::exists(path));
  CHECK(util::read_file(path).find("\"type\":\"concept\"") != std::string::npos);
  r = cli_on(proj, {"concept", "export"});
  CHECK(Json::parse(r.out).size() == 2);
  CHECK(cli_on(proj, {"validate"}).code == 0);
}

TEST_CASE("the scripted session gives the same snapshot through the CLI and the HTTP API") {
  auto& p = prepared();
  const auto cli_state = run_session_cli(p.session, copy_base(p.session, "eq-cli"));
  const auto api_state = run_session_api(p.session, copy_base(p.session, "eq-api"));
  CHECK(Json(cli_state) == Json(api_state));
  const auto progress = cli_on(copy_base(p.session, "eq-progress"), {"progress"});
  CHECK(progress.code == 0);
  const auto cov = discovery::coverage_stats(cli_state);
  CHECK(cov.concepts == 2);
  CHECK(cov.coverage_fraction >= 0.6);
  for (const auto& id : p.session.outliers) CHECK_FALSE(cli_state.active_assignment(id));
}
