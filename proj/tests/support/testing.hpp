#pragma once

// Shared test helpers: temp directories, fixture paths, fixture builders and
// the independent oracles the suites compare the library against. Oracles
// deliberately avoid the library's own numeric code paths.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "normgraph/discovery.hpp"
#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"
#include "normgraph/util.hpp"

#ifndef NORMGRAPH_FIXTURES
#error "NORMGRAPH_FIXTURES must point at tests/fixtures"
#endif

namespace ngtest {

namespace fs = std::filesystem;
using namespace normgraph;
using Vec = std::vector<double>;

inline fs::path fixture(const std::string& rel) { return fs::path(NORMGRAPH_FIXTURES) / rel; }

inline std::string read_fixture(const std::string& rel) { return util::read_file(fixture(rel)); }

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("normgraph-test-" + util::random_uuid());
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------
// Small builders

inline Conversation make_conversation(const std::string& id, std::vector<std::pair<std::string, std::string>> lines,
                                      std::optional<std::string> field = std::nullopt,
                                      const std::string& source = "generic") {
  Conversation c;
  c.id = id;
  c.source = source;
  int i = 0;
  for (auto& [speaker, text] : lines) c.turns.push_back(Turn{i++, speaker, text, {}});
  if (field) {
    c.settings = SettingsRecord{};
    c.settings->field = *field;
  }
  return c;
}

inline NormDescription make_description(const std::string& id, const std::string& conv, DescriptionKind kind,
                                        const std::string& title, const std::string& body,
                                        std::optional<std::string> parent = std::nullopt) {
  NormDescription d;
  d.id = id;
  d.conversation_id = conv;
  d.kind = kind;
  d.title = title;
  d.body = body;
  d.parent_id = std::move(parent);
  return d;
}

inline ConceptStructure make_structure(const std::string& name) {
  return ConceptStructure{name, "Respecting hierarchies in family and work",
                          {"workplace", "family", "organizations"},
                          "Ignoring a superior's instructions",
                          "subordinates, juniors",
                          "superiors, elders"};
}

inline NormConcept make_concept(const std::string& id, const std::string& name, std::vector<std::string> seeds) {
  NormConcept c;
  c.id = id;
  c.structure = make_structure(name);
  c.seed_ids = std::move(seeds);
  c.created_by = "tester";
  return c;
}

inline void apply_all(ProjectState& s, const std::vector<Event>& es) {
  for (const auto& e : es) apply_event(s, e);
}

inline Vec random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(dim);
  double s = 0;
  for (auto& x : v) {
    x = n(rng);
    s += x * x;
  }
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

/// Points scattered around `centers`, label = center index. Noise is
/// isotropic Gaussian with the given sigma; points are not normalized.
inline std::pair<std::vector<Vec>, std::vector<int>> planted_blobs(std::mt19937_64& rng, const std::vector<Vec>& centers,
                                                                  std::size_t per_blob, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<Vec> pts;
  std::vector<int> labels;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      Vec p = centers[c];
      for (auto& x : p) x += n(rng);
      pts.push_back(std::move(p));
      labels.push_back(static_cast<int>(c));
    }
  }
  return {pts, labels};
}

/// Two conversations (c1 company, c2 family) sharing one concept:
///   c1: n1..n5 norms, v1 violation, e1 effect of v1
///   c2: n6..n10 norms, v2 violation, e2 effect of v2
/// Concept k1 has seeds n1 n2 n3 n6 n7; n4 and n8 are k-NN members of k1;
/// n4|k1 is grounded as a violation.
inline std::vector<Event> consistent_events() {
  std::vector<Event> es;
  auto c1 = make_conversation("c1", {{"Li", "Report is late."}, {"Wang", "Sorry, manager."}}, "company", "mpdd");
  c1.relationships.push_back(Relationship{"Wang", "Li", "subordinate-superior", Provenance::gold});
  c1.summary = "A manager chases a late report.";
  auto c2 = make_conversation("c2", {{"Mom", "Eat first."}, {"Son", "Yes, mom."}}, "family", "cped");
  es.push_back(events::add_conversation(c1));
  es.push_back(events::add_conversation(c2));
  for (int i = 1; i <= 10; ++i) {
    const auto id = "n" + std::to_string(i);
    es.push_back(events::add_description(
        make_description(id, i <= 5 ? "c1" : "c2", DescriptionKind::norm, "Norm " + id, "body " + id)));
  }
  es.push_back(events::add_description(make_description("v1", "c1", DescriptionKind::violation, "Late", "x")));
  es.push_back(events::add_description(make_description("v2", "c2", DescriptionKind::violation, "Rude", "y")));
  es.push_back(events::add_description(make_description("e1", "c1", DescriptionKind::effect, "Tension", "z", "v1")));
  es.push_back(events::add_description(make_description("e2", "c2", DescriptionKind::effect, "Anger", "w", "v2")));
  es.push_back(events::create_concept(make_concept("k1", "Respect For Authority", {"n1", "n2", "n3", "n6", "n7"})));
  es.push_back(events::assign(ConceptAssignment{"n4", "k1", AssignmentProvenance::knn, 0.8, 0, true}));
  es.push_back(events::assign(ConceptAssignment{"n8", "k1", AssignmentProvenance::knn, 0.75, 0, true}));
  SymbolicGrounding g;
  g.description_id = "n4";
  g.concept_id = "k1";
  g.relevance = Relevance::relevant;
  g.enactor_role = "subordinate";
  g.acceptor_role = "manager";
  g.violation_status = ViolationStatus::violate;
  g.violation = ViolationDetail{"handing in work late", "subordinate", "manager", Emotion::fear, Emotion::anger};
  g.justifications["compatibility"] = "deference to a superior";
  es.push_back(events::add_grounding(g));
  es.push_back(events::add_judgment(HumanJudgment{"n4", "a1", Aspect::relevance, Verdict::yes, {}}));
  es.push_back(events::add_judgment(
      HumanJudgment{mapping_target_id("n4", "k1"), "a1", Aspect::mapping, Verdict::yes, 4}));
  return es;
}

inline ProjectState consistent_state() {
  ProjectState s;
  apply_all(s, consistent_events());
  return s;
}

// ---------------------------------------------------------------------------
// Clustering oracle

inline double choose2(double n) { return n * (n - 1) / 2; }

/// Adjusted Rand index from the contingency table (Hubert and Arabie).
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> nij;
  std::map<int, double> ai, bj;
  for (std::size_t i = 0; i < a.size(); ++i) {
    nij[{a[i], b[i]}] += 1;
    ai[a[i]] += 1;
    bj[b[i]] += 1;
  }
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, v] : nij) sum_ij += choose2(v);
  for (const auto& [k, v] : ai) sum_a += choose2(v);
  for (const auto& [k, v] : bj) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(static_cast<double>(a.size()));
  const double max_index = (sum_a + sum_b) / 2;
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Discovery oracle
//
// cos(d, normalize(sum_j g_j)) = sum_j d.g_j / sqrt(sum_jk g_j.g_k) for unit
// d and g_j, so every score is computed from pairwise dot products only.

inline double raw_dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec unit(const Vec& v) {
  const double n = std::sqrt(raw_dot(v, v));
  Vec out = v;
  if (n > 0)
    for (auto& x : out) x /= n;
  return out;
}

inline double pairwise_center_score(const Vec& d, const std::vector<Vec>& members) {
  const Vec du = unit(d);
  std::vector<Vec> us;
  for (const auto& m : members) us.push_back(unit(m));
  double num = 0, gram = 0;
  for (const auto& g : us) num += raw_dot(du, g);
  for (const auto& g : us)
    for (const auto& h : us) gram += raw_dot(g, h);
  if (gram <= 0 || raw_dot(du, du) == 0) return 0.0;
  return num / std::sqrt(gram);
}

struct OracleChoice {
  std::string concept_id;
  double score = 0;
};

/// Brute-force argmax over concepts in creation order; strict improvement
/// is needed to beat an earlier concept. `lambda` < 0 disables the bad term
/// (plain k-NN).
inline std::optional<OracleChoice> oracle_best(const ProjectState& s, const std::string& id, double tau,
                                               double lambda) {
  const Vec& d = s.embeddings.at(id).vector;
  std::optional<OracleChoice> best;
  for (const auto* c : s.concepts_by_creation()) {
    std::vector<Vec> good, bad;
    for (const auto& g : c->seed_ids)
      if (s.embeddings.count(g)) good.push_back(s.embeddings.at(g).vector);
    for (const auto& g : c->good_ids)
      if (s.embeddings.count(g)) good.push_back(s.embeddings.at(g).vector);
    for (const auto& b : c->bad_ids)
      if (s.embeddings.count(b)) bad.push_back(s.embeddings.at(b).vector);
    double score = pairwise_center_score(d, good);
    if (lambda >= 0 && !bad.empty()) score -= lambda * pairwise_center_score(d, bad);
    if (!best || score > best->score) best = OracleChoice{c->id, score};
  }
  if (!best || best->score < tau) return std::nullopt;
  return best;
}

inline bool pool_member(const NormDescription& d) {
  return d.kind == DescriptionKind::norm && d.status != DescriptionStatus::discarded;
}

/// description id -> (concept id, score) the augment step must add.
inline std::map<std::string, OracleChoice> oracle_augment(const ProjectState& s, double tau) {
  std::map<std::string, OracleChoice> out;
  for (const auto& [id, d] : s.descriptions) {
    if (!pool_member(d) || s.active_assignment(id) || !s.embeddings.count(id)) continue;
    if (auto b = oracle_best(s, id, tau, -1)) out[id] = *b;
  }
  return out;
}

/// Final active concept per pool description after reassignment.
inline std::map<std::string, std::string> oracle_reassign(const ProjectState& s, double tau, double lambda) {
  std::map<std::string, std::string> out;
  for (const auto& [id, d] : s.descriptions) {
    if (!pool_member(d)) continue;
    const auto* a = s.active_assignment(id);
    if (a && a->provenance == AssignmentProvenance::human_seed) {
      out[id] = a->concept_id;
      continue;
    }
    if (auto b = oracle_best(s, id, tau, lambda)) out[id] = b->concept_id;
  }
  return out;
}

inline std::map<std::string, std::string> active_map(const ProjectState& s) {
  std::map<std::string, std::string> out;
  for (const auto& [id, d] : s.descriptions) {
    if (const auto* a = s.active_assignment(id)) out[id] = a->concept_id;
  }
  return out;
}

/// One conversation, `n` norm descriptions d000.. with embeddings drawn
/// around `concepts` planted directions, and `concepts` concepts of 5 seeds
/// each. With `marks`, each concept gets up to 4 good and 4 bad marks drawn
/// from non-seed descriptions, after an augment step at `augment_tau`.
struct DiscoveryFixture {
  ProjectState state;
  std::vector<Vec> directions;
};

inline DiscoveryFixture random_discovery_fixture(std::mt19937_64& rng, std::size_t n, std::size_t concepts,
                                                 std::size_t dim, bool marks) {
  DiscoveryFixture f;
  auto& s = f.state;
  apply_event(s, events::add_conversation(make_conversation("c1", {{"A", "hello"}, {"B", "hi"}})));
  for (std::size_t c = 0; c < concepts; ++c) f.directions.push_back(random_unit(rng, dim));
  std::uniform_int_distribution<std::size_t> pick(0, concepts - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.45);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "d%03zu", i);
    ids.push_back(buf);
    apply_event(s, events::add_description(make_description(buf, "c1", DescriptionKind::norm, "t", buf)));
    Vec v = u(rng) < 0.15 ? random_unit(rng, dim) : f.directions[pick(rng)];
    const double scale = 0.5 + 2.0 * u(rng);  // un-normalized on purpose
    for (auto& x : v) x = scale * (x + noise(rng) / std::sqrt(static_cast<double>(dim)));
    apply_event(s, events::set_embedding(EmbeddingRecord{buf, v, "fixture", false}));
  }
  // A violation outside the pool; never a candidate.
  apply_event(s, events::add_description(make_description("v000", "c1", DescriptionKind::violation, "x", "y")));

  std::vector<std::string> order = ids;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t at = 0;
  for (std::size_t c = 0; c < concepts; ++c) {
    std::vector<std::string> seeds(order.begin() + at, order.begin() + at + 5);
    at += 5;
    apply_event(s, events::create_concept(
                       make_concept("k" + std::to_string(c), "Concept " + std::to_string(c), seeds)));
  }
  if (marks) {
    apply_all(s, discovery::plan_augment(s, 0.2).events);
    std::vector<std::string> rest(order.begin() + at, order.end());
    std::uniform_int_distribution<int> count(0, 4);
    for (std::size_t c = 0; c < concepts; ++c) {
      std::shuffle(rest.begin(), rest.end(), rng);
      const auto g = static_cast<std::size_t>(count(rng));
      const auto b = static_cast<std::size_t>(count(rng));
      std::vector<std::string> good(rest.begin(), rest.begin() + g);
      std::vector<std::string> bad(rest.begin() + g, rest.begin() + g + b);
      apply_event(s, events::mark_examples("k" + std::to_string(c), good, bad));
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Agreement oracle
//
// Nominal alpha straight from its pairable-value definition: D_o averages
// within-unit disagreement over ordered pairs weighted by 1/(m_u - 1), D_e
// averages disagreement over every ordered pair of pairable values.

inline double brute_force_alpha(const std::vector<std::vector<std::string>>& units) {
  std::vector<std::string> pooled;
  double d_o = 0;
  for (const auto& u : units) {
    if (u.size() < 2) continue;
    double within = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j && u[i] != u[j]) within += 1;
    d_o += within / static_cast<double>(u.size() - 1);
    pooled.insert(pooled.end(), u.begin(), u.end());
  }
  const double n = static_cast<double>(pooled.size());
  d_o /= n;
  double cross = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = 0; j < pooled.size(); ++j)
      if (i != j && pooled[i] != pooled[j]) cross += 1;
  const double d_e = cross / (n * (n - 1));
  return 1.0 - d_o / d_e;
}

/// Three annotators per target: `yyy` unanimous yes, `nnn` unanimous no,
/// `yyn` two yes one no, `ynn` one yes two no.
inline std::vector<HumanJudgment> three_annotator_fixture(Aspect aspect, std::size_t yyy, std::size_t nnn,
                                                          std::size_t yyn, std::size_t ynn) {
  std::vector<HumanJudgment> out;
  std::size_t t = 0;
  auto unit = [&](std::array<Verdict, 3> vs) {
    const std::string id = "t" + std::to_string(t++);
    for (int a = 0; a < 3; ++a) out.push_back(HumanJudgment{id, "a" + std::to_string(a), aspect, vs[a], {}});
  };
  for (std::size_t i = 0; i < yyy; ++i) unit({Verdict::yes, Verdict::yes, Verdict::yes});
  for (std::size_t i = 0; i < nnn; ++i) unit({Verdict::no, Verdict::no, Verdict::no});
  // Rotate the dissenting annotator so no single rater is the odd one out.
  for (std::size_t i = 0; i < yyn; ++i) {
    std::array<Verdict, 3> vs{Verdict::yes, Verdict::yes, Verdict::yes};
    vs[i % 3] = Verdict::no;
    unit(vs);
  }
  for (std::size_t i = 0; i < ynn; ++i) {
    std::array<Verdict, 3> vs{Verdict::no, Verdict::no, Verdict::no};
    vs[i % 3] = Verdict::yes;
    unit(vs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quality / retention

struct QualityCell {
  Aspect aspect;
  const char* stage;
  std::size_t original;       // judged items
  std::size_t good;           // majority-good among them
  std::size_t retained;       // kept by the refinement step
  std::size_t good_retained;  // good among the kept
  double quality;             // published, percent
  std::optional<double> retention;
};

/// Inverse-constructed from the published percentages: the smallest judged
/// set per aspect whose integer counts round to every published cell.
inline const std::vector<QualityCell>& table3_cells() {
  static const std::vector<QualityCell> cells{
      {Aspect::relevance, "generated", 452, 366, 452, 366, 81.0, std::nullopt},
      {Aspect::relevance, "self", 452, 366, 325, 267, 82.2, 73.0},
      {Aspect::relevance, "multiagent", 452, 366, 378, 334, 88.4, 91.3},
      {Aspect::mapping, "generated", 726, 661, 726, 661, 91.0, std::nullopt},
      {Aspect::mapping, "self", 726, 661, 606, 566, 93.4, 85.6},
      {Aspect::mapping, "multiagent", 726, 661, 654, 620, 94.8, 93.8},
      {Aspect::violation, "generated", 580, 350, 580, 350, 60.3, std::nullopt},
      {Aspect::violation, "self", 580, 350, 403, 259, 64.3, 74.0},
      {Aspect::violation, "multiagent", 580, 350, 431, 285, 66.1, 81.4},
  };
  return cells;
}

struct QualityFixture {
  std::set<std::string> original;
  std::set<std::string> retained;
  std::vector<HumanJudgment> judgments;
  std::map<std::string, bool> good;
};

/// Items q0000..: the first `good` are majority-good (2 or 3 yes of 3),
/// the rest majority-bad. The first `good_retained` good items and the
/// first `retained - good_retained` bad items are retained.
inline QualityFixture quality_fixture(Aspect aspect, std::size_t original, std::size_t good, std::size_t retained,
                                      std::size_t good_retained) {
  QualityFixture f;
  for (std::size_t i = 0; i < original; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "q%04zu", i);
    const bool is_good = i < good;
    f.original.insert(buf);
    f.good[buf] = is_good;
    const bool keep = is_good ? i < good_retained : (i - good) < (retained - good_retained);
    if (keep) f.retained.insert(buf);
    for (int a = 0; a < 3; ++a) {
      // One dissenting annotator on every third item.
      const bool dissent = (i % 3 == 0) && a == static_cast<int>(i % 2);
      const bool yes = dissent ? !is_good : is_good;
      f.judgments.push_back(HumanJudgment{buf, "a" + std::to_string(a), aspect, yes ? Verdict::yes : Verdict::no, {}});
    }
  }
  return f;
}

/// Set-arithmetic oracle written out longhand.
inline std::pair<std::optional<double>, std::optional<double>> oracle_quality(const std::set<std::string>& original,
                                                                              const std::set<std::string>& retained,
                                                                              const std::map<std::string, bool>& good) {
  double kept_good = 0, kept = 0, orig_good = 0;
  for (const auto& id : original) {
    const bool g = good.at(id);
    if (g) orig_good += 1;
    if (retained.count(id)) {
      kept += 1;
      if (g) kept_good += 1;
    }
  }
  std::optional<double> q, r;
  if (kept > 0) q = kept_good / kept;
  if (orig_good > 0) r = kept_good / orig_good;
  return {q, r};
}

}  // namespace ngtest
