#include "normgraph/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "normgraph/ingestion.hpp"
#include "normgraph/util.hpp"

namespace normgraph::metrics {

Rate Rate::of(std::size_t num, std::size_t den, const char* undefined_reason) {
  Rate r;
  if (den == 0) {
    r.reason = undefined_reason;
  } else {
    r.value = static_cast<double>(num) / static_cast<double>(den);
  }
  return r;
}

double Rate::percent(int decimals) const {
  if (!value) throw MetricError("undefined: " + reason);
  const double scale = std::pow(10.0, decimals);
  return std::round(*value * 100.0 * scale) / scale;
}

void to_json(Json& j, const Rate& r) {
  if (r.value) {
    j = Json{{"value", *r.value}};
  } else {
    j = Json{{"value", nullptr}, {"undefined", r.reason}};
  }
}

std::map<std::string, bool> majority_good(const std::vector<HumanJudgment>& judgments, Aspect aspect) {
  std::map<std::string, std::pair<int, int>> tally;  // yes, no
  for (const auto& j : judgments) {
    if (j.aspect != aspect) continue;
    auto& t = tally[j.target_id];
    (j.verdict == Verdict::yes ? t.first : t.second)++;
  }
  std::map<std::string, bool> out;
  for (const auto& [id, t] : tally) out[id] = t.first > t.second;
  return out;
}

void to_json(Json& j, const QualityRetention& q) {
  j = Json{{"quality", q.quality},         {"retention", q.retention},       {"original", q.original},
           {"retained", q.retained},       {"good_original", q.good_original}, {"good_retained", q.good_retained}};
}

QualityRetention quality_retention(const std::set<std::string>& original, const std::set<std::string>& retained,
                                   const std::map<std::string, bool>& good) {
  std::vector<std::string> stray, unjudged;
  for (const auto& id : retained) {
    if (!original.count(id)) stray.push_back(id);
  }
  if (!stray.empty()) throw PreconditionError("retained ids outside the original set", stray);
  for (const auto& id : original) {
    if (!good.count(id)) unjudged.push_back(id);
  }
  if (!unjudged.empty()) throw PreconditionError("original ids without a human verdict", unjudged);

  QualityRetention q;
  q.original = original.size();
  q.retained = retained.size();
  for (const auto& id : original) {
    if (!good.at(id)) continue;
    ++q.good_original;
    if (retained.count(id)) ++q.good_retained;
  }
  q.quality = Rate::of(q.good_retained, q.retained, "empty retained set");
  q.retention = Rate::of(q.good_retained, q.good_original, "no good originals");
  return q;
}

QualityRetention quality_retention(const std::set<std::string>& original, const std::set<std::string>& retained,
                                   const std::vector<HumanJudgment>& judgments, Aspect aspect) {
  return quality_retention(original, retained, majority_good(judgments, aspect));
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const AlphaResult& a) {
  j = Json{{"alpha", a.alpha},     {"d_observed", a.d_observed},       {"d_expected", a.d_expected},
           {"units", a.units},     {"dropped_units", a.dropped_units}, {"pairable", a.pairable}};
}

AlphaResult krippendorff_alpha(const std::vector<std::vector<std::string>>& units) {
  AlphaResult r;
  std::map<std::pair<std::string, std::string>, double> o;
  std::map<std::string, double> n_c;
  for (const auto& u : units) {
    if (u.size() < 2) {
      if (u.size() == 1) ++r.dropped_units;
      continue;
    }
    ++r.units;
    r.pairable += u.size();
    std::map<std::string, double> counts;
    for (const auto& v : u) counts[v] += 1;
    const double m1 = static_cast<double>(u.size() - 1);
    for (const auto& [c, nc] : counts) {
      for (const auto& [k, nk] : counts) {
        o[{c, k}] += (c == k ? nc * (nc - 1) : nc * nk) / m1;
      }
    }
  }
  if (r.units == 0) throw MetricError("alpha undefined: no unit has two ratings");
  for (const auto& [ck, v] : o) n_c[ck.first] += v;
  const double n = static_cast<double>(r.pairable);
  double disagree = 0;
  for (const auto& [ck, v] : o) {
    if (ck.first != ck.second) disagree += v;
  }
  double expected = 0;
  for (const auto& [c, a] : n_c) {
    for (const auto& [k, b] : n_c) {
      if (c != k) expected += a * b;
    }
  }
  r.d_observed = disagree / n;
  r.d_expected = expected / (n * (n - 1));
  if (r.d_expected == 0) throw MetricError("alpha undefined: every rating has the same value");
  r.alpha = 1.0 - r.d_observed / r.d_expected;
  return r;
}

AlphaResult krippendorff_alpha(const std::vector<HumanJudgment>& judgments, Aspect aspect) {
  std::map<std::string, std::vector<std::string>> by_target;
  std::set<std::string> annotators;
  for (const auto& j : judgments) {
    if (j.aspect != aspect) continue;
    by_target[j.target_id].emplace_back(to_string(j.verdict));
    annotators.insert(j.annotator_id);
  }
  if (annotators.size() < 2) throw MetricError("alpha undefined: fewer than two annotators");
  std::vector<std::vector<std::string>> units;
  units.reserve(by_target.size());
  for (auto& [id, vs] : by_target) units.push_back(std::move(vs));
  return krippendorff_alpha(units);
}

// ---------------------------------------------------------------------------

LikertResult likert_mean(const std::vector<int>& ratings) {
  if (ratings.empty()) throw MetricError("no ratings");
  long sum = 0;
  for (int r : ratings) {
    if (r < 1 || r > 5) throw PreconditionError("likert rating " + std::to_string(r) + " outside 1-5");
    sum += r;
  }
  return {static_cast<double>(sum) / static_cast<double>(ratings.size()), ratings.size()};
}

LikertResult likert_mean(const std::vector<HumanJudgment>& judgments) {
  std::vector<int> rs;
  for (const auto& j : judgments) {
    if (j.likert) rs.push_back(*j.likert);
  }
  return likert_mean(rs);
}

// ---------------------------------------------------------------------------

std::size_t Distribution::at(const std::string& concept_name, const std::string& field) const {
  auto r = counts.find(concept_name);
  if (r == counts.end()) return 0;
  auto c = r->second.find(field);
  return c == r->second.end() ? 0 : c->second;
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string Distribution::to_csv() const {
  std::string out = "concept,field,count\n";
  for (const auto& c : concepts) {
    for (const auto& f : fields) out += csv_cell(c) + "," + csv_cell(f) + "," + std::to_string(at(c, f)) + "\n";
  }
  return out;
}

Json Distribution::to_vega_lite() const {
  Json values = Json::array();
  for (const auto& c : concepts) {
    for (const auto& f : fields) values.push_back({{"concept", c}, {"field", f}, {"count", at(c, f)}});
  }
  return Json{
      {"$schema", "https://vega.github.io/schema/vega-lite/v5.json"},
      {"title", "Conversation field distribution by norm concept"},
      {"data", {{"values", values}}},
      {"mark", "rect"},
      {"encoding",
       {{"x", {{"field", "field"}, {"type", "nominal"}, {"title", "Field"}}},
        {"y", {{"field", "concept"}, {"type", "nominal"}, {"title", "Norm concept"}, {"sort", concepts}}},
        {"color", {{"field", "count"}, {"type", "quantitative"}}}}},
  };
}

void to_json(Json& j, const Distribution& d) {
  Json rows = Json::array();
  for (const auto& c : d.concepts) {
    Json cells = Json::object();
    for (const auto& f : d.fields) cells[f] = d.at(c, f);
    rows.push_back({{"concept", c}, {"counts", cells}});
  }
  j = Json{{"concepts", d.concepts}, {"fields", d.fields}, {"rows", rows}};
}

Distribution concept_field_distribution(const ProjectState& s) {
  Distribution d;
  std::set<std::string> fields;
  for (const auto* c : s.concepts_by_creation()) d.concepts.push_back(c->structure.name);
  for (const auto& a : s.assignments) {
    if (!a.active) continue;
    const auto& desc = s.descriptions.at(a.description_id);
    if (desc.status == DescriptionStatus::discarded) continue;
    const auto& conv = s.conversations.at(desc.conversation_id);
    std::string field = conv.settings && !util::trim(conv.settings->field).empty() ? conv.settings->field : "unknown";
    fields.insert(field);
    d.counts[s.concepts.at(a.concept_id).structure.name][field]++;
  }
  d.fields.assign(fields.begin(), fields.end());
  return d;
}

// ---------------------------------------------------------------------------

std::vector<QualityRow> quality_report(const ProjectState& s) {
  std::vector<QualityRow> rows;
  for (Aspect aspect : {Aspect::relevance, Aspect::mapping, Aspect::violation}) {
    const auto good = majority_good(s.judgments, aspect);
    if (good.empty()) continue;
    std::set<std::string> judged;
    for (const auto& [id, g] : good) judged.insert(id);
    rows.push_back({aspect, "generated", quality_retention(judged, judged, good)});
    for (Workflow w : {Workflow::self, Workflow::multiagent}) {
      std::set<std::string> original, retained;
      for (const auto& v : s.verdicts) {
        if (v.aspect != aspect || v.workflow != w || !judged.count(v.target_id)) continue;
        original.insert(v.target_id);
        if (v.decision == Decision::retain) retained.insert(v.target_id);
      }
      if (original.empty()) continue;
      rows.push_back({aspect, std::string(to_string(w)), quality_retention(original, retained, good)});
    }
  }
  return rows;
}

std::vector<AgreementRow> agreement_report(const ProjectState& s) {
  std::vector<AgreementRow> rows;
  for (Aspect aspect : {Aspect::relevance, Aspect::mapping, Aspect::violation}) {
    AgreementRow row;
    row.aspect = aspect;
    try {
      row.alpha = krippendorff_alpha(s.judgments, aspect);
    } catch (const MetricError& e) {
      row.reason = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Json quality_report_json(const std::vector<QualityRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j = r.result;
    j["aspect"] = to_string(r.aspect);
    j["stage"] = r.stage;
    out.push_back(std::move(j));
  }
  return out;
}

Json agreement_report_json(const std::vector<AgreementRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j{{"aspect", to_string(r.aspect)}};
    if (r.alpha) {
      j["result"] = *r.alpha;
    } else {
      j["result"] = nullptr;
      j["undefined"] = r.reason;
    }
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

std::string pct(const Rate& r) { return r.defined() ? fmt::format("{:.1f}", r.percent(1)) : "undefined"; }

}  // namespace

std::string render_quality_table(const std::vector<QualityRow>& rows) {
  std::string out = fmt::format("{:<10} {:<11} {:>6} {:>8} {:>10} {:>10}\n", "aspect", "stage", "n", "retained",
                                "quality%", "retention%");
  for (const auto& r : rows) {
    out += fmt::format("{:<10} {:<11} {:>6} {:>8} {:>10} {:>10}\n", to_string(r.aspect), r.stage, r.result.original,
                       r.result.retained, pct(r.result.quality), pct(r.result.retention));
  }
  return out;
}

std::string render_agreement_table(const std::vector<AgreementRow>& rows) {
  std::string out = fmt::format("{:<10} {:>7} {:>6} {:>8}\n", "aspect", "alpha", "units", "dropped");
  for (const auto& r : rows) {
    if (r.alpha) {
      out += fmt::format("{:<10} {:>7.3f} {:>6} {:>8}\n", to_string(r.aspect), r.alpha->alpha, r.alpha->units,
                         r.alpha->dropped_units);
    } else {
      out += fmt::format("{:<10} {}\n", to_string(r.aspect), r.reason);
    }
  }
  return out;
}

std::string render_distribution_table(const Distribution& d) {
  if (d.concepts.empty()) return "(no concepts)\n";
  std::size_t w = 7;
  for (const auto& c : d.concepts) w = std::max(w, c.size());
  std::string out = fmt::format("{:<{}}", "concept", w);
  for (const auto& f : d.fields) out += fmt::format(" {:>{}}", f, std::max<std::size_t>(5, f.size()));
  out += "\n";
  for (const auto& c : d.concepts) {
    out += fmt::format("{:<{}}", c, w);
    for (const auto& f : d.fields) out += fmt::format(" {:>{}}", d.at(c, f), std::max<std::size_t>(5, f.size()));
    out += "\n";
  }
  return out;
}

std::vector<HumanJudgment> parse_judgments(const std::string& text) {
  std::vector<HumanJudgment> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return out;
  if (text[first] == '{') {
    std::size_t line_no = 0;
    for (const auto& line : util::split_lines(text)) {
      ++line_no;
      if (util::trim(line).empty()) continue;
      try {
        out.push_back(Json::parse(line).get<HumanJudgment>());
      } catch (const Json::exception& e) {
        throw ParseError("judgments line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    return out;
  }
  const auto rows = ingestion::parse_csv(text);
  if (rows.empty()) return out;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[util::to_lower(util::trim(rows[0][i]))] = i;
  for (const char* need : {"target_id", "annotator_id", "aspect", "verdict"}) {
    if (!col.count(need)) throw ParseError(std::string("judgments csv: missing column ") + need);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && util::trim(row[0]).empty()) continue;
    auto cell = [&](const char* name) -> std::string {
      auto it = col.find(name);
      if (it == col.end() || it->second >= row.size()) return {};
      return util::trim(row[it->second]);
    };
    HumanJudgment j;
    j.target_id = cell("target_id");
    j.annotator_id = cell("annotator_id");
    auto aspect = try_parse_enum<Aspect>(util::to_lower(cell("aspect")));
    auto verdict = try_parse_enum<Verdict>(util::to_lower(cell("verdict")));
    if (!aspect || !verdict) throw ParseError("judgments csv row " + std::to_string(r + 1) + ": bad aspect or verdict");
    j.aspect = *aspect;
    j.verdict = *verdict;
    if (auto l = cell("likert"); !l.empty()) {
      try {
        j.likert = std::stoi(l);
      } catch (const std::exception&) {
        throw ParseError("judgments csv row " + std::to_string(r + 1) + ": bad likert '" + l + "'");
      }
    }
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace normgraph::metrics
