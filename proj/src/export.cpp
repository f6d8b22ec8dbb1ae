#include "normgraph/export.hpp"

#include <fmt/format.h>

#include <set>

#include "normgraph/util.hpp"

namespace normgraph::exporter {

namespace {

using Ordered = nlohmann::ordered_json;

std::string conv_node(const std::string& id) { return "conversation:" + id; }
std::string desc_node(const std::string& id) { return "description:" + id; }
std::string concept_node(const std::string& id) { return "concept:" + id; }

Json grounding_attrs(const ProjectState& s, const SymbolicGrounding& g) {
  Json j{{"compatibility", to_string(g.compatibility)}};
  if (g.relevance) j["relevance"] = to_string(*g.relevance);
  if (g.enactor_role) j["enactor_role"] = *g.enactor_role;
  if (g.acceptor_role) j["acceptor_role"] = *g.acceptor_role;
  const auto vid = violation_target_id(g.description_id, g.concept_id);
  if (g.violation_status && s.status_of(vid) != DescriptionStatus::discarded) {
    j["violation_status"] = to_string(*g.violation_status);
    if (g.violation) j["violation"] = *g.violation;
  }
  return j;
}

}  // namespace

std::map<std::string, std::size_t> Graph::node_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& n : nodes) out[n.type]++;
  return out;
}

std::map<std::string, std::size_t> Graph::edge_counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& e : edges) out[e.type]++;
  return out;
}

void check_edges(const Graph& g) {
  std::set<std::string> ids;
  for (const auto& n : g.nodes) ids.insert(n.id);
  for (const auto& e : g.edges) {
    for (const auto* end : {&e.source, &e.target}) {
      if (!ids.count(*end)) {
        throw InvariantError("dangling edge", e.type + " " + e.source + " -> " + e.target + " (missing " + *end + ")");
      }
    }
  }
}

Graph export_graph(const ProjectState& s) {
  Graph g;
  auto link = [&](const std::string& a, const std::string& b, const std::string& type, const Json& attrs = Json::object()) {
    g.edges.push_back({a, b, type, attrs});
    g.edges.push_back({b, a, type + "_rev", attrs});
  };

  for (const auto* c : s.concepts_by_creation()) {
    Json attrs = c->structure;
    attrs["iteration"] = c->iteration;
    g.nodes.push_back({concept_node(c->id), "concept", attrs});
  }

  for (const auto& [cid, c] : s.conversations) {
    const auto cn = conv_node(cid);
    g.nodes.push_back({cn, "conversation", Json{{"source", c.source}, {"language", c.language}}});
    for (const auto& t : c.turns) {
      const auto tn = "turn:" + cid + "#" + std::to_string(t.index);
      Json attrs{{"index", t.index}, {"speaker", t.speaker}, {"text", t.text}};
      if (!t.labels.empty()) attrs["labels"] = t.labels;
      g.nodes.push_back({tn, "turn", attrs});
      link(cn, tn, "has_turn");
    }
    if (c.settings) {
      const auto sn = "settings:" + cid;
      Json attrs{{"field", c.settings->field}, {"field_provenance", to_string(c.settings->field_provenance)}};
      if (!c.settings->attributes.empty()) attrs["attributes"] = c.settings->attributes;
      g.nodes.push_back({sn, "settings", attrs});
      link(cn, sn, "has_settings");
    }
    if (c.summary) {
      const auto sn = "summary:" + cid;
      g.nodes.push_back({sn, "summary", Json{{"text", *c.summary}, {"provenance", to_string(c.summary_provenance)}}});
      link(cn, sn, "has_summary");
    }
    for (std::size_t i = 0; i < c.relationships.size(); ++i) {
      const auto& r = c.relationships[i];
      const auto rn = "relationship:" + cid + "#" + std::to_string(i);
      g.nodes.push_back({rn, "relationship",
                         Json{{"speaker_a", r.speaker_a},
                              {"speaker_b", r.speaker_b},
                              {"relation", r.relation},
                              {"provenance", to_string(r.provenance)}}});
      link(cn, rn, "has_relationship");
    }
  }

  std::set<std::string> kept;
  for (const auto& [id, d] : s.descriptions) {
    if (d.status == DescriptionStatus::discarded) continue;
    kept.insert(id);
    g.nodes.push_back({desc_node(id), std::string(to_string(d.kind)),
                       Json{{"title", d.title}, {"body", d.body}, {"status", to_string(d.status)}}});
  }
  for (const auto& id : kept) {
    const auto& d = s.descriptions.at(id);
    link(conv_node(d.conversation_id), desc_node(id), "has_" + std::string(to_string(d.kind)));
    // A child whose parent was discarded stays attached to its conversation.
    if (d.parent_id && kept.count(*d.parent_id)) {
      link(desc_node(*d.parent_id), desc_node(id), d.kind == DescriptionKind::violation ? "violated_by" : "has_effect");
    }
    const auto* a = s.active_assignment(id);
    if (!a) continue;
    if (s.status_of(mapping_target_id(id, a->concept_id)) == DescriptionStatus::discarded) continue;
    Json attrs{{"provenance", to_string(a->provenance)}, {"score", a->score}, {"iteration", a->iteration}};
    if (auto gi = s.groundings.find(grounding_key(id, a->concept_id)); gi != s.groundings.end()) {
      attrs["grounding"] = grounding_attrs(s, gi->second);
    }
    link(desc_node(id), concept_node(a->concept_id), "instance_of", attrs);
  }

  check_edges(g);
  return g;
}

std::string to_jsonl(const Graph& g) {
  std::string out;
  for (const auto& n : g.nodes) {
    Ordered j;
    j["kind"] = "node";
    j["id"] = n.id;
    j["type"] = n.type;
    j["attrs"] = Ordered::parse(n.attrs.dump());
    out += j.dump() + "\n";
  }
  for (const auto& e : g.edges) {
    Ordered j;
    j["kind"] = "edge";
    j["source"] = e.source;
    j["target"] = e.target;
    j["type"] = e.type;
    j["attrs"] = Ordered::parse(e.attrs.dump());
    out += j.dump() + "\n";
  }
  return out;
}

Graph from_jsonl(const std::string& text) {
  Graph g;
  for (const auto& line : util::split_lines(text)) {
    if (util::trim(line).empty()) continue;
    const auto j = Json::parse(line);
    if (j.at("kind") == "node") {
      g.nodes.push_back({j.at("id"), j.at("type"), j.value("attrs", Json::object())});
    } else {
      g.edges.push_back({j.at("source"), j.at("target"), j.at("type"), j.value("attrs", Json::object())});
    }
  }
  return g;
}

std::filesystem::path write_export(const std::filesystem::path& project_dir, const ProjectState& s) {
  const auto g = export_graph(s);
  const auto path = project_dir / "exports" / ("graph-v" + std::to_string(s.version) + ".jsonl");
  std::filesystem::create_directories(path.parent_path());
  util::write_file_atomic(path, to_jsonl(g));
  return path;
}

// ---------------------------------------------------------------------------

std::size_t StageCounts::kind_total(const std::string& kind) const {
  std::size_t n = 0;
  if (auto it = descriptions.find(kind); it != descriptions.end()) {
    for (const auto& [st, c] : it->second) n += c;
  }
  return n;
}

void to_json(Json& j, const StageCounts& c) {
  j = Json{{"conversations", c.conversations}, {"descriptions", c.descriptions}, {"concepts", c.concepts},
           {"assignments", c.assignments},     {"groundings", c.groundings},     {"verdicts", c.verdicts}};
}

std::map<std::string, StageCounts> stage_accounting(const ProjectState& s) {
  std::map<std::string, StageCounts> rows;
  std::map<std::string, std::set<std::string>> concepts_by_source;
  auto source_of_desc = [&](const std::string& did) -> const std::string& {
    return s.conversations.at(s.descriptions.at(did).conversation_id).source;
  };
  auto desc_of_target = [](const std::string& target) {
    const auto colon = target.find(':');
    if (colon == std::string::npos) return target;
    const auto body = target.substr(colon + 1);
    return body.substr(0, body.find('|'));
  };

  for (const auto& [id, c] : s.conversations) rows[c.source].conversations++;
  for (const auto& [id, d] : s.descriptions) {
    rows[source_of_desc(id)].descriptions[std::string(to_string(d.kind))][std::string(to_string(d.status))]++;
  }
  for (const auto& a : s.assignments) {
    if (!a.active) continue;
    const auto& src = source_of_desc(a.description_id);
    rows[src].assignments[std::string(to_string(a.provenance))]++;
    concepts_by_source[src].insert(a.concept_id);
  }
  for (const auto& [key, g] : s.groundings) rows[source_of_desc(g.description_id)].groundings++;
  for (const auto& v : s.verdicts) rows[source_of_desc(desc_of_target(v.target_id))].verdicts++;
  for (auto& [src, row] : rows) row.concepts = concepts_by_source[src].size();

  StageCounts total;
  for (const auto& [src, row] : rows) {
    total.conversations += row.conversations;
    for (const auto& [k, m] : row.descriptions) {
      for (const auto& [st, n] : m) total.descriptions[k][st] += n;
    }
    for (const auto& [p, n] : row.assignments) total.assignments[p] += n;
    total.groundings += row.groundings;
    total.verdicts += row.verdicts;
  }
  total.concepts = s.concepts.size();
  rows["total"] = total;
  return rows;
}

std::string render_stage_table(const std::map<std::string, StageCounts>& rows) {
  std::string out = fmt::format("{:<12} {:>6} {:>7} {:>10} {:>8} {:>9} {:>8} {:>8} {:>11} {:>9}\n", "source",
                                "convs", "norms", "violations", "effects", "discarded", "concepts", "mapped",
                                "groundings", "verdicts");
  auto line = [&](const std::string& name, const StageCounts& c) {
    std::size_t discarded = 0, mapped = 0;
    for (const auto& [k, m] : c.descriptions) {
      if (auto it = m.find("discarded"); it != m.end()) discarded += it->second;
    }
    for (const auto& [p, n] : c.assignments) mapped += n;
    out += fmt::format("{:<12} {:>6} {:>7} {:>10} {:>8} {:>9} {:>8} {:>8} {:>11} {:>9}\n", name, c.conversations,
                       c.kind_total("norm"), c.kind_total("violation"), c.kind_total("effect"), discarded, c.concepts,
                       mapped, c.groundings, c.verdicts);
  };
  for (const auto& [src, c] : rows) {
    if (src != "total") line(src, c);
  }
  if (auto it = rows.find("total"); it != rows.end()) line("total", it->second);
  return out;
}

}  // namespace normgraph::exporter
