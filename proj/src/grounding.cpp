#include "normgraph/grounding.hpp"

#include <algorithm>

#include "normgraph/grounding_prompt.hpp"
#include "normgraph/util.hpp"

namespace normgraph::grounding {

std::string_view prompt_template() {
  const std::string_view file = kPromptFile;
  const auto sep = file.find("\n---\n");
  auto body = sep == std::string_view::npos ? file : file.substr(sep + 5);
  while (!body.empty() && (body.back() == '\n' || body.back() == ' ')) body.remove_suffix(1);
  return body;
}

std::string_view prompt_version() { return kPromptVersion; }

std::string_view response_skeleton() {
  const auto t = prompt_template();
  const auto p = t.find("Social Norm - Norm Concept Compatibility:");
  return p == std::string_view::npos ? t : t.substr(p);
}

std::string render_request(const Conversation& c, const NormDescription& d, const NormConcept& nc) {
  std::string out(prompt_template());
  out += "\n\nConversation from Chinese culture:\n";
  out += c.render();
  out += "\nSocial Norm:\n" + d.text() + "\n\n";
  const auto& st = nc.structure;
  out += "Norm Concept Name: " + st.name + "\n";
  out += "Norm Concept Description: " + st.description + "\n";
  out += "Norm Concept Potential Violation Sketch: " + st.violation_sketch + "\n";
  out += "Norm Concept Scenario: " + util::join(st.settings, ", ") + "\n";
  out += "Enactor Role: " + st.actor_roles + "\n";
  out += "Acceptor Role: " + st.recipient_roles + "\n";
  return out;
}

namespace {

enum class Field {
  compatibility,
  compatibility_just,
  relevance,
  relevance_just,
  enactor,
  acceptor,
  status,
  status_just,
  action,
  violator,
  victim,
  violator_emotion,
  victim_emotion,
  other
};

std::string normalize_label(std::string s) {
  s = util::to_lower(util::trim(s));
  std::string out;
  for (char c : s) {
    if (c == ' ' && !out.empty() && out.back() == ' ') continue;
    out += c;
  }
  return out;
}

Field field_for(const std::string& label) {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"social norm - norm concept compatibility", Field::compatibility},
      {"norm-concept compatibility", Field::compatibility},
      {"norm concept compatibility", Field::compatibility},
      {"social norm-norm concept compatibility", Field::compatibility},
      {"compatibility", Field::compatibility},
      {"compatibility justification", Field::compatibility_just},
      {"relevance", Field::relevance},
      {"relevance justification", Field::relevance_just},
      {"enactor role", Field::enactor},
      {"acceptor role", Field::acceptor},
      {"violation status", Field::status},
      {"violation status justification", Field::status_just},
      {"violating action", Field::action},
      {"violator role", Field::violator},
      {"victim role", Field::victim},
      {"violator emotion", Field::violator_emotion},
      {"victim emotion", Field::victim_emotion},
  };
  for (const auto& [name, f] : table) {
    if (label == name) return f;
  }
  return Field::other;
}

std::string strip_value(std::string v) {
  v = util::trim(v);
  if (v.size() >= 2 && v.front() == '<' && v.back() == '>') v = util::trim(v.substr(1, v.size() - 2));
  return v;
}

Compatibility parse_compat(const std::string& v) {
  const auto low = util::to_lower(v);
  for (const char* neg : {"doesn't match", "does not match", "doesnt match", "don't match", "do not match",
                          "not match", "no match", "no_match", "mismatch", "not compatible", "incompatible"}) {
    if (low.find(neg) != std::string::npos) return Compatibility::no_match;
  }
  if (low.rfind("match", 0) == 0 || low.rfind("compatible", 0) == 0) return Compatibility::match;
  throw ParseError("unrecognized compatibility value '" + v + "'");
}

Relevance parse_relevance(const std::string& v) {
  const auto low = util::to_lower(v);
  if (low.rfind("irrelevant", 0) == 0 || low.rfind("not relevant", 0) == 0) return Relevance::irrelevant;
  if (low.rfind("relevant", 0) == 0) return Relevance::relevant;
  throw ParseError("unrecognized relevance value '" + v + "'");
}

ViolationStatus parse_status(const std::string& v) {
  const auto low = util::to_lower(v);
  if (low.rfind("adhere", 0) == 0 || low.rfind("adhered", 0) == 0 || low.rfind("adherence", 0) == 0) {
    return ViolationStatus::adhere;
  }
  if (low.rfind("violat", 0) == 0) return ViolationStatus::violate;
  throw ParseError("unrecognized violation status '" + v + "'");
}

Emotion parse_emotion(const std::string& v) {
  auto low = util::to_lower(util::trim(v));
  while (!low.empty() && (low.back() == '.' || low.back() == ',')) low.pop_back();
  if (auto e = try_parse_enum<Emotion>(low)) return *e;
  throw ParseError("emotion '" + v + "' is not one of the 9 basic emotions");
}

}  // namespace

SymbolicGrounding parse_grounding(std::string_view response, const std::vector<std::string>& speakers) {
  std::map<Field, std::string> seen;
  std::map<std::string, std::string> extras;
  for (const auto& raw : util::split_lines(response)) {
    const auto line = util::strip_markup(raw);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const auto label = normalize_label(line.substr(0, colon));
    const auto value = strip_value(line.substr(colon + 1));
    if (label.empty()) continue;
    const Field f = field_for(label);
    if (f == Field::other) {
      if (!value.empty() && !extras.count(label)) extras[label] = value;
      continue;
    }
    if (!seen.count(f)) seen[f] = value;
  }

  auto get = [&](Field f) -> std::optional<std::string> {
    auto it = seen.find(f);
    if (it == seen.end() || it->second.empty()) return std::nullopt;
    return it->second;
  };
  auto require = [&](Field f, const char* header) {
    auto v = get(f);
    if (!v) throw ParseError(std::string("missing header: ") + header);
    return *v;
  };
  auto check_role = [&](const std::string& role, const char* header) {
    for (const auto& s : speakers) {
      if (util::iequals(util::trim(s), role)) {
        throw ParseError(std::string("role must not be a name: ") + header + " '" + role + "'");
      }
    }
    return role;
  };

  SymbolicGrounding g;
  g.justifications = extras;
  g.compatibility = parse_compat(require(Field::compatibility, "Social Norm - Norm Concept Compatibility"));
  if (auto j = get(Field::compatibility_just)) g.justifications["compatibility"] = *j;
  if (g.compatibility == Compatibility::no_match) return g;

  g.relevance = parse_relevance(require(Field::relevance, "Relevance"));
  if (auto j = get(Field::relevance_just)) g.justifications["relevance"] = *j;

  if (*g.relevance == Relevance::relevant) {
    g.enactor_role = check_role(require(Field::enactor, "Enactor Role"), "Enactor Role");
    g.acceptor_role = check_role(require(Field::acceptor, "Acceptor Role"), "Acceptor Role");
  } else {
    if (auto v = get(Field::enactor)) g.enactor_role = check_role(*v, "Enactor Role");
    if (auto v = get(Field::acceptor)) g.acceptor_role = check_role(*v, "Acceptor Role");
  }

  if (auto v = get(Field::status)) g.violation_status = parse_status(*v);
  if (auto j = get(Field::status_just)) g.justifications["violation status"] = *j;

  const bool any_block = get(Field::action) || get(Field::violator) || get(Field::victim) ||
                         get(Field::violator_emotion) || get(Field::victim_emotion);
  const bool violate = g.violation_status && *g.violation_status == ViolationStatus::violate;
  if (any_block && !violate) throw ParseError("contradictory violation block: violation details without violate status");
  if (violate) {
    if (!any_block) throw ParseError("contradictory violation block: violate status without violation details");
    ViolationDetail v;
    v.action = require(Field::action, "Violating Action");
    v.violator_role = check_role(require(Field::violator, "Violator Role"), "Violator Role");
    v.victim_role = check_role(require(Field::victim, "Victim Role"), "Victim Role");
    v.violator_emotion = parse_emotion(require(Field::violator_emotion, "Violator Emotion"));
    v.victim_emotion = parse_emotion(require(Field::victim_emotion, "Victim Emotion"));
    g.violation = std::move(v);
  }
  return g;
}

std::string render_grounding(const SymbolicGrounding& g) {
  std::string out;
  auto line = [&](const std::string& label, const std::string& value) { out += label + ": " + value + "\n"; };
  auto just = [&](const char* key, const std::string& label) {
    if (auto it = g.justifications.find(key); it != g.justifications.end()) line(label, it->second);
  };
  line("Social Norm - Norm Concept Compatibility",
       g.compatibility == Compatibility::match ? "match" : "doesn't match");
  just("compatibility", "Compatibility Justification");
  if (g.compatibility == Compatibility::match) {
    if (g.relevance) line("Relevance", std::string(to_string(*g.relevance)));
    just("relevance", "Relevance Justification");
    if (g.enactor_role) line("Enactor Role", *g.enactor_role);
    if (g.acceptor_role) line("Acceptor Role", *g.acceptor_role);
    if (g.violation_status) line("Violation Status", std::string(to_string(*g.violation_status)));
    just("violation status", "Violation Status Justification");
    if (g.violation) {
      line("Violating Action", g.violation->action);
      line("Violator Role", g.violation->violator_role);
      line("Victim Role", g.violation->victim_role);
      line("Violator Emotion", std::string(to_string(g.violation->violator_emotion)));
      line("Victim Emotion", std::string(to_string(g.violation->victim_emotion)));
    }
  }
  for (const auto& [k, v] : g.justifications) {
    if (k == "compatibility" || k == "relevance" || k == "violation status") continue;
    line(k, v);
  }
  return out;
}

GroundResult ground(const Conversation& c, const NormDescription& d, const NormConcept& nc,
                    ChatProvider& provider, const RetryPolicy& retry, util::RateLimiter* limiter) {
  GroundResult res;
  res.description_id = d.id;
  res.concept_id = nc.id;
  const auto speakers = c.speakers();
  std::vector<Message> messages{{"user", render_request(c, d, nc)}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    int calls = 0;
    const auto r = complete_with_retry(provider, messages, retry, limiter, &calls);
    res.provider_calls += calls;
    if (!r.ok) {
      res.errors.push_back("provider failure: " + r.error);
      return res;
    }
    try {
      auto g = parse_grounding(r.text, speakers);
      g.description_id = d.id;
      g.concept_id = nc.id;
      res.grounding = std::move(g);
      res.repaired = attempt > 0;
      return res;
    } catch (const ParseError& e) {
      res.errors.push_back(e.what());
      messages.push_back({"assistant", r.text});
      messages.push_back({"user", "Your response could not be parsed (" + std::string(e.what()) +
                                      "). Answer again using exactly this format:\n\n" +
                                      std::string(response_skeleton())});
    }
  }
  return res;
}

std::vector<std::pair<std::string, std::string>> pending_targets(const ProjectState& s) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [id, d] : s.descriptions) {
    if (d.status == DescriptionStatus::discarded) continue;
    const auto* a = s.active_assignment(id);
    if (!a || s.groundings.count(grounding_key(id, a->concept_id))) continue;
    out.emplace_back(id, a->concept_id);
  }
  return out;
}

BatchResult ground_batch(const ProjectState& s, ChatProvider& provider, std::size_t parallelism, std::size_t limit,
                         const RetryPolicy& retry, util::RateLimiter* limiter) {
  auto targets = pending_targets(s);
  if (limit && targets.size() > limit) targets.resize(limit);
  BatchResult out;
  out.results.resize(targets.size());
  util::bounded_parallel_for(targets.size(), parallelism, [&](std::size_t i) {
    const auto& [did, cid] = targets[i];
    const auto& d = s.descriptions.at(did);
    out.results[i] = ground(s.conversations.at(d.conversation_id), d, s.concepts.at(cid), provider, retry, limiter);
  });
  for (const auto& r : out.results) {
    if (r.grounding) out.events.push_back(events::add_grounding(*r.grounding));
  }
  return out;
}

}  // namespace normgraph::grounding
