#include "normgraph/elicitation.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "normgraph/ingestion.hpp"
#include "normgraph/util.hpp"

namespace normgraph::elicitation {

PromptScript PromptScript::standard() {
  return PromptScript{{
      {Step::translate, "translate", "Translate this conversation into English."},
      {Step::participants, "participants",
       "List the people mentioned in the conversation and the social relationships between them."},
      {Step::norms_violations_effects, "norms_violations_effects",
       "List the Chinese cultural norms applicable to this situation. Are there any cultural norm violations "
       "observed in this situation? If yes, list them. List the observed and potential effects by index for "
       "each violation."},
      {Step::summary, "summary", "Summarize the conversation in 3-4 sentences."},
  }};
}

namespace {

enum class Sec { none, norms, violations, effects };

std::string header_key(std::string line) {
  line = util::trim(line);
  while (!line.empty() && (line.back() == ':' || line.back() == '#')) line.pop_back();
  std::size_t i = 0;
  while (i < line.size() && line[i] == '#') ++i;
  return util::to_lower(util::trim(line.substr(i)));
}

std::optional<Sec> section_for(const std::string& key) {
  static const std::vector<std::pair<std::string, Sec>> names = {
      {"norms", Sec::norms},
      {"social norms", Sec::norms},
      {"cultural norms", Sec::norms},
      {"chinese cultural norms", Sec::norms},
      {"applicable norms", Sec::norms},
      {"violations", Sec::violations},
      {"norm violations", Sec::violations},
      {"cultural norm violations", Sec::violations},
      {"observed violations", Sec::violations},
      {"effects", Sec::effects},
      {"observed effects", Sec::effects},
      {"effects of violations", Sec::effects},
      {"observed and potential effects", Sec::effects},
      {"summary", Sec::none},
      {"translation", Sec::none},
      {"translated conversation", Sec::none},
      {"participants", Sec::none},
      {"people", Sec::none},
      {"relationships", Sec::none},
      {"social relationships", Sec::none},
  };
  for (const auto& [n, s] : names) {
    if (key == n) return s;
  }
  return std::nullopt;
}

// Leading "12." / "12)" / "12 -" / "12:" number of a raw line, if any.
std::optional<std::size_t> leading_number(std::string_view raw) {
  std::string s;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if ((raw[i] == '*' || raw[i] == '_') && i + 1 < raw.size() && raw[i + 1] == raw[i]) {
      ++i;
      continue;
    }
    s += raw[i];
  }
  s = util::trim(s);
  if (s.size() >= 2 && (s[0] == '-' || s[0] == '*') && s[1] == ' ') s = util::trim(s.substr(2));
  std::size_t d = 0;
  while (d < s.size() && std::isdigit(static_cast<unsigned char>(s[d]))) ++d;
  if (d == 0 || d > 3 || d >= s.size()) return std::nullopt;
  if (s[d] == '.' || s[d] == ')' || s[d] == ':' || s[d] == ' ') return std::stoul(s.substr(0, d));
  return std::nullopt;
}

bool has_list_marker(std::string_view raw) {
  const auto s = util::trim(raw);
  if (s.size() >= 2 && (s[0] == '-' || s[0] == '*' || s[0] == '+') && s[1] == ' ') return true;
  if (s.rfind("\xE2\x80\xA2", 0) == 0) return true;
  return leading_number(raw).has_value();
}

// "Violation 2" / "violation #2" inside a title.
std::optional<std::size_t> named_index(const std::string& title) {
  const auto low = util::to_lower(title);
  const auto p = low.find("violation");
  if (p == std::string::npos) return std::nullopt;
  std::size_t i = p + 9;
  while (i < low.size() && (low[i] == ' ' || low[i] == '#')) ++i;
  std::size_t d = i;
  while (d < low.size() && std::isdigit(static_cast<unsigned char>(low[d]))) ++d;
  if (d == i) return std::nullopt;
  return std::stoul(low.substr(i, d - i));
}

std::optional<std::size_t> prefix_match(const std::string& title, const std::vector<ParsedItem>& violations) {
  const auto low = util::to_lower(title);
  std::optional<std::size_t> best;
  std::size_t best_len = 0;
  for (std::size_t v = 0; v < violations.size(); ++v) {
    const auto vt = util::to_lower(violations[v].title);
    if (vt.empty() || vt.size() <= best_len) continue;
    if (low.rfind(vt, 0) == 0) {
      best = v;
      best_len = vt.size();
    }
  }
  return best;
}

struct RawEffect {
  std::string title;
  std::string body;
  std::optional<std::size_t> number;  // 1-based list number
  std::optional<std::string> context;  // enclosing sub-header title
  std::optional<std::size_t> context_number;
};

}  // namespace

Sections parse_sections(std::string_view response) {
  Sections out;
  Sec cur = Sec::none;
  std::vector<RawEffect> raw_effects;
  std::optional<std::string> effect_context;
  std::optional<std::size_t> effect_context_number;
  std::string* last_body = nullptr;

  for (const auto& raw : util::split_lines(response)) {
    const auto line = util::strip_markup(raw);
    if (line.empty()) continue;

    // Header lines, optionally with an inline remainder ("Summary: text").
    const auto colon = line.find(':');
    const auto head = header_key(colon == std::string::npos ? line : line.substr(0, colon));
    if (auto sec = section_for(head); sec && (colon != std::string::npos || line.size() < 40)) {
      out.any_header = out.any_header || *sec != Sec::none;
      cur = *sec;
      last_body = nullptr;
      effect_context.reset();
      effect_context_number.reset();
      const auto rest = colon == std::string::npos ? std::string() : util::trim(line.substr(colon + 1));
      if (rest.empty() || cur == Sec::none) continue;
      // Fall through with the remainder treated as the first item.
      if (cur == Sec::norms) out.norms.push_back({"", rest});
      if (cur == Sec::violations) out.violations.push_back({"", rest});
      if (cur == Sec::effects) raw_effects.push_back({"", rest, std::nullopt, std::nullopt, std::nullopt});
      continue;
    }
    if (cur == Sec::none) continue;

    const bool has_marker = has_list_marker(raw);
    ParsedItem item;
    if (colon != std::string::npos) {
      item.title = util::trim(line.substr(0, colon));
      item.body = util::trim(line.substr(colon + 1));
    } else if (last_body && !has_marker) {
      *last_body += (last_body->empty() ? "" : " ") + line;
      continue;
    } else {
      item.body = line;
    }

    if (cur == Sec::effects) {
      if (item.body.empty() && !item.title.empty()) {
        // Sub-header naming the violation the following effects belong to.
        effect_context = item.title;
        effect_context_number = leading_number(raw);
        last_body = nullptr;
        continue;
      }
      raw_effects.push_back({item.title, item.body, leading_number(raw), effect_context, effect_context_number});
      last_body = &raw_effects.back().body;
      continue;
    }
    auto& list = cur == Sec::norms ? out.norms : out.violations;
    list.push_back(std::move(item));
    last_body = &list.back().body;
  }

  if (!out.any_header) out.diagnostics.push_back("no recognized section header");

  // Link effects to violations.
  for (std::size_t e = 0; e < raw_effects.size(); ++e) {
    auto& re = raw_effects[e];
    std::optional<std::size_t> v = prefix_match(re.title, out.violations);
    if (!v && re.context) v = prefix_match(*re.context, out.violations);
    auto by_number = [&](std::optional<std::size_t> n) -> std::optional<std::size_t> {
      if (n && *n >= 1 && *n <= out.violations.size()) return *n - 1;
      return std::nullopt;
    };
    if (!v) v = by_number(named_index(re.title));
    if (!v && re.context) v = by_number(named_index(*re.context));
    if (!v && re.context) v = by_number(re.context_number);
    if (!v && !re.context) v = by_number(re.number);
    if (!v && e < out.violations.size()) v = e;
    if (!v) {
      out.diagnostics.push_back("effect '" + (re.title.empty() ? re.body.substr(0, 40) : re.title) +
                                "' could not be linked to a violation");
      continue;
    }
    out.effects.push_back({re.title, re.body, v});
  }
  // Items with an empty body keep their text as body.
  for (auto* list : {&out.norms, &out.violations}) {
    for (auto& it : *list) {
      if (it.body.empty()) std::swap(it.body, it.title);
    }
  }
  for (auto& it : out.effects) {
    if (it.body.empty()) std::swap(it.body, it.title);
  }
  return out;
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const TranscriptStep& s) {
  j = Json{{"step", s.step},         {"request", s.request},   {"response", s.response},
           {"started", s.started},   {"finished", s.finished}, {"retries", s.retries}};
  if (!s.error.empty()) j["error"] = s.error;
}

void from_json(const Json& j, TranscriptStep& s) {
  s.step = j.at("step").get<std::string>();
  s.request = j.at("request").get<std::string>();
  s.response = j.at("response").get<std::string>();
  s.started = j.value("started", "");
  s.finished = j.value("finished", "");
  s.retries = j.value("retries", 0);
  s.error = j.value("error", "");
}

void to_json(Json& j, const Transcript& t) {
  j = Json{{"conversation_id", t.conversation_id}, {"run_id", t.run_id}, {"steps", t.steps}};
}

void from_json(const Json& j, Transcript& t) {
  t.conversation_id = j.at("conversation_id").get<std::string>();
  t.run_id = j.at("run_id").get<std::string>();
  t.steps = j.at("steps").get<std::vector<TranscriptStep>>();
}

std::filesystem::path write_transcript(const std::filesystem::path& dir, const Transcript& t) {
  auto p = dir / (t.conversation_id + "-" + t.run_id + ".json");
  util::write_file_atomic(p, Json(t).dump(2) + "\n");
  return p;
}

std::string description_id(const std::string& conversation_id, DescriptionKind kind, std::size_t ordinal,
                           const std::string& title, const std::string& body) {
  return "d-" + util::content_hash(conversation_id + "|" + std::string(to_string(kind)) + "|" +
                                   std::to_string(ordinal) + "|" + title + "|" + body);
}

std::vector<NormDescription> to_descriptions(const std::string& conversation_id, const Sections& s) {
  std::vector<NormDescription> out;
  auto make = [&](DescriptionKind kind, std::size_t ordinal, const std::string& title, const std::string& body) {
    NormDescription d;
    d.id = description_id(conversation_id, kind, ordinal, title, body);
    d.conversation_id = conversation_id;
    d.kind = kind;
    d.title = title;
    d.body = body;
    return d;
  };
  for (std::size_t i = 0; i < s.norms.size(); ++i) {
    out.push_back(make(DescriptionKind::norm, i, s.norms[i].title, s.norms[i].body));
  }
  std::vector<std::string> violation_ids;
  for (std::size_t i = 0; i < s.violations.size(); ++i) {
    out.push_back(make(DescriptionKind::violation, i, s.violations[i].title, s.violations[i].body));
    violation_ids.push_back(out.back().id);
  }
  for (std::size_t i = 0; i < s.effects.size(); ++i) {
    auto d = make(DescriptionKind::effect, i, s.effects[i].title, s.effects[i].body);
    d.parent_id = violation_ids.at(*s.effects[i].violation_index);
    out.push_back(std::move(d));
  }
  return out;
}

ElicitResult elicit(const Conversation& c, ChatProvider& provider, const PromptScript& script,
                    const ElicitOptions& opts) {
  if (c.turns.empty()) throw PreconditionError("conversation " + c.id + " has no turns", {c.id});
  ElicitResult res;
  res.conversation_id = c.id;
  res.transcript.conversation_id = c.id;
  res.transcript.run_id = opts.run_id;
  std::vector<Message> history;
  bool first = true;
  for (const auto& entry : script.steps) {
    std::string request = entry.text;
    if (first) request += "\n\n" + c.render();
    first = false;
    history.push_back({"user", request});
    TranscriptStep ts;
    ts.step = entry.name;
    ts.request = request;
    ts.started = opts.clock.now();
    int calls = 0;
    const auto r = complete_with_retry(provider, history, opts.retry, opts.limiter, &calls);
    ts.finished = opts.clock.now();
    ts.retries = std::max(0, calls - 1);
    if (!r.ok) {
      ts.error = r.error;
      res.transcript.steps.push_back(std::move(ts));
      res.failures.push_back(c.id + ": provider failure at step " + entry.name + ": " + r.error);
      break;
    }
    ts.response = r.text;
    res.transcript.steps.push_back(ts);
    history.push_back({"assistant", r.text});

    switch (entry.step) {
      case Step::translate:
        res.translation = r.text;
        break;
      case Step::participants:
        res.relationships = ingestion::parse_relationships(r.text, c.speakers());
        break;
      case Step::norms_violations_effects: {
        const auto sec = parse_sections(r.text);
        for (const auto& d : sec.diagnostics) res.failures.push_back(c.id + ": " + d);
        res.descriptions = to_descriptions(c.id, sec);
        break;
      }
      case Step::summary:
        if (auto t = util::trim(r.text); !t.empty()) res.summary = t;
        break;
    }
  }
  return res;
}

std::vector<Event> plan_elicit(const ProjectState& s, const std::vector<ElicitResult>& results) {
  std::vector<Event> out;
  std::set<std::string> planned;
  for (const auto& r : results) {
    auto cit = s.conversations.find(r.conversation_id);
    if (cit == s.conversations.end()) throw NotFoundError("no conversation " + r.conversation_id);
    for (const auto& d : r.descriptions) {
      if (s.descriptions.count(d.id) || !planned.insert(d.id).second) continue;
      out.push_back(events::add_description(d));
    }
    const auto& c = cit->second;
    std::optional<std::string> summary;
    std::optional<std::vector<Relationship>> rels;
    if (r.summary && !c.summary) summary = r.summary;
    if (!r.relationships.empty() && c.relationships.empty()) rels = r.relationships;
    if (summary || rels) out.push_back(events::fill_conversation(c.id, summary, rels, std::nullopt));
  }
  return out;
}

}  // namespace normgraph::elicitation
