#include "normgraph/verification.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "normgraph/grounding.hpp"
#include "normgraph/util.hpp"

namespace normgraph::verification {

namespace {

constexpr const char* kCriticSystem =
    "You are a critic agent. Given a task description and examples of successful and unsuccessful task runs, "
    "you propose categorical criteria for judging the task output.";
constexpr const char* kVerifierSystem =
    "You are a verifier agent. You check whether each proposed criterion is robust: it can be applied "
    "consistently, its accepted values are distinct, and it discriminates good from bad examples.";
constexpr const char* kQuantifierSystem =
    "You are a quantifier agent. You rate one example on each criterion, choosing exactly one accepted value "
    "per criterion.";

// Splits "map:<d>|<c>" style ids.
std::pair<std::string, std::string> split_pair(const std::string& target_id) {
  const auto body = target_id.substr(target_id.find(':') + 1);
  const auto bar = body.find('|');
  return {body.substr(0, bar), bar == std::string::npos ? std::string() : body.substr(bar + 1)};
}

// Extracts the outermost JSON value of a reply, ignoring code fences and
// surrounding prose.
std::optional<Json> embedded_json(std::string_view reply, char open, char close) {
  const auto b = reply.find(open);
  const auto e = reply.rfind(close);
  if (b == std::string_view::npos || e == std::string_view::npos || e < b) return std::nullopt;
  try {
    return Json::parse(reply.substr(b, e - b + 1));
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  for (auto& v : util::split(s, ',')) {
    auto t = util::trim(v);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::string render_criteria(const std::vector<Criterion>& cs) {
  std::string out;
  for (const auto& c : cs) {
    out += "Criterion: " + c.name + "\n";
    out += "Description: " + c.description + "\n";
    out += "Accepted Values: " + util::join(c.accepted_values, ", ") + "\n\n";
  }
  return out;
}

ChatResult ask(ChatProvider& p, const std::vector<Message>& m, const RetryPolicy& retry, util::RateLimiter* limiter) {
  return complete_with_retry(p, m, retry, limiter);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> pending_targets(const ProjectState& s, Aspect aspect, Workflow workflow) {
  std::set<std::string> judged;
  for (const auto& v : s.verdicts) {
    if (v.aspect == aspect && v.workflow == workflow) judged.insert(v.target_id);
  }
  auto eligible = [&](const std::string& id) {
    if (judged.count(id)) return false;
    const auto st = s.status_of(id);
    if (workflow == Workflow::self) return st == DescriptionStatus::raw;
    return st == DescriptionStatus::raw || st == DescriptionStatus::self_verified;
  };
  std::vector<std::string> out;
  switch (aspect) {
    case Aspect::relevance:
      for (const auto& [id, d] : s.descriptions) {
        if (eligible(id)) out.push_back(id);
      }
      break;
    case Aspect::mapping:
      for (const auto& [id, d] : s.descriptions) {
        if (d.status == DescriptionStatus::discarded) continue;
        const auto* a = s.active_assignment(id);
        if (!a || a->provenance == AssignmentProvenance::human_seed) continue;
        const auto t = mapping_target_id(id, a->concept_id);
        if (eligible(t)) out.push_back(t);
      }
      break;
    case Aspect::violation:
      for (const auto& [key, g] : s.groundings) {
        if (!g.violation_status) continue;
        const auto t = violation_target_id(g.description_id, g.concept_id);
        if (eligible(t)) out.push_back(t);
      }
      break;
  }
  return out;
}

std::string target_context(const ProjectState& s, Aspect aspect, const std::string& target_id) {
  std::string did = target_id, cid;
  if (aspect != Aspect::relevance) std::tie(did, cid) = split_pair(target_id);
  const auto& d = s.descriptions.at(did);
  const auto& c = s.conversations.at(d.conversation_id);
  std::string out = "Conversation:\n" + c.render() + "\nSocial norm description:\n" + d.text() + "\n";
  if (aspect == Aspect::relevance) return out;
  const auto& nc = s.concepts.at(cid);
  const auto& st = nc.structure;
  out += "\nNorm concept: " + st.name + "\nDescription: " + st.description +
         "\nSettings: " + util::join(st.settings, ", ") + "\nViolation sketch: " + st.violation_sketch +
         "\nActors: " + st.actor_roles + "\nRecipients: " + st.recipient_roles + "\n";
  if (aspect == Aspect::violation) {
    out += "\nAnnotation:\n" + grounding::render_grounding(s.groundings.at(grounding_key(did, cid)));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string self_question(Aspect aspect) {
  switch (aspect) {
    case Aspect::relevance:
      return "Is the social norm description relevant to the conversation? Answer yes or no, then give a short "
             "reason.";
    case Aspect::mapping:
      return "Does the social norm description belong to the norm concept? Answer yes or no, then give a short "
             "reason.";
    case Aspect::violation:
      return "Was the social norm violated in the conversation? Answer yes or no, then give a short reason.";
  }
  return {};
}

std::string prior_answer(const ProjectState& s, Aspect aspect, const std::string& target_id) {
  switch (aspect) {
    case Aspect::relevance:
      return "Yes, the description is relevant to the conversation.";
    case Aspect::mapping:
      return "Yes, the description belongs to the norm concept.";
    case Aspect::violation: {
      const auto [did, cid] = split_pair(target_id);
      const auto& g = s.groundings.at(grounding_key(did, cid));
      return g.violation_status == ViolationStatus::violate ? "Yes, the norm was violated."
                                                            : "No, the norm was adhered to.";
    }
  }
  return {};
}

std::optional<Verdict> parse_yes_no(std::string_view reply) {
  std::string word;
  auto check = [&]() -> std::optional<Verdict> {
    if (word == "yes") return Verdict::yes;
    if (word == "no") return Verdict::no;
    return std::nullopt;
  };
  for (char ch : reply) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      continue;
    }
    if (auto v = check()) return v;
    word.clear();
  }
  return check();
}

std::optional<VerificationVerdict> self_verify(const ProjectState& s, Aspect aspect, const std::string& target_id,
                                               ChatProvider& provider, const RetryPolicy& retry,
                                               util::RateLimiter* limiter, std::vector<std::string>* warnings) {
  if (s.status_of(target_id) != DescriptionStatus::raw) {
    throw PreconditionError("self-verification needs a raw target", {target_id});
  }
  const auto prior = prior_answer(s, aspect, target_id);
  const auto prior_verdict = *parse_yes_no(prior);
  std::vector<Message> m{{"user", target_context(s, aspect, target_id) + "\n" + self_question(aspect)},
                         {"assistant", prior},
                         {"user", "Please re-consider your judgment carefully. Answer yes or no, then give a short "
                                  "reason."}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto r = ask(provider, m, retry, limiter);
    if (!r.ok) {
      if (warnings) warnings->push_back(target_id + ": provider failure: " + r.error);
      return std::nullopt;
    }
    if (auto v = parse_yes_no(r.text)) {
      VerificationVerdict out;
      out.target_id = target_id;
      out.aspect = aspect;
      out.workflow = Workflow::self;
      out.decision = *v == prior_verdict ? Decision::retain : Decision::discard;
      out.rationale = util::trim(r.text);
      return out;
    }
    m.push_back({"assistant", r.text});
    m.push_back({"user", "Please answer with yes or no first."});
  }
  if (warnings) warnings->push_back(target_id + ": unparseable self-verification reply; verdict withheld");
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::string default_task_description(Aspect aspect) {
  switch (aspect) {
    case Aspect::relevance:
      return "Relevance Judgment: judge whether a social norm description is relevant to a Chinese conversation.";
    case Aspect::mapping:
      return "Concept Mapping Judgment: judge whether a social norm description belongs to a norm concept.";
    case Aspect::violation:
      return "Norm Interpretation and Evaluation: judge the symbolic annotation of a social norm in a "
             "conversation, including violation status, roles and emotions.";
  }
  return {};
}

std::vector<Criterion> parse_criteria(std::string_view reply, std::vector<std::string>* warnings) {
  std::vector<Criterion> raw;
  auto from_obj = [](const std::string& name, const Json& o) {
    Criterion c;
    c.name = name;
    c.description = o.value("description", "");
    for (const char* key : {"accepted_values", "accepted values", "Accepted Values", "values"}) {
      if (!o.contains(key)) continue;
      const auto& v = o[key];
      if (v.is_array()) {
        for (const auto& x : v) c.accepted_values.push_back(util::trim(x.get<std::string>()));
      } else if (v.is_string()) {
        c.accepted_values = split_values(v.get<std::string>());
      }
      break;
    }
    if (o.contains("score_map") && o["score_map"].is_object()) {
      c.score_map = o["score_map"].get<std::map<std::string, double>>();
    }
    return c;
  };

  if (auto arr = embedded_json(reply, '[', ']'); arr && arr->is_array()) {
    for (const auto& o : *arr) {
      if (!o.is_object()) continue;
      raw.push_back(from_obj(o.value("name", o.value("criterion", "")), o));
    }
  } else if (auto obj = embedded_json(reply, '{', '}'); obj && obj->is_object()) {
    for (const auto& [name, o] : obj->items()) {
      if (o.is_object()) raw.push_back(from_obj(name, o));
    }
  } else {
    Criterion* cur = nullptr;
    for (const auto& line_raw : util::split_lines(reply)) {
      const auto line = util::strip_markup(line_raw);
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const auto key = util::to_lower(util::trim(line.substr(0, colon)));
      const auto value = util::trim(line.substr(colon + 1));
      if (key == "criterion" || key == "criteria" || key == "name") {
        raw.push_back(Criterion{});
        cur = &raw.back();
        cur->name = value;
      } else if (cur && key == "description") {
        cur->description = value;
      } else if (cur && (key == "accepted values" || key == "accepted_values" || key == "values")) {
        cur->accepted_values = split_values(value);
      }
    }
  }

  std::vector<Criterion> out;
  std::set<std::string> names;
  for (auto& c : raw) {
    c.name = util::trim(c.name);
    if (c.name.empty()) continue;
    if (c.accepted_values.empty()) {
      if (warnings) warnings->push_back("criterion '" + c.name + "' has no accepted values; dropped");
      continue;
    }
    if (!names.insert(c.name).second) continue;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Criterion> generate_criteria(const std::string& task_description,
                                         const std::vector<std::string>& success_examples,
                                         const std::vector<std::string>& failure_examples, ChatProvider& provider,
                                         const RetryPolicy& retry, std::vector<std::string>* warnings) {
  if (success_examples.empty() || failure_examples.empty()) {
    throw PreconditionError("criteria generation needs a successful and an unsuccessful example");
  }
  std::string prompt = "Task: " + task_description + "\n\n";
  for (std::size_t i = 0; i < success_examples.size(); ++i) {
    prompt += "Successful example " + std::to_string(i + 1) + ":\n" + success_examples[i] + "\n\n";
  }
  for (std::size_t i = 0; i < failure_examples.size(); ++i) {
    prompt += "Unsuccessful example " + std::to_string(i + 1) + ":\n" + failure_examples[i] + "\n\n";
  }
  prompt +=
      "Propose evaluation criteria for this task. Reply with a JSON array of objects with the keys \"name\", "
      "\"description\" and \"accepted_values\" (an ordered list of categorical values).";
  const auto r = ask(provider, {{"system", kCriticSystem}, {"user", prompt}}, retry, nullptr);
  if (!r.ok) throw ProviderError("critic failed: " + r.error, r.retryable);
  auto criteria = parse_criteria(r.text, warnings);
  if (criteria.empty()) throw Error("no criteria");
  return criteria;
}

std::vector<Criterion> verify_criteria(std::vector<Criterion> criteria, const std::vector<std::string>& probes,
                                       ChatProvider& provider, const RetryPolicy& retry) {
  if (probes.size() < 2) throw PreconditionError("criteria verification needs at least two probe examples");
  std::string prompt = "Criteria:\n\n" + render_criteria(criteria);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    prompt += "Probe example " + std::to_string(i + 1) + ":\n" + probes[i] + "\n\n";
  }
  prompt += "For each criterion state whether it is robust. Reply with a JSON object mapping each criterion name "
            "to \"robust\" or \"reject\".";
  const auto r = ask(provider, {{"system", kVerifierSystem}, {"user", prompt}}, retry, nullptr);
  if (!r.ok) throw ProviderError("verifier failed: " + r.error, r.retryable);

  std::map<std::string, std::string> said;
  if (auto obj = embedded_json(r.text, '{', '}'); obj && obj->is_object()) {
    for (const auto& [k, v] : obj->items()) {
      said[util::to_lower(util::trim(k))] = v.is_string() ? util::to_lower(v.get<std::string>())
                                            : v.is_boolean() ? (v.get<bool>() ? "robust" : "reject")
                                                             : v.dump();
    }
  } else {
    for (const auto& line_raw : util::split_lines(r.text)) {
      const auto line = util::strip_markup(line_raw);
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      said[util::to_lower(util::trim(line.substr(0, colon)))] = util::to_lower(util::trim(line.substr(colon + 1)));
    }
  }
  for (auto& c : criteria) {
    auto it = said.find(util::to_lower(c.name));
    if (it == said.end()) continue;
    const auto& v = it->second;
    if (v.find("reject") != std::string::npos || v.find("not robust") != std::string::npos ||
        v.find("false") != std::string::npos || v.rfind("no", 0) == 0) {
      c.robust = false;
    }
  }
  if (std::none_of(criteria.begin(), criteria.end(), [](const Criterion& c) { return c.robust; })) {
    throw Error("verifier rejected every criterion");
  }
  return criteria;
}

std::optional<std::size_t> match_value(const Criterion& c, std::string_view reply) {
  auto clean = util::strip_markup(reply);
  while (!clean.empty() && (clean.front() == '"' || clean.front() == '\'')) clean.erase(0, 1);
  while (!clean.empty() && (clean.back() == '"' || clean.back() == '\'' || clean.back() == '.')) clean.pop_back();
  clean = util::trim(clean);
  const auto low = util::to_lower(clean);
  if (low.empty()) return std::nullopt;
  for (std::size_t i = 0; i < c.accepted_values.size(); ++i) {
    if (util::to_lower(c.accepted_values[i]) == low) return i;
  }
  if (c.ordinal()) {
    auto lead = [](std::string_view s) -> std::optional<long> {
      std::size_t d = 0;
      while (d < s.size() && std::isdigit(static_cast<unsigned char>(s[d]))) ++d;
      if (d == 0) return std::nullopt;
      return std::stol(std::string(s.substr(0, d)));
    };
    auto label = [](const std::string& v) {
      const auto p = v.find_first_not_of("0123456789");
      auto rest = p == std::string::npos ? std::string() : v.substr(p);
      rest = util::trim(rest);
      while (!rest.empty() && (rest.front() == '-' || rest.front() == ':' || rest.front() == '.')) rest.erase(0, 1);
      return util::to_lower(util::trim(rest));
    };
    if (auto n = lead(low)) {
      for (std::size_t i = 0; i < c.accepted_values.size(); ++i) {
        if (lead(c.accepted_values[i]) == n) {
          // "4 - clear" must not match "4 - unclear".
          const auto l = label(clean);
          if (l.empty() || l == label(c.accepted_values[i])) return i;
        }
      }
      return std::nullopt;
    }
    for (std::size_t i = 0; i < c.accepted_values.size(); ++i) {
      if (label(c.accepted_values[i]) == low) return i;
    }
  }
  return std::nullopt;
}

CriterionScore score_value(const Criterion& c, std::size_t index) {
  CriterionScore s;
  s.criterion = c.name;
  s.value = c.accepted_values.at(index);
  if (c.ordinal()) {
    s.normalized = c.accepted_values.size() > 1
                       ? static_cast<double>(index) / static_cast<double>(c.accepted_values.size() - 1)
                       : 1.0;
  } else if (auto it = c.score_map.find(s.value); it != c.score_map.end()) {
    s.normalized = it->second;
  } else {
    s.normalized = 0.5;
  }
  s.counted = c.scored();
  return s;
}

std::vector<CriterionScore> quantify(const std::string& context, const Rubric& rubric, ChatProvider& provider,
                                     const RetryPolicy& retry, util::RateLimiter* limiter,
                                     std::vector<std::string>* warnings) {
  std::vector<Criterion> robust;
  for (const auto& c : rubric.criteria) {
    if (c.robust) robust.push_back(c);
  }
  if (robust.empty()) throw PreconditionError("rubric has no robust criteria");

  auto read_reply = [](std::string_view text) {
    std::map<std::string, std::string> by_name;
    if (auto obj = embedded_json(text, '{', '}'); obj && obj->is_object()) {
      for (const auto& [k, v] : obj->items()) {
        by_name[util::to_lower(util::trim(k))] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      return by_name;
    }
    for (const auto& line_raw : util::split_lines(text)) {
      const auto line = util::strip_markup(line_raw);
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      by_name[util::to_lower(util::trim(line.substr(0, colon)))] = util::trim(line.substr(colon + 1));
    }
    return by_name;
  };

  std::vector<Message> m{
      {"system", kQuantifierSystem},
      {"user", context + "\nCriteria:\n\n" + render_criteria(robust) +
                   "Rate the example on every criterion. Reply with a JSON object mapping each criterion name to "
                   "exactly one of its accepted values."}};
  std::map<std::string, std::size_t> chosen;
  std::vector<const Criterion*> missing;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto r = ask(provider, m, retry, limiter);
    if (!r.ok) {
      if (warnings) warnings->push_back("quantifier failure: " + r.error);
      break;
    }
    const auto by_name = read_reply(r.text);
    missing.clear();
    for (const auto& c : robust) {
      if (chosen.count(c.name)) continue;
      auto it = by_name.find(util::to_lower(c.name));
      std::optional<std::size_t> idx;
      if (it != by_name.end()) idx = match_value(c, it->second);
      if (idx) chosen[c.name] = *idx;
      else missing.push_back(&c);
    }
    if (missing.empty()) break;
    if (attempt == 0) {
      std::string fix = "Some ratings were missing or not among the accepted values. Rate these criteria again, "
                        "choosing exactly one of the listed values:\n";
      for (const auto* c : missing) fix += c->name + ": " + util::join(c->accepted_values, " | ") + "\n";
      m.push_back({"assistant", r.text});
      m.push_back({"user", fix});
    }
  }
  for (const auto* c : missing) {
    if (warnings) warnings->push_back("criterion '" + c->name + "' skipped: no valid value after reprompt");
  }
  std::vector<CriterionScore> out;
  for (const auto& c : robust) {
    if (auto it = chosen.find(c.name); it != chosen.end()) out.push_back(score_value(c, it->second));
  }
  return out;
}

VerificationVerdict evaluate(const std::string& target_id, Aspect aspect, const std::vector<CriterionScore>& scores,
                             double threshold) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : scores) {
    if (!s.counted) continue;
    sum += s.normalized;
    ++n;
  }
  if (n == 0) throw PreconditionError("no robust criterion score for " + target_id, {target_id});
  const double mean = sum / static_cast<double>(n);
  VerificationVerdict v;
  v.target_id = target_id;
  v.aspect = aspect;
  v.workflow = Workflow::multiagent;
  v.decision = mean >= threshold ? Decision::retain : Decision::discard;
  v.scores = scores;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "mean %.4f over %zu criteria; threshold %.4f", mean, n, threshold);
  v.rationale = buf;
  return v;
}

// ---------------------------------------------------------------------------

Event build_rubric(const ProjectState& s, Aspect aspect, const RubricExamples& ex, ChatProvider& provider,
                   const RetryPolicy& retry, std::vector<std::string>* warnings) {
  Rubric r;
  r.aspect = aspect;
  r.task_description = ex.task_description.empty() ? default_task_description(aspect) : ex.task_description;
  r.criteria = generate_criteria(r.task_description, ex.success, ex.failure, provider, retry, warnings);
  r.criteria = verify_criteria(std::move(r.criteria), ex.probes, provider, retry);
  if (auto it = s.rubrics.find(std::string(to_string(aspect))); it != s.rubrics.end()) {
    r.version = it->second.version + 1;
  }
  return events::set_rubric(r);
}

VerifyReport verify_targets(const ProjectState& s, const std::vector<std::string>& targets, ChatProvider& provider,
                            const VerifyOptions& opts) {
  const Rubric* rubric = nullptr;
  if (opts.workflow == Workflow::multiagent) {
    auto it = s.rubrics.find(std::string(to_string(opts.aspect)));
    if (it == s.rubrics.end()) {
      throw PreconditionError("no rubric for aspect " + std::string(to_string(opts.aspect)) +
                              "; import or build one first");
    }
    rubric = &it->second;
  }
  std::vector<std::optional<VerificationVerdict>> verdicts(targets.size());
  std::vector<std::vector<std::string>> warnings(targets.size());
  util::bounded_parallel_for(targets.size(), std::max<std::size_t>(1, opts.parallelism), [&](std::size_t i) {
    const auto& t = targets[i];
    if (opts.workflow == Workflow::self) {
      verdicts[i] = self_verify(s, opts.aspect, t, provider, opts.retry, opts.limiter, &warnings[i]);
      return;
    }
    auto scores = quantify(target_context(s, opts.aspect, t), *rubric, provider, opts.retry, opts.limiter,
                           &warnings[i]);
    if (std::none_of(scores.begin(), scores.end(), [](const CriterionScore& c) { return c.counted; })) {
      warnings[i].push_back(t + ": no robust criterion scored; verdict withheld");
      return;
    }
    verdicts[i] = evaluate(t, opts.aspect, scores, opts.threshold);
  });
  VerifyReport rep;
  rep.targets = targets.size();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (auto& w : warnings[i]) rep.warnings.push_back(std::move(w));
    if (!verdicts[i]) {
      ++rep.withheld;
      continue;
    }
    (verdicts[i]->decision == Decision::retain ? rep.retained : rep.discarded)++;
    rep.events.push_back(events::record_verdict(*verdicts[i]));
  }
  return rep;
}

VerifyReport plan_verification(const ProjectState& s, ChatProvider& provider, const VerifyOptions& opts) {
  auto targets = pending_targets(s, opts.aspect, opts.workflow);
  if (opts.limit && targets.size() > opts.limit) targets.resize(opts.limit);
  return verify_targets(s, targets, provider, opts);
}

VerifyReport run_verification(ProjectStore& store, ChatProvider& provider, const VerifyOptions& opts,
                              const std::function<void(std::size_t)>& after_chunk) {
  VerifyReport total;
  const auto initial = store.read([&](const ProjectState& s) { return pending_targets(s, opts.aspect, opts.workflow); });
  std::size_t budget = opts.limit ? std::min(opts.limit, initial.size()) : initial.size();
  const std::size_t chunk = std::max<std::size_t>(1, opts.chunk);
  std::set<std::string> attempted;
  std::size_t done = 0;
  while (done < budget) {
    const auto state = store.state();
    std::vector<std::string> batch;
    for (const auto& t : pending_targets(state, opts.aspect, opts.workflow)) {
      if (attempted.count(t)) continue;  // withheld earlier in this run
      batch.push_back(t);
      if (batch.size() == chunk || done + batch.size() == budget) break;
    }
    if (batch.empty()) break;
    auto rep = verify_targets(state, batch, provider, opts);
    store.append_all(rep.events);
    attempted.insert(batch.begin(), batch.end());
    done += batch.size();
    total.targets += rep.targets;
    total.retained += rep.retained;
    total.discarded += rep.discarded;
    total.withheld += rep.withheld;
    for (auto& w : rep.warnings) total.warnings.push_back(std::move(w));
    for (auto& e : rep.events) total.events.push_back(std::move(e));
    if (after_chunk) after_chunk(done);
  }
  return total;
}

}  // namespace normgraph::verification
