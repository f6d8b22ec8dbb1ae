#include "normgraph/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "normgraph/util.hpp"

namespace normgraph::ingestion {

CorpusFormat parse_format(std::string_view s) {
  if (s == "mpdd_json" || s == "mpdd") return CorpusFormat::mpdd_json;
  if (s == "cped_csv" || s == "cped") return CorpusFormat::cped_csv;
  if (s == "ldc_dir" || s == "ldc") return CorpusFormat::ldc_dir;
  if (s == "generic_jsonl" || s == "jsonl") return CorpusFormat::generic_jsonl;
  throw ParseError("unknown corpus format '" + std::string(s) + "'");
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default:
        field += c;
        any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

// Drops relationships whose endpoints are not speakers of the conversation.
void keep_valid_relationships(Conversation& c, std::vector<std::string>& warnings) {
  const auto speakers = c.speakers();
  std::vector<Relationship> kept;
  for (auto& r : c.relationships) {
    const bool ok = r.speaker_a != r.speaker_b &&
                    std::find(speakers.begin(), speakers.end(), r.speaker_a) != speakers.end() &&
                    std::find(speakers.begin(), speakers.end(), r.speaker_b) != speakers.end();
    if (ok) {
      kept.push_back(std::move(r));
    } else {
      warnings.push_back(c.id + ": relationship " + r.speaker_a + " -> " + r.speaker_b +
                         " dropped (endpoint is not a speaker)");
    }
  }
  c.relationships = std::move(kept);
}

void load_mpdd(const std::filesystem::path& path, LoadResult& out) {
  Json doc;
  try {
    doc = Json::parse(util::read_file(path));
  } catch (const Json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(path.string() + ": expected an object of dialogues");
  for (const auto& [dialog_id, turns] : doc.items()) {
    const std::string loc = path.string() + ":" + dialog_id;
    try {
      Conversation c;
      c.id = dialog_id;
      c.source = "mpdd";
      std::set<std::tuple<std::string, std::string, std::string>> rels;
      for (const auto& t : turns) {
        Turn turn;
        turn.index = static_cast<int>(c.turns.size());
        turn.speaker = t.at("speaker").get<std::string>();
        turn.text = t.at("utterance").get<std::string>();
        if (t.contains("emotion") && !t["emotion"].is_null()) turn.labels["emotion"] = t["emotion"].get<std::string>();
        for (const auto& l : t.value("listener", Json::array())) {
          rels.emplace(turn.speaker, l.at("name").get<std::string>(), l.at("relation").get<std::string>());
        }
        if (util::trim(turn.text).empty()) throw ParseError("empty utterance at turn " + std::to_string(turn.index));
        c.turns.push_back(std::move(turn));
      }
      if (c.turns.empty()) throw ParseError("dialogue has no turns");
      for (const auto& [a, b, rel] : rels) c.relationships.push_back({a, b, rel, Provenance::gold});
      keep_valid_relationships(c, out.warnings);
      out.turns += c.turns.size();
      out.conversations.push_back(std::move(c));
    } catch (const std::exception& e) {
      out.errors.push_back({loc, e.what()});
    }
  }
}

void load_cped(const std::filesystem::path& path, LoadResult& out) {
  const auto rows = parse_csv(util::read_file(path));
  if (rows.empty()) throw ParseError(path.string() + ": empty CSV");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[util::trim(rows[0][i])] = i;
  for (const char* req : {"Dialogue_ID", "Speaker", "Utterance"}) {
    if (!col.count(req)) throw ParseError(path.string() + ": missing column " + req);
  }
  const std::vector<std::pair<std::string, std::string>> label_cols = {
      {"Emotion", "emotion"}, {"Sentiment", "sentiment"}, {"DA", "dialogue_act"}};
  std::map<std::string, std::size_t> index;  // dialogue id -> position in out
  std::set<std::string> broken;
  const std::size_t base = out.conversations.size();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string loc = path.string() + ":row " + std::to_string(r + 1);
    auto cell = [&](const std::string& name) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= row.size()) return std::nullopt;
      return util::trim(row[it->second]);
    };
    const auto did = cell("Dialogue_ID"), spk = cell("Speaker"), utt = cell("Utterance");
    if (!did || !spk || !utt || did->empty() || spk->empty() || utt->empty()) {
      out.errors.push_back({loc, "row is missing Dialogue_ID, Speaker or Utterance"});
      if (did && !did->empty()) broken.insert(*did);
      continue;
    }
    auto it = index.find(*did);
    if (it == index.end()) {
      Conversation c;
      c.id = *did;
      c.source = "cped";
      out.conversations.push_back(std::move(c));
      it = index.emplace(*did, out.conversations.size() - 1).first;
    }
    auto& c = out.conversations[it->second];
    Turn t;
    t.index = static_cast<int>(c.turns.size());
    t.speaker = *spk;
    t.text = *utt;
    for (const auto& [column, task] : label_cols) {
      if (auto v = cell(column); v && !v->empty()) t.labels[task] = *v;
    }
    if (auto scene = cell("Scene"); scene && !scene->empty() && !c.settings) {
      c.settings = SettingsRecord{*scene, Provenance::gold, {}, {}};
    }
    c.turns.push_back(std::move(t));
  }
  // A dialogue with a malformed row would have a hole in its turn order.
  std::vector<Conversation> kept(out.conversations.begin(), out.conversations.begin() + static_cast<long>(base));
  for (std::size_t i = base; i < out.conversations.size(); ++i) {
    auto& c = out.conversations[i];
    if (broken.count(c.id)) {
      out.errors.push_back({path.string() + ":" + c.id, "dialogue dropped after malformed rows"});
      continue;
    }
    out.turns += c.turns.size();
    kept.push_back(std::move(c));
  }
  out.conversations = std::move(kept);
}

void load_ldc(const std::filesystem::path& dir, LoadResult& out) {
  if (!std::filesystem::is_directory(dir)) throw ParseError(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".tsv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  static const std::vector<std::string> label_tasks = {"emotion", "dialogue_act", "norm_violation"};
  for (const auto& f : files) {
    Conversation c;
    c.id = f.stem().string();
    c.source = "ldc";
    bool bad = false;
    std::size_t line_no = 0;
    for (const auto& line : util::split_lines(util::read_file(f))) {
      ++line_no;
      if (util::trim(line).empty()) continue;
      const auto cols = util::split(line, '\t');
      if (cols.size() < 2 || util::trim(cols[0]).empty() || util::trim(cols[1]).empty()) {
        out.errors.push_back({f.string() + ":" + std::to_string(line_no), "expected speaker<TAB>text"});
        bad = true;
        continue;
      }
      Turn t;
      t.index = static_cast<int>(c.turns.size());
      t.speaker = util::trim(cols[0]);
      t.text = util::trim(cols[1]);
      for (std::size_t i = 0; i < label_tasks.size() && i + 2 < cols.size(); ++i) {
        const auto v = util::trim(cols[i + 2]);
        if (!v.empty()) t.labels[label_tasks[i]] = v;
      }
      c.turns.push_back(std::move(t));
    }
    if (bad || c.turns.empty()) {
      if (!bad) out.errors.push_back({f.string(), "no turns"});
      continue;
    }
    auto meta = f;
    meta.replace_extension(".meta.json");
    if (std::filesystem::exists(meta)) {
      try {
        const auto m = Json::parse(util::read_file(meta));
        if (m.contains("field")) {
          SettingsRecord s;
          s.field = m["field"].get<std::string>();
          const auto attrs = m.value("attributes", Json::object());
          for (const auto& [k, v] : attrs.items()) {
            s.attributes[k] = v.is_string() ? v.get<std::string>() : v.dump();
            s.attribute_provenance[k] = Provenance::gold;
          }
          c.settings = std::move(s);
        }
        if (m.contains("summary")) c.summary = m["summary"].get<std::string>();
      } catch (const Json::exception& e) {
        out.errors.push_back({meta.string(), e.what()});
      }
    }
    out.turns += c.turns.size();
    out.conversations.push_back(std::move(c));
  }
}

void load_jsonl(const std::filesystem::path& path, LoadResult& out) {
  std::size_t line_no = 0;
  for (const auto& line : util::split_lines(util::read_file(path))) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    const std::string loc = path.string() + ":" + std::to_string(line_no);
    try {
      auto c = Json::parse(line).get<Conversation>();
      ProjectState probe;
      probe.conversations[c.id] = c;
      if (auto reports = validate_project(probe); !reports.empty()) {
        throw ParseError(reports.front().rule + ": " + reports.front().detail);
      }
      out.turns += c.turns.size();
      out.conversations.push_back(std::move(c));
    } catch (const std::exception& e) {
      out.errors.push_back({loc, e.what()});
    }
  }
}

}  // namespace

LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  LoadResult out;
  switch (format) {
    case CorpusFormat::mpdd_json: load_mpdd(path, out); break;
    case CorpusFormat::cped_csv: load_cped(path, out); break;
    case CorpusFormat::ldc_dir: load_ldc(path, out); break;
    case CorpusFormat::generic_jsonl: load_jsonl(path, out); break;
  }
  if (out.conversations.empty()) {
    std::string why = out.errors.empty() ? "no records" : out.errors.front().location + ": " + out.errors.front().message;
    throw ParseError("no conversations parsed from " + path.string() + " (" + why + ")");
  }
  return out;
}

std::string to_jsonl(const std::vector<Conversation>& convs) {
  std::string out;
  for (const auto& c : convs) {
    out += Json(c).dump();
    out += '\n';
  }
  return out;
}

std::vector<Event> plan_ingest(const ProjectState& s, const std::vector<Conversation>& convs) {
  std::vector<Event> out;
  std::set<std::string> seen;
  for (const auto& c : convs) {
    if (s.conversations.count(c.id) || !seen.insert(c.id).second) continue;
    out.push_back(events::add_conversation(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

FillField parse_fill_field(std::string_view s) {
  if (s == "relationships") return FillField::relationships;
  if (s == "settings") return FillField::settings;
  if (s == "summary") return FillField::summary;
  throw ParseError("unknown fill field '" + std::string(s) + "'");
}

std::string fill_prompt(FillField f) {
  switch (f) {
    case FillField::summary:
      return "Summarize the conversation in 3-4 sentences.";
    case FillField::relationships:
      return "List the people mentioned in the conversation and the social relationships between them. "
             "Answer with one line per pair in the form '<speaker>: <speaker> - <relationship>'.";
    case FillField::settings:
      return "Describe the setting of the conversation. Answer with a line 'Field: <setting such as family, "
             "workplace, school>' followed by optional 'Age Group: ...', 'Speaker Count: ...' and "
             "'Familiarity: ...' lines.";
  }
  return {};
}

namespace {

std::optional<std::string> match_speaker(const std::string& name, const std::vector<std::string>& speakers) {
  const auto t = util::trim(name);
  for (const auto& s : speakers) {
    if (util::iequals(s, t)) return s;
  }
  return std::nullopt;
}

// Splits on the first of the dash separators, surrounded by spaces.
std::optional<std::pair<std::string, std::string>> split_dash(const std::string& s) {
  for (const char* sep : {" \xE2\x80\x94 ", " \xE2\x80\x93 ", " - "}) {
    if (auto p = s.find(sep); p != std::string::npos) {
      return std::make_pair(util::trim(s.substr(0, p)), util::trim(s.substr(p + std::string(sep).size())));
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<Relationship> parse_relationships(std::string_view text, const std::vector<std::string>& speakers) {
  std::vector<Relationship> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& raw : util::split_lines(text)) {
    const auto line = util::strip_markup(raw);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const auto left = util::trim(line.substr(0, colon)), right = util::trim(line.substr(colon + 1));
    std::optional<std::string> a, b;
    std::string rel;
    if (auto d = split_dash(right); d && match_speaker(d->first, speakers)) {
      a = match_speaker(left, speakers);
      b = match_speaker(d->first, speakers);
      rel = d->second;
    } else {
      std::optional<std::pair<std::string, std::string>> pair = split_dash(left);
      if (!pair) {
        for (const char* sep : {" and ", " & "}) {
          if (auto p = left.find(sep); p != std::string::npos) {
            pair = std::make_pair(left.substr(0, p), left.substr(p + std::string(sep).size()));
            break;
          }
        }
      }
      if (pair) {
        a = match_speaker(pair->first, speakers);
        b = match_speaker(pair->second, speakers);
        rel = right;
      }
    }
    if (!a || !b || *a == *b || rel.empty()) continue;
    if (!seen.emplace(*a, *b).second) continue;
    out.push_back({*a, *b, rel, Provenance::provider_filled});
  }
  return out;
}

std::optional<SettingsRecord> parse_settings(std::string_view text) {
  SettingsRecord s;
  s.field_provenance = Provenance::provider_filled;
  bool have_field = false;
  for (const auto& raw : util::split_lines(text)) {
    const auto line = util::strip_markup(raw);
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const auto key = util::trim(line.substr(0, colon)), value = util::trim(line.substr(colon + 1));
    if (key.empty() || value.empty()) continue;
    if (util::iequals(key, "field") || util::iequals(key, "setting") || util::iequals(key, "scene")) {
      if (!have_field) {
        s.field = value;
        have_field = true;
      }
      continue;
    }
    auto k = util::to_lower(key);
    std::replace(k.begin(), k.end(), ' ', '_');
    s.attributes[k] = value;
    s.attribute_provenance[k] = Provenance::provider_filled;
  }
  if (!have_field) return std::nullopt;
  return s;
}

FillResult fill_missing_fields(const Conversation& c, const std::set<FillField>& fields, ChatProvider& provider,
                               const RetryPolicy& retry, util::RateLimiter* limiter) {
  std::vector<std::string> present;
  if (fields.count(FillField::summary) && c.summary) present.push_back("summary");
  if (fields.count(FillField::relationships) && !c.relationships.empty()) present.push_back("relationships");
  if (fields.count(FillField::settings) && c.settings) present.push_back("settings");
  if (!present.empty()) {
    throw PreconditionError(c.id + ": requested fields already present: " + util::join(present, ", "), {c.id});
  }
  FillResult res;
  res.conversation_id = c.id;
  std::optional<std::string> summary;
  std::optional<std::vector<Relationship>> rels;
  std::optional<SettingsRecord> settings;
  const auto speakers = c.speakers();
  const std::string convo = "Conversation:\n" + c.render();

  for (const auto f : fields) {
    // One retry when the response does not parse.
    for (int attempt = 0; attempt < 2; ++attempt) {
      int calls = 0;
      const auto r = complete_with_retry(provider, {{"user", fill_prompt(f) + "\n\n" + convo}}, retry, limiter, &calls);
      res.provider_calls += calls;
      if (!r.ok) {
        res.errors.push_back(c.id + ": provider failure: " + r.error);
        break;
      }
      bool parsed = false;
      if (f == FillField::summary) {
        if (auto t = util::trim(r.text); !t.empty()) {
          summary = t;
          parsed = true;
        }
      } else if (f == FillField::relationships) {
        if (auto v = parse_relationships(r.text, speakers); !v.empty()) {
          rels = std::move(v);
          parsed = true;
        }
      } else if (auto s = parse_settings(r.text)) {
        settings = std::move(s);
        parsed = true;
      }
      if (parsed) break;
      if (attempt == 1) {
        const char* name = f == FillField::summary ? "summary" : f == FillField::relationships ? "relationships" : "settings";
        res.errors.push_back(c.id + ": unparseable " + std::string(name) + " response");
      }
    }
  }
  if (summary || rels || settings) res.event = events::fill_conversation(c.id, summary, rels, settings);
  return res;
}

std::vector<FillResult> fill_batch(const std::vector<Conversation>& convs, const std::set<FillField>& fields,
                                   ChatProvider& provider, std::size_t parallelism, const RetryPolicy& retry,
                                   util::RateLimiter* limiter) {
  std::vector<FillResult> out(convs.size());
  util::bounded_parallel_for(convs.size(), parallelism, [&](std::size_t i) {
    const auto& c = convs[i];
    std::set<FillField> wanted;
    for (auto f : fields) {
      const bool have = (f == FillField::summary && c.summary) ||
                        (f == FillField::relationships && !c.relationships.empty()) ||
                        (f == FillField::settings && c.settings);
      if (!have) wanted.insert(f);
    }
    out[i].conversation_id = c.id;
    if (wanted.empty()) return;
    try {
      out[i] = fill_missing_fields(c, wanted, provider, retry, limiter);
    } catch (const std::exception& e) {
      out[i].errors.push_back(c.id + ": " + e.what());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

std::string turn_sample_id(const Conversation& c, const Turn& t) { return c.id + "#" + std::to_string(t.index); }

std::set<std::string> downsample(const std::vector<Conversation>& convs, LabelTask task,
                                 const std::map<std::string, double>& fraction_by_label, std::uint64_t seed) {
  const std::string task_name(to_string(task));
  std::set<std::string> kept;
  std::map<std::string, std::vector<std::string>> by_label;
  for (const auto& c : convs) {
    for (const auto& t : c.turns) {
      const auto id = turn_sample_id(c, t);
      auto it = t.labels.find(task_name);
      if (it != t.labels.end() && fraction_by_label.count(it->second)) {
        by_label[it->second].push_back(id);
      } else {
        kept.insert(id);
      }
    }
  }
  std::mt19937_64 rng(seed);
  for (auto& [label, ids] : by_label) {
    const double frac = std::clamp(fraction_by_label.at(label), 0.0, 1.0);
    std::sort(ids.begin(), ids.end());
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's distribution implementation.
    for (std::size_t i = ids.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(ids[i - 1], ids[j]);
    }
    const auto n = static_cast<std::size_t>(std::llround(frac * static_cast<double>(ids.size())));
    kept.insert(ids.begin(), ids.begin() + static_cast<long>(n));
  }
  return kept;
}

}  // namespace normgraph::ingestion
