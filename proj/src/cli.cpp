#include "normgraph/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "normgraph/config.hpp"
#include "normgraph/discovery.hpp"
#include "normgraph/elicitation.hpp"
#include "normgraph/export.hpp"
#include "normgraph/grounding.hpp"
#include "normgraph/ingestion.hpp"
#include "normgraph/metrics.hpp"
#include "normgraph/service.hpp"
#include "normgraph/store.hpp"
#include "normgraph/util.hpp"
#include "normgraph/verification.hpp"

namespace normgraph::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string project;
  std::string config;
  std::string provider;
  std::string record;
  bool dry_run = false;
};

struct Context {
  Globals g;
  Config cfg;
  std::ostream& out;
  std::ostream& err;

  std::unique_ptr<ProjectStore> open(bool create = false) const {
    if (!create && !fs::exists(fs::path(g.project) / "events.jsonl")) {
      throw NotFoundError("no project at " + g.project + " (run ingest first)");
    }
    return std::make_unique<ProjectStore>(fs::path(g.project));
  }

  std::shared_ptr<ChatProvider> provider() const {
    return make_provider(g.provider.empty() ? cfg.provider : g.provider, cfg.http,
                         g.record.empty() ? fs::path() : fs::path(g.record));
  }

  /// Appends or, under --dry-run, prints the would-be event list.
  void commit(ProjectStore& store, const std::vector<Event>& events) const {
    if (g.dry_run) {
      out << serialize_events(events);
      return;
    }
    const auto v = events.empty() ? store.version() : store.append_all(events);
    out << "appended " << events.size() << " events; project version " << v << "\n";
  }

  void warn(const std::vector<std::string>& ws) const {
    for (const auto& w : ws) err << "warning: " << w << "\n";
  }
};

std::vector<Json> read_json_records(const fs::path& file) {
  const auto text = util::read_file(file);
  const auto first = text.find_first_not_of(" \t\r\n");
  std::vector<Json> out;
  if (first == std::string::npos) return out;
  // A whole-file document (array or single object) first, then JSONL.
  if (auto doc = Json::parse(text, nullptr, false); !doc.is_discarded()) {
    if (doc.is_array()) {
      for (auto& j : doc) out.push_back(std::move(j));
    } else {
      out.push_back(std::move(doc));
    }
    return out;
  }
  for (const auto& line : util::split_lines(text)) {
    if (!util::trim(line).empty()) out.push_back(Json::parse(line));
  }
  return out;
}

std::map<std::string, double> parse_fractions(const std::vector<std::string>& specs) {
  std::map<std::string, double> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError("--downsample expects label=fraction, got '" + s + "'");
    const double f = std::stod(s.substr(eq + 1));
    if (f < 0 || f > 1) throw ParseError("--downsample fraction must lie in [0, 1]");
    out[s.substr(0, eq)] = f;
  }
  return out;
}

void write_output(const Context& ctx, const std::string& path, const std::string& data) {
  if (path.empty() || path == "-") {
    ctx.out << data;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  util::write_file_atomic(path, data);
  ctx.out << "wrote " << path << "\n";
}

// ---------------------------------------------------------------------------
// Commands

void cmd_ingest(const Context& ctx, const std::string& input, const std::string& format,
                const std::vector<std::string>& fill, const std::string& task, const std::vector<std::string>& down,
                std::uint64_t seed) {
  auto loaded = ingestion::load_corpus(input, ingestion::parse_format(format));
  for (const auto& e : loaded.errors) ctx.err << "skipped " << e.location << ": " << e.message << "\n";
  ctx.warn(loaded.warnings);
  auto store = ctx.open(/*create=*/!ctx.g.dry_run);
  const auto state = store->state();
  auto events = ingestion::plan_ingest(state, loaded.conversations);

  if (!fill.empty()) {
    std::set<ingestion::FillField> fields;
    for (const auto& f : fill) fields.insert(ingestion::parse_fill_field(f));
    auto p = ctx.provider();
    util::RateLimiter limiter(ctx.cfg.rate_per_second);
    const auto results =
        ingestion::fill_batch(loaded.conversations, fields, *p, ctx.cfg.parallelism, ctx.cfg.retry, &limiter);
    for (const auto& r : results) {
      for (const auto& e : r.errors) ctx.err << "fill " << r.conversation_id << ": " << e << "\n";
      if (r.event && !state.conversations.count(r.conversation_id)) events.push_back(*r.event);
    }
  }
  if (!down.empty()) {
    const auto kept =
        ingestion::downsample(loaded.conversations, parse_enum<LabelTask>(task), parse_fractions(down), seed);
    std::string lines;
    for (const auto& id : kept) lines += id + "\n";
    const auto path = fs::path(ctx.g.project) / "samples" / (task + ".txt");
    if (ctx.g.dry_run) {
      ctx.err << "downsample keeps " << kept.size() << " turns\n";
    } else {
      fs::create_directories(path.parent_path());
      util::write_file_atomic(path, lines);
      ctx.err << "downsample kept " << kept.size() << " turns -> " << path.string() << "\n";
    }
  }
  ctx.err << "loaded " << loaded.conversations.size() << " conversations (" << loaded.turns << " turns)\n";
  if (ctx.g.dry_run) {
    ctx.out << serialize_events(events);
    return;
  }
  ctx.commit(*store, events);
}

void cmd_fill(const Context& ctx, const std::vector<std::string>& fields_in, std::size_t limit) {
  auto store = ctx.open();
  const auto state = store->state();
  std::set<ingestion::FillField> fields;
  for (const auto& f : fields_in) fields.insert(ingestion::parse_fill_field(f));
  std::vector<Conversation> convs;
  for (const auto& [id, c] : state.conversations) {
    const bool missing = (fields.count(ingestion::FillField::summary) && !c.summary) ||
                         (fields.count(ingestion::FillField::relationships) && c.relationships.empty()) ||
                         (fields.count(ingestion::FillField::settings) && !c.settings);
    if (missing) convs.push_back(c);
    if (limit && convs.size() == limit) break;
  }
  auto p = ctx.provider();
  util::RateLimiter limiter(ctx.cfg.rate_per_second);
  std::vector<Event> events;
  for (const auto& r : ingestion::fill_batch(convs, fields, *p, ctx.cfg.parallelism, ctx.cfg.retry, &limiter)) {
    for (const auto& e : r.errors) ctx.err << "fill " << r.conversation_id << ": " << e << "\n";
    if (r.event) events.push_back(*r.event);
  }
  ctx.commit(*store, events);
}

void cmd_elicit(const Context& ctx, std::size_t limit, const std::string& run_id) {
  auto store = ctx.open();
  const auto state = store->state();
  std::set<std::string> done;
  for (const auto& [id, d] : state.descriptions) done.insert(d.conversation_id);
  std::vector<const Conversation*> todo;
  for (const auto& [id, c] : state.conversations) {
    if (done.count(id)) continue;
    todo.push_back(&c);
    if (limit && todo.size() == limit) break;
  }
  auto p = ctx.provider();
  util::RateLimiter limiter(ctx.cfg.rate_per_second);
  elicitation::ElicitOptions eo;
  eo.retry = ctx.cfg.retry;
  eo.limiter = &limiter;
  eo.run_id = run_id;
  const auto script = elicitation::PromptScript::standard();
  std::vector<elicitation::ElicitResult> results(todo.size());
  util::bounded_parallel_for(todo.size(), ctx.cfg.parallelism,
                             [&](std::size_t i) { results[i] = elicitation::elicit(*todo[i], *p, script, eo); });
  if (!ctx.g.dry_run) {
    for (const auto& r : results) elicitation::write_transcript(fs::path(ctx.g.project) / "transcripts", r.transcript);
  }
  for (const auto& r : results) {
    for (const auto& f : r.failures) ctx.err << "elicit " << r.conversation_id << ": " << f << "\n";
  }
  ctx.commit(*store, elicitation::plan_elicit(state, results));
}

void cmd_descriptions_import(const Context& ctx, const std::string& file) {
  auto store = ctx.open();
  const auto state = store->state();
  std::vector<Event> events;
  for (const auto& j : read_json_records(file)) {
    auto d = j.get<NormDescription>();
    if (state.descriptions.count(d.id)) continue;
    events.push_back(events::add_description(d));
  }
  ctx.commit(*store, events);
}

void cmd_descriptions_export(const Context& ctx, const std::string& out_path) {
  auto store = ctx.open();
  std::string lines;
  store->read([&](const ProjectState& s) {
    for (const auto& [id, d] : s.descriptions) lines += Json(d).dump() + "\n";
    return 0;
  });
  write_output(ctx, out_path, lines);
}

void cmd_embed(const Context& ctx, const std::string& spec, std::size_t batch) {
  auto store = ctx.open();
  const auto state = store->state();
  auto embedder = make_embedder(spec.empty() ? ctx.cfg.embedder : spec, ctx.cfg.embedding_http);
  std::vector<std::string> ids, texts;
  for (const auto& [id, d] : state.descriptions) {
    if (!discovery::in_pool(d) || state.embeddings.count(id)) continue;
    ids.push_back(id);
    texts.push_back(d.text());
  }
  std::vector<Event> events;
  batch = std::max<std::size_t>(1, batch);
  for (std::size_t at = 0; at < ids.size(); at += batch) {
    const auto end = std::min(ids.size(), at + batch);
    const std::vector<std::string> chunk(texts.begin() + at, texts.begin() + end);
    auto vecs = embedder->embed(chunk);
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      EmbeddingRecord r;
      r.target_id = ids[at + i];
      r.vector = std::move(vecs[i]);
      r.model_tag = embedder->model_tag();
      r.normalized = normalize(r.vector);
      events.push_back(events::set_embedding(r));
    }
  }
  ctx.commit(*store, events);
}

void cmd_cluster(const Context& ctx, std::optional<int> k, std::optional<std::uint64_t> seed,
                 std::optional<int> max_iters, const std::string& out_path) {
  auto store = ctx.open();
  auto plan = discovery::plan_cluster_round(store->state(), k ? k : ctx.cfg.k, seed.value_or(ctx.cfg.seed),
                                            max_iters.value_or(ctx.cfg.max_iters));
  ctx.warn(plan.warnings);
  const auto views = Json(plan.clusters).dump(1) + "\n";
  if (!out_path.empty()) write_output(ctx, out_path, views);
  if (!ctx.g.dry_run && !plan.events.empty()) {
    const auto path = fs::path(ctx.g.project) / "clusters" / ("round-" + std::to_string(plan.round) + ".json");
    fs::create_directories(path.parent_path());
    util::write_file_atomic(path, views);
  }
  ctx.commit(*store, plan.events);
}

void cmd_concept_import(const Context& ctx, const std::string& file, const std::string& annotator) {
  auto store = ctx.open();
  auto state = store->state();
  std::vector<Event> events;
  for (const auto& j : read_json_records(file)) {
    NormConcept c;
    c.id = j.value("id", "");
    c.structure = j.contains("structure") ? j["structure"].get<ConceptStructure>() : j.get<ConceptStructure>();
    c.seed_ids = j.value("seed_ids", std::vector<std::string>{});
    c.created_by = j.value("created_by", annotator);
    auto plan = discovery::plan_create_concept(state, std::move(c));
    ctx.warn(plan.warnings);
    for (const auto& e : plan.events) {
      apply_event(state, e);
      events.push_back(e);
    }
  }
  ctx.commit(*store, events);
}

void cmd_concept_export(const Context& ctx, const std::string& out_path) {
  auto store = ctx.open();
  Json arr = Json::array();
  store->read([&](const ProjectState& s) {
    for (const auto* c : s.concepts_by_creation()) arr.push_back(*c);
    return 0;
  });
  write_output(ctx, out_path, arr.dump(1) + "\n");
}

void cmd_concept_mark(const Context& ctx, const std::string& id, const std::vector<std::string>& good,
                      const std::vector<std::string>& bad) {
  auto store = ctx.open();
  auto plan = discovery::plan_marks(store->state(), id, good, bad);
  ctx.warn(plan.warnings);
  ctx.commit(*store, plan.events);
}

void cmd_augment(const Context& ctx, std::optional<double> tau) {
  auto store = ctx.open();
  auto plan = discovery::plan_augment(store->state(), tau.value_or(ctx.cfg.tau));
  ctx.warn(plan.warnings);
  ctx.commit(*store, plan.events);
}

void cmd_reassign(const Context& ctx, std::optional<double> tau, std::optional<double> lambda) {
  auto store = ctx.open();
  auto plan = discovery::plan_reassign(store->state(), tau.value_or(ctx.cfg.tau), lambda.value_or(ctx.cfg.lambda));
  ctx.warn(plan.warnings);
  ctx.commit(*store, plan.events);
}

void cmd_progress(const Context& ctx) {
  auto store = ctx.open();
  const auto c = discovery::coverage_stats(store->state());
  ctx.out << Json(c).dump() << "\n";
}

void cmd_ground(const Context& ctx, std::size_t limit) {
  auto store = ctx.open();
  auto p = ctx.provider();
  util::RateLimiter limiter(ctx.cfg.rate_per_second);
  const auto batch = grounding::ground_batch(store->state(), *p, ctx.cfg.parallelism, limit, ctx.cfg.retry, &limiter);
  for (const auto& r : batch.results) {
    for (const auto& e : r.errors) ctx.err << "ground " << r.description_id << "|" << r.concept_id << ": " << e << "\n";
  }
  ctx.commit(*store, batch.events);
}

void cmd_verify(const Context& ctx, const std::string& aspect, const std::string& mode, std::optional<double> threshold,
                std::size_t limit, std::size_t chunk) {
  verification::VerifyOptions vo;
  vo.aspect = parse_enum<Aspect>(aspect);
  if (mode == "self") {
    vo.workflow = Workflow::self;
  } else if (mode == "agents" || mode == "multiagent") {
    vo.workflow = Workflow::multiagent;
  } else {
    throw ParseError("--mode must be self or agents");
  }
  vo.threshold = threshold.value_or(ctx.cfg.threshold);
  vo.limit = limit;
  vo.chunk = chunk;
  vo.parallelism = ctx.cfg.parallelism;
  vo.retry = ctx.cfg.retry;
  util::RateLimiter limiter(ctx.cfg.rate_per_second);
  vo.limiter = &limiter;
  auto store = ctx.open();
  auto p = ctx.provider();
  verification::VerifyReport rep;
  if (ctx.g.dry_run) {
    rep = verification::plan_verification(store->state(), *p, vo);
    ctx.out << serialize_events(rep.events);
  } else {
    rep = verification::run_verification(*store, *p, vo, [&](std::size_t done) {
      ctx.err << "verified " << done << " targets\n";
    });
  }
  ctx.warn(rep.warnings);
  ctx.err << "targets " << rep.targets << ", retained " << rep.retained << ", discarded " << rep.discarded
          << ", withheld " << rep.withheld << "\n";
}

void cmd_rubric_import(const Context& ctx, const std::string& file) {
  auto store = ctx.open();
  const auto state = store->state();
  std::vector<Event> events;
  for (const auto& j : read_json_records(file)) {
    auto r = j.get<Rubric>();
    if (!j.contains("version")) {
      if (auto it = state.rubrics.find(std::string(to_string(r.aspect))); it != state.rubrics.end()) {
        r.version = it->second.version + 1;
      }
    }
    events.push_back(events::set_rubric(r));
  }
  ctx.commit(*store, events);
}

void cmd_rubric_build(const Context& ctx, const std::string& aspect, const std::string& examples_file) {
  auto store = ctx.open();
  const auto j = Json::parse(util::read_file(examples_file));
  verification::RubricExamples ex;
  ex.task_description = j.value("task_description", "");
  ex.success = j.value("success", std::vector<std::string>{});
  ex.failure = j.value("failure", std::vector<std::string>{});
  ex.probes = j.value("probes", std::vector<std::string>{});
  auto p = ctx.provider();
  std::vector<std::string> warnings;
  auto e = verification::build_rubric(store->state(), parse_enum<Aspect>(aspect), ex, *p, ctx.cfg.retry, &warnings);
  ctx.warn(warnings);
  ctx.commit(*store, {e});
}

void cmd_judgments_import(const Context& ctx, const std::string& file) {
  auto store = ctx.open();
  std::vector<Event> events;
  for (const auto& j : metrics::parse_judgments(util::read_file(file))) events.push_back(events::add_judgment(j));
  ctx.commit(*store, events);
}

void cmd_metrics(const Context& ctx, const std::string& which, bool json, const std::string& out_dir) {
  auto store = ctx.open();
  const auto s = store->state();
  if (which == "quality") {
    const auto rows = metrics::quality_report(s);
    ctx.out << (json ? metrics::quality_report_json(rows).dump(1) + "\n" : metrics::render_quality_table(rows));
  } else if (which == "agreement") {
    const auto rows = metrics::agreement_report(s);
    ctx.out << (json ? metrics::agreement_report_json(rows).dump(1) + "\n" : metrics::render_agreement_table(rows));
  } else if (which == "likert") {
    const auto l = metrics::likert_mean(s.judgments);
    if (json) {
      ctx.out << Json{{"mean", l.mean}, {"count", l.count}}.dump() << "\n";
    } else {
      ctx.out << "likert mean " << l.mean << " over " << l.count << " ratings\n";
    }
  } else if (which == "distribution") {
    const auto d = metrics::concept_field_distribution(s);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      util::write_file_atomic(fs::path(out_dir) / "distribution.csv", d.to_csv());
      util::write_file_atomic(fs::path(out_dir) / "distribution.vl.json", d.to_vega_lite().dump(1) + "\n");
    }
    ctx.out << (json ? Json(d).dump(1) + "\n" : metrics::render_distribution_table(d));
  } else if (which == "stages") {
    const auto rows = exporter::stage_accounting(s);
    ctx.out << (json ? Json(rows).dump(1) + "\n" : exporter::render_stage_table(rows));
  }
}

void cmd_export_graph(const Context& ctx, const std::string& out_path) {
  auto store = ctx.open();
  const auto s = store->state();
  if (out_path.empty()) {
    const auto path = exporter::write_export(ctx.g.project, s);
    ctx.out << "wrote " << path.string() << "\n";
    return;
  }
  write_output(ctx, out_path, exporter::to_jsonl(exporter::export_graph(s)));
}

int cmd_validate(const Context& ctx) {
  auto store = ctx.open();
  const auto reports = validate_project(store->state());
  for (const auto& r : reports) ctx.out << r.rule << " " << r.target_id << ": " << r.detail << "\n";
  if (reports.empty()) ctx.out << "ok: version " << store->version() << "\n";
  return reports.empty() ? 0 : 1;
}

std::atomic<service::HttpServer*> g_server{nullptr};

void cmd_serve(const Context& ctx, const std::string& host, std::optional<int> port) {
  auto store = ctx.open();
  service::ServiceOptions so;
  so.config = ctx.cfg;
  if (const char* t = std::getenv(ctx.cfg.token_env.c_str())) so.secret = t;
  if (so.secret.empty()) ctx.err << "warning: " << ctx.cfg.token_env << " unset; authentication disabled\n";
  try {
    so.provider = ctx.provider();
  } catch (const std::exception& e) {
    ctx.err << "warning: no chat provider (" << e.what() << "); POST /verify disabled\n";
  }
  service::Service svc(*store, so);
  service::HttpServer server(svc);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (auto* s = g_server.load()) s->stop();
  });
  const int p = port.value_or(ctx.cfg.port);
  ctx.err << "serving " << ctx.g.project << " on http://" << host << ":" << p << "\n";
  server.listen(host, p);
  g_server = nullptr;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Human-in-the-loop cultural norm pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-p,--project", g.project, "Project directory")->required();
  app.add_option("-c,--config", g.config, "Config file (default: <project>/config.json)");
  app.add_option("--provider", g.provider, "Chat provider: identity | replay:<file> | http");
  app.add_option("--record", g.record, "Append every provider exchange to this JSONL file");
  app.add_flag("--dry-run", g.dry_run, "Print the would-be events instead of appending them");

  std::function<int(const Context&)> action;
  auto set = [&](auto fn) {
    action = [fn](const Context& ctx) {
      if constexpr (std::is_same_v<decltype(fn(ctx)), int>) {
        return fn(ctx);
      } else {
        fn(ctx);
        return 0;
      }
    };
  };

  // ingest
  std::string in_path, in_format = "jsonl", in_task = "norm_violation";
  std::vector<std::string> in_fill, in_down;
  std::uint64_t in_seed = 7;
  auto* ingest = app.add_subcommand("ingest", "Load a corpus into the project");
  ingest->add_option("input", in_path, "Corpus file or directory")->required();
  ingest->add_option("--format", in_format, "mpdd | cped | ldc | jsonl");
  ingest->add_option("--fill", in_fill, "Fields to fill: summary, relationships, settings")->delimiter(',');
  ingest->add_option("--task", in_task, "Label task used by --downsample");
  ingest->add_option("--downsample", in_down, "label=fraction (repeatable)");
  ingest->add_option("--seed", in_seed, "Down-sampling seed");
  ingest->callback([&] { set([&](const Context& c) { cmd_ingest(c, in_path, in_format, in_fill, in_task, in_down, in_seed); }); });

  std::vector<std::string> fill_fields{"summary", "relationships", "settings"};
  std::size_t limit = 0;
  auto* fill = app.add_subcommand("fill", "Fill missing summaries, relationships and settings");
  fill->add_option("--fields", fill_fields, "Fields to fill")->delimiter(',');
  fill->add_option("--limit", limit, "At most this many conversations");
  fill->callback([&] { set([&](const Context& c) { cmd_fill(c, fill_fields, limit); }); });

  std::string run_id = "run";
  auto* elicit = app.add_subcommand("elicit", "Elicit norm, violation and effect descriptions");
  elicit->add_option("--limit", limit, "At most this many conversations");
  elicit->add_option("--run-id", run_id, "Transcript run id");
  elicit->callback([&] { set([&](const Context& c) { cmd_elicit(c, limit, run_id); }); });

  std::string file, out_path;
  auto* descs = app.add_subcommand("descriptions", "Import or export description records");
  descs->require_subcommand(1);
  auto* d_imp = descs->add_subcommand("import", "Add descriptions from a JSON/JSONL file");
  d_imp->add_option("file", file)->required();
  d_imp->callback([&] { set([&](const Context& c) { cmd_descriptions_import(c, file); }); });
  auto* d_exp = descs->add_subcommand("export", "Write descriptions as JSONL");
  d_exp->add_option("--out", out_path);
  d_exp->callback([&] { set([&](const Context& c) { cmd_descriptions_export(c, out_path); }); });

  std::string embedder;
  std::size_t batch = 64;
  auto* embed = app.add_subcommand("embed", "Embed pool descriptions that lack a vector");
  embed->add_option("--embedder", embedder, "hash | hash:<dim> | replay:<file> | http");
  embed->add_option("--batch", batch, "Texts per embedding request");
  embed->callback([&] { set([&](const Context& c) { cmd_embed(c, embedder, batch); }); });

  std::optional<int> k, max_iters;
  std::optional<std::uint64_t> seed;
  auto* cluster = app.add_subcommand("cluster", "Cluster unmapped descriptions into a new round");
  cluster->add_option("--k", k, "Cluster count");
  cluster->add_option("--seed", seed, "k-means seed");
  cluster->add_option("--max-iters", max_iters, "k-means iteration cap");
  cluster->add_option("--out", out_path, "Also write the cluster views here");
  cluster->callback([&] { set([&](const Context& c) { cmd_cluster(c, k, seed, max_iters, out_path); }); });

  std::string annotator = "cli", concept_id;
  std::vector<std::string> good, bad;
  auto* concept_cmd = app.add_subcommand("concept", "Create, export and mark norm concepts");
  concept_cmd->require_subcommand(1);
  auto* c_imp = concept_cmd->add_subcommand("import", "Create concepts from a JSON/JSONL file");
  c_imp->add_option("file", file)->required();
  c_imp->add_option("--annotator", annotator, "Recorded as created_by");
  c_imp->callback([&] { set([&](const Context& c) { cmd_concept_import(c, file, annotator); }); });
  auto* c_exp = concept_cmd->add_subcommand("export", "Write concepts as JSON");
  c_exp->add_option("--out", out_path);
  c_exp->callback([&] { set([&](const Context& c) { cmd_concept_export(c, out_path); }); });
  auto* c_mark = concept_cmd->add_subcommand("mark", "Mark good and bad examples of a concept");
  c_mark->add_option("id", concept_id)->required();
  c_mark->add_option("--good", good)->delimiter(',');
  c_mark->add_option("--bad", bad)->delimiter(',');
  c_mark->callback([&] { set([&](const Context& c) { cmd_concept_mark(c, concept_id, good, bad); }); });

  std::optional<double> tau, lambda, threshold;
  auto* augment = app.add_subcommand("augment", "Assign unmapped descriptions to the nearest concept");
  augment->add_option("--tau", tau, "Similarity threshold");
  augment->callback([&] { set([&](const Context& c) { cmd_augment(c, tau); }); });
  auto* reassign = app.add_subcommand("reassign", "Reassign using good and bad marks");
  reassign->add_option("--tau", tau, "Similarity threshold");
  reassign->add_option("--lambda", lambda, "Weight of the bad-mark penalty");
  reassign->callback([&] { set([&](const Context& c) { cmd_reassign(c, tau, lambda); }); });
  auto* progress = app.add_subcommand("progress", "Print coverage");
  progress->callback([&] { set([&](const Context& c) { cmd_progress(c); }); });

  auto* ground = app.add_subcommand("ground", "Ground mapped descriptions in their concepts");
  ground->add_option("--limit", limit, "At most this many triples");
  ground->callback([&] { set([&](const Context& c) { cmd_ground(c, limit); }); });

  std::string aspect = "relevance", mode = "self";
  std::size_t chunk = 16;
  auto* verify = app.add_subcommand("verify", "Self- or multi-agent verification");
  verify->add_option("--aspect", aspect, "relevance | mapping | violation");
  verify->add_option("--mode", mode, "self | agents");
  verify->add_option("--threshold", threshold, "Evaluator threshold");
  verify->add_option("--limit", limit, "At most this many targets");
  verify->add_option("--chunk", chunk, "Targets per commit");
  verify->callback([&] { set([&](const Context& c) { cmd_verify(c, aspect, mode, threshold, limit, chunk); }); });

  auto* rubric = app.add_subcommand("rubric", "Import or build verification rubrics");
  rubric->require_subcommand(1);
  auto* r_imp = rubric->add_subcommand("import", "Store rubrics from a JSON/JSONL file");
  r_imp->add_option("file", file)->required();
  r_imp->callback([&] { set([&](const Context& c) { cmd_rubric_import(c, file); }); });
  auto* r_build = rubric->add_subcommand("build", "Run the critic and verifier agents");
  r_build->add_option("--aspect", aspect);
  r_build->add_option("examples", file, "JSON with task_description, success, failure, probes")->required();
  r_build->callback([&] { set([&](const Context& c) { cmd_rubric_build(c, aspect, file); }); });

  auto* judgments = app.add_subcommand("judgments", "Human judgments");
  judgments->require_subcommand(1);
  auto* j_imp = judgments->add_subcommand("import", "Add judgments from JSONL or CSV");
  j_imp->add_option("file", file)->required();
  j_imp->callback([&] { set([&](const Context& c) { cmd_judgments_import(c, file); }); });

  bool json = false;
  std::string out_dir;
  auto* metrics_cmd = app.add_subcommand("metrics", "Quality, agreement and distribution reports");
  metrics_cmd->require_subcommand(1);
  for (const char* which : {"quality", "agreement", "likert", "distribution", "stages"}) {
    auto* m = metrics_cmd->add_subcommand(which);
    m->add_flag("--json", json, "Machine-readable output");
    if (std::string(which) == "distribution") m->add_option("--out-dir", out_dir, "Write CSV and Vega-Lite files here");
    const std::string w = which;
    m->callback([&, w] { set([&, w](const Context& c) { cmd_metrics(c, w, json, out_dir); }); });
  }

  auto* exp = app.add_subcommand("export-graph", "Write the schema graph as JSONL");
  exp->add_option("--out", out_path, "Output file (default: <project>/exports/graph-v<version>.jsonl)");
  exp->callback([&] { set([&](const Context& c) { cmd_export_graph(c, out_path); }); });

  auto* validate = app.add_subcommand("validate", "Check every project invariant");
  validate->callback([&] { set([&](const Context& c) { return cmd_validate(c); }); });

  std::string host = "127.0.0.1";
  std::optional<int> port;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->callback([&] { set([&](const Context& c) { cmd_serve(c, host, port); }); });

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; every real usage error is 2.
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    Context ctx{g, {}, out, err};
    const auto cfg_path = g.config.empty() ? fs::path(g.project) / "config.json" : fs::path(g.config);
    if (!g.config.empty() && !fs::exists(cfg_path)) throw NotFoundError("config file " + g.config + " not found");
    ctx.cfg = load_config(cfg_path);
    return action ? action(ctx) : 0;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what();
    if (!e.offending_ids().empty()) err << " [" << util::join(e.offending_ids(), ", ") << "]";
    err << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace normgraph::cli
