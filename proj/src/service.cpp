#include "normgraph/service.hpp"

#include <httplib.h>

#include <algorithm>

#include "normgraph/discovery.hpp"
#include "normgraph/metrics.hpp"
#include "normgraph/util.hpp"
#include "normgraph/verification.hpp"

namespace normgraph::service {

Response error(int status, const std::string& code, const std::string& message,
               const std::vector<std::string>& offending) {
  Response r;
  r.status = status;
  r.body = Json{{"code", code}, {"message", message}, {"offending_ids", offending}};
  return r;
}

namespace {

Json parse_body(const Request& req) {
  if (util::trim(req.body).empty()) return Json::object();
  try {
    auto j = Json::parse(req.body);
    if (!j.is_object()) throw ParseError("request body must be a JSON object");
    return j;
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed JSON body: ") + e.what());
  }
}

std::optional<std::string> header(const Request& req, const std::string& name) {
  auto it = req.headers.find(name);
  if (it == req.headers.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> query(const Request& req, const std::string& name) {
  auto it = req.query.find(name);
  if (it == req.query.end()) return std::nullopt;
  return it->second;
}

long query_int(const Request& req, const std::string& name, long fallback) {
  auto v = query(req, name);
  if (!v) return fallback;
  try {
    return std::stol(*v);
  } catch (const std::exception&) {
    throw ParseError("query parameter '" + name + "' must be an integer");
  }
}

Json with_warnings(const std::vector<std::string>& warnings) {
  return Json{{"warnings", warnings}};
}

Json description_json(const ProjectState& s, const std::string& id) {
  const auto& d = s.descriptions.at(id);
  return Json{{"id", id}, {"conversation_id", d.conversation_id}, {"kind", to_string(d.kind)},
              {"text", d.text()}, {"status", to_string(d.status)}};
}

}  // namespace

Service::Service(ProjectStore& store, ServiceOptions opts) : store_(store), opts_(std::move(opts)) {
  opts_.config.validate();
}

Service::~Service() = default;

Response Service::handle(const Request& req) {
  Response res;
  std::string annotator = "anonymous";
  if (!opts_.secret.empty()) {
    const auto auth = header(req, "authorization").value_or("");
    const std::string prefix = "Bearer ";
    const auto token = auth.rfind(prefix, 0) == 0 ? auth.substr(prefix.size()) : std::string();
    const auto colon = token.rfind(':');
    if (colon == std::string::npos || colon == 0 || token.substr(colon + 1) != opts_.secret) {
      res = error(401, "unauthorized", "missing or invalid bearer token");
      res.headers["WWW-Authenticate"] = "Bearer";
      return res;
    }
    annotator = token.substr(0, colon);
  }

  const bool mutating = req.method == "POST";
  const auto idem = mutating ? header(req, "idempotency-key") : std::nullopt;
  const auto fingerprint = util::content_hash(req.method + " " + req.path + "\n" + req.body);
  if (idem) {
    std::lock_guard lock(idem_mu_);
    if (auto it = idempotent_.find(*idem); it != idempotent_.end()) {
      if (it->second.first != fingerprint) {
        return error(422, "idempotency_key_reused", "idempotency key was used for a different request");
      }
      auto cached = it->second.second;
      cached.headers["Idempotent-Replay"] = "true";
      return cached;
    }
  }

  try {
    res = dispatch(req, annotator);
  } catch (const PreconditionError& e) {
    res = error(422, "precondition_failed", e.what(), e.offending_ids());
  } catch (const InvariantError& e) {
    res = error(422, "invariant_violated", e.what());
    res.body["rule"] = e.rule();
  } catch (const NotFoundError& e) {
    res = error(404, "not_found", e.what());
  } catch (const ParseError& e) {
    res = error(400, "bad_request", e.what());
  } catch (const MetricError& e) {
    res = error(422, "metric_undefined", e.what());
  } catch (const ProviderError& e) {
    res = error(502, "provider_error", e.what());
  } catch (const Json::exception& e) {
    res = error(400, "bad_request", e.what());
  } catch (const std::exception& e) {
    res = error(500, "internal", e.what());
  }
  const auto v = std::to_string(store_.version());
  res.headers["ETag"] = "\"" + v + "\"";
  res.headers["X-Project-Version"] = v;

  if (idem && res.status < 500) {
    std::lock_guard lock(idem_mu_);
    idempotent_.emplace(*idem, std::make_pair(fingerprint, res));
  }
  return res;
}

Response Service::dispatch(const Request& req, const std::string& annotator) {
  auto parts = util::split(req.path, '/');
  parts.erase(std::remove(parts.begin(), parts.end(), std::string()), parts.end());
  const auto& m = req.method;
  const auto n = parts.size();
  auto is = [&](std::initializer_list<const char*> want) {
    if (want.size() != n) return false;
    std::size_t i = 0;
    for (const char* w : want) {
      if (std::string(w) != "*" && parts[i] != w) return false;
      ++i;
    }
    return true;
  };

  if (m == "GET") {
    if (is({"version"})) return Response{200, Json{{"version", store_.version()}}, {}};
    if (is({"clusters"})) return get_clusters(req);
    if (is({"clusters", "*", "samples"})) return get_samples(req, parts[1]);
    if (is({"concepts"})) return get_concepts(req);
    if (is({"concepts", "*"})) return get_concept(req, parts[1]);
    if (is({"progress"})) return get_progress(req);
    if (is({"reports", "*"})) return get_report(req, parts[1]);
  } else if (m == "POST") {
    if (is({"concepts"})) return post_concepts(req, annotator);
    if (is({"concepts", "*", "marks"})) return post_marks(req, parts[1]);
    if (is({"rounds", "cluster"})) return post_cluster_round(req);
    if (is({"rounds", "augment"})) return post_augment(req);
    if (is({"rounds", "reassign"})) return post_reassign(req);
    if (is({"judgments"})) return post_judgments(req, annotator);
    if (is({"verify"})) return post_verify(req);
  }
  return error(404, "not_found", "no route for " + m + " " + req.path);
}

Response Service::commit(const Request& req, const std::vector<Event>& events, Json extra) {
  // Caller holds write_mu_.
  if (auto token = header(req, "if-match")) {
    auto t = *token;
    t.erase(std::remove(t.begin(), t.end(), '"'), t.end());
    if (t != std::to_string(store_.version())) {
      return error(409, "stale_version",
                   "project is at version " + std::to_string(store_.version()) + ", request was based on " + t);
    }
  }
  const auto version = events.empty() ? store_.version() : store_.append_all(events);
  Response r;
  r.body = std::move(extra);
  r.body["version"] = version;
  r.body["events"] = events.size();
  return r;
}

// ---------------------------------------------------------------------------
// Reads

Response Service::get_clusters(const Request& req) {
  return store_.read([&](const ProjectState& s) {
    const int round = static_cast<int>(query_int(req, "round", s.round));
    Json clusters = Json::array();
    if (auto it = s.clusters.find(round); it != s.clusters.end()) {
      for (const auto& c : it->second) {
        Json ex = Json::array();
        for (const auto& id : c.exemplar_ids) ex.push_back(description_json(s, id));
        clusters.push_back({{"cluster_id", c.cluster_id},
                            {"size", c.member_ids.size()},
                            {"member_ids", c.member_ids},
                            {"exemplars", ex}});
      }
    } else if (round != 0 || !s.clusters.empty()) {
      throw NotFoundError("no clusters for round " + std::to_string(round));
    }
    return Response{200, Json{{"round", round}, {"clusters", clusters}}, {}};
  });
}

Response Service::get_samples(const Request& req, const std::string& id) {
  int cluster_id = 0;
  try {
    cluster_id = std::stoi(id);
  } catch (const std::exception&) {
    throw NotFoundError("cluster id must be an integer");
  }
  return store_.read([&](const ProjectState& s) {
    const int round = static_cast<int>(query_int(req, "round", s.round));
    const auto n = static_cast<std::size_t>(std::max<long>(1, query_int(req, "n", 10)));
    auto it = s.clusters.find(round);
    if (it == s.clusters.end()) throw NotFoundError("no clusters for round " + std::to_string(round));
    const ClusterView* view = nullptr;
    for (const auto& c : it->second) {
      if (c.cluster_id == cluster_id) view = &c;
    }
    if (!view) throw NotFoundError("no cluster " + id + " in round " + std::to_string(round));
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& mid : view->member_ids) {
      auto e = s.embeddings.find(mid);
      if (e == s.embeddings.end()) continue;
      ranked.emplace_back(discovery::cosine(e->second.vector, view->centroid), mid);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    if (ranked.size() > n) ranked.resize(n);
    Json samples = Json::array();
    for (const auto& [score, mid] : ranked) {
      auto j = description_json(s, mid);
      j["similarity"] = score;
      samples.push_back(std::move(j));
    }
    return Response{200, Json{{"round", round}, {"cluster_id", cluster_id}, {"samples", samples}}, {}};
  });
}

Response Service::get_concepts(const Request&) {
  return store_.read([&](const ProjectState& s) {
    Json out = Json::array();
    for (const auto* c : s.concepts_by_creation()) out.push_back(*c);
    return Response{200, Json{{"concepts", out}}, {}};
  });
}

Response Service::get_concept(const Request&, const std::string& id) {
  return store_.read([&](const ProjectState& s) {
    auto it = s.concepts.find(id);
    if (it == s.concepts.end()) throw NotFoundError("no concept " + id);
    Json members = Json::array();
    for (const auto& a : s.assignments) {
      if (!a.active || a.concept_id != id) continue;
      auto j = description_json(s, a.description_id);
      j["provenance"] = to_string(a.provenance);
      j["score"] = a.score;
      j["iteration"] = a.iteration;
      members.push_back(std::move(j));
    }
    return Response{200, Json{{"concept", it->second}, {"members", members}}, {}};
  });
}

Response Service::get_progress(const Request&) {
  return store_.read([&](const ProjectState& s) {
    Json per = Json::array();
    for (const auto* c : s.concepts_by_creation()) {
      std::map<std::string, std::size_t> by;
      for (const auto& a : s.assignments) {
        if (a.active && a.concept_id == c->id && discovery::in_pool(s.descriptions.at(a.description_id))) {
          by[std::string(to_string(a.provenance))]++;
        }
      }
      per.push_back({{"concept_id", c->id},
                     {"name", c->structure.name},
                     {"assignments", by},
                     {"good", c->good_ids.size()},
                     {"bad", c->bad_ids.size()}});
    }
    Json cov = discovery::coverage_stats(s);
    return Response{200, Json{{"coverage", cov}, {"round", s.round}, {"concepts", per}}, {}};
  });
}

Response Service::get_report(const Request&, const std::string& kind) {
  const auto s = store_.state();
  if (kind == "quality") {
    const auto rows = metrics::quality_report(s);
    return Response{200, Json{{"rows", metrics::quality_report_json(rows)}, {"table", metrics::render_quality_table(rows)}},
                    {}};
  }
  if (kind == "agreement") {
    const auto rows = metrics::agreement_report(s);
    Json body{{"rows", metrics::agreement_report_json(rows)}, {"table", metrics::render_agreement_table(rows)}};
    try {
      const auto l = metrics::likert_mean(s.judgments);
      body["likert"] = {{"mean", l.mean}, {"count", l.count}};
    } catch (const MetricError& e) {
      body["likert"] = {{"mean", nullptr}, {"undefined", e.what()}};
    }
    return Response{200, body, {}};
  }
  if (kind == "distribution") {
    const auto d = metrics::concept_field_distribution(s);
    return Response{200,
                    Json{{"table", d},
                         {"csv", d.to_csv()},
                         {"vega_lite", d.to_vega_lite()},
                         {"text", metrics::render_distribution_table(d)}},
                    {}};
  }
  throw NotFoundError("unknown report '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Mutations

Response Service::post_concepts(const Request& req, const std::string& annotator) {
  const auto body = parse_body(req);
  NormConcept c;
  c.id = body.value("id", "");
  c.structure = body.contains("structure") ? body["structure"].get<ConceptStructure>() : body.get<ConceptStructure>();
  c.seed_ids = body.value("seed_ids", std::vector<std::string>{});
  c.created_by = annotator;
  std::lock_guard lock(write_mu_);
  auto plan = discovery::plan_create_concept(store_.state(), std::move(c));
  auto extra = with_warnings(plan.warnings);
  extra["concept_id"] = plan.events.at(0).payload.at("concept").at("id");
  auto r = commit(req, plan.events, extra);
  if (r.status == 200) r.status = 201;
  return r;
}

Response Service::post_marks(const Request& req, const std::string& id) {
  const auto body = parse_body(req);
  const auto good = body.value("good", std::vector<std::string>{});
  const auto bad = body.value("bad", std::vector<std::string>{});
  std::lock_guard lock(write_mu_);
  const auto state = store_.state();
  if (!state.concepts.count(id)) throw NotFoundError("no concept " + id);
  auto plan = discovery::plan_marks(state, id, good, bad);
  return commit(req, plan.events, with_warnings(plan.warnings));
}

Response Service::post_cluster_round(const Request& req) {
  const auto body = parse_body(req);
  std::unique_lock round(round_mu_, std::try_to_lock);
  if (!round.owns_lock()) return error(409, "round_in_progress", "another round operation is running");
  if (opts_.on_round_locked) opts_.on_round_locked("cluster");
  std::optional<int> k = opts_.config.k;
  if (body.contains("k") && !body["k"].is_null()) k = body["k"].get<int>();
  const auto seed = body.value("seed", opts_.config.seed);
  const auto max_iters = body.value("max_iters", opts_.config.max_iters);
  std::lock_guard lock(write_mu_);
  auto plan = discovery::plan_cluster_round(store_.state(), k, seed, max_iters);
  auto extra = with_warnings(plan.warnings);
  extra["round"] = plan.round;
  extra["clusters"] = plan.clusters.size();
  return commit(req, plan.events, extra);
}

Response Service::post_augment(const Request& req) {
  const auto body = parse_body(req);
  std::unique_lock round(round_mu_, std::try_to_lock);
  if (!round.owns_lock()) return error(409, "round_in_progress", "another round operation is running");
  if (opts_.on_round_locked) opts_.on_round_locked("augment");
  const double tau = body.value("tau", opts_.config.tau);
  std::lock_guard lock(write_mu_);
  auto plan = discovery::plan_augment(store_.state(), tau);
  auto extra = with_warnings(plan.warnings);
  extra["assigned"] = plan.events.size();
  return commit(req, plan.events, extra);
}

Response Service::post_reassign(const Request& req) {
  const auto body = parse_body(req);
  std::unique_lock round(round_mu_, std::try_to_lock);
  if (!round.owns_lock()) return error(409, "round_in_progress", "another round operation is running");
  if (opts_.on_round_locked) opts_.on_round_locked("reassign");
  const double tau = body.value("tau", opts_.config.tau);
  const double lambda = body.value("lambda", opts_.config.lambda);
  std::lock_guard lock(write_mu_);
  auto plan = discovery::plan_reassign(store_.state(), tau, lambda);
  return commit(req, plan.events, with_warnings(plan.warnings));
}

Response Service::post_judgments(const Request& req, const std::string& annotator) {
  const auto body = parse_body(req);
  Json items = body.contains("judgments") ? body["judgments"] : Json::array({body});
  std::vector<Event> events;
  for (auto item : items) {
    if (!item.contains("annotator_id")) item["annotator_id"] = annotator;
    events.push_back(events::add_judgment(item.get<HumanJudgment>()));
  }
  std::lock_guard lock(write_mu_);
  return commit(req, events);
}

Response Service::post_verify(const Request& req) {
  const auto body = parse_body(req);
  if (!opts_.provider) return error(503, "no_provider", "the service was started without a chat provider");
  verification::VerifyOptions vo;
  vo.aspect = parse_enum<Aspect>(body.value("aspect", "relevance"));
  const auto mode = body.value("mode", "self");
  if (mode == "self") {
    vo.workflow = Workflow::self;
  } else if (mode == "agents" || mode == "multiagent") {
    vo.workflow = Workflow::multiagent;
  } else {
    throw ParseError("mode must be 'self' or 'agents'");
  }
  vo.threshold = body.value("threshold", opts_.config.threshold);
  if (vo.threshold < 0 || vo.threshold > 1) throw PreconditionError("threshold must lie in [0, 1]");
  vo.limit = body.value("limit", std::size_t{0});
  vo.parallelism = opts_.config.parallelism;
  vo.retry = opts_.config.retry;
  std::unique_lock busy(verify_mu_, std::try_to_lock);
  if (!busy.owns_lock()) return error(409, "verification_in_progress", "another verification batch is running");
  {
    std::lock_guard lock(write_mu_);
    auto check = commit(req, {});
    if (check.status != 200) return check;
  }
  const auto rep = verification::run_verification(store_, *opts_.provider, vo);
  return Response{200,
                  Json{{"version", store_.version()},
                       {"targets", rep.targets},
                       {"retained", rep.retained},
                       {"discarded", rep.discarded},
                       {"withheld", rep.withheld},
                       {"warnings", rep.warnings}},
                  {}};
}

// ---------------------------------------------------------------------------
// HTTP adapter

HttpServer::HttpServer(Service& svc) : svc_(svc), server_(std::make_unique<httplib::Server>()) {
  auto h = [this](const httplib::Request& hr, httplib::Response& hres) {
    Request req;
    req.method = hr.method;
    req.path = hr.path;
    for (const auto& [k, v] : hr.params) req.query[k] = v;
    for (const auto& [k, v] : hr.headers) req.headers[util::to_lower(k)] = v;
    req.body = hr.body;
    const auto res = svc_.handle(req);
    hres.status = res.status;
    for (const auto& [k, v] : res.headers) hres.set_header(k, v);
    hres.set_content(res.body.dump(), "application/json");
  };
  server_->Get(".*", h);
  server_->Post(".*", h);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace normgraph::service
