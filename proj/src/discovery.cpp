#include "normgraph/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "normgraph/util.hpp"

namespace normgraph::discovery {

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(const Vec& a, const Vec& b) {
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) return 0;
  return dot(a, b) / (na * nb);
}

namespace {

Vec unit(const Vec& v) {
  Vec out = v;
  const double n = std::sqrt(dot(v, v));
  if (n > 0) {
    for (double& x : out) x /= n;
  }
  return out;
}

// Uniform double in [0, 1) from the top 53 bits; keeps results identical
// across standard libraries, unlike std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

Vec normalized_mean(const std::vector<const Vec*>& vs) {
  if (vs.empty()) return {};
  Vec sum(vs.front()->size(), 0.0);
  for (const Vec* v : vs) {
    const Vec u = unit(*v);
    for (std::size_t i = 0; i < u.size(); ++i) sum[i] += u[i];
  }
  return unit(sum);
}

int default_k(std::size_t n) {
  return std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n) / 2.0))));
}

KMeansResult kmeans(const std::vector<Vec>& raw, int k, std::uint64_t seed, int max_iters) {
  const std::size_t n = raw.size();
  if (n == 0) throw PreconditionError("k-means needs at least one point");
  if (k < 1) throw PreconditionError("k must be at least 1");
  if (static_cast<std::size_t>(k) > n) {
    throw PreconditionError("k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " points");
  }
  const std::size_t dim = raw.front().size();
  if (dim == 0) throw PreconditionError("zero-length vectors");
  std::vector<Vec> pts;
  pts.reserve(n);
  for (const auto& v : raw) {
    if (v.size() != dim) throw PreconditionError("vectors differ in length");
    pts.push_back(unit(v));
  }

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<Vec> cents;
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  first = std::min(first, n - 1);
  cents.push_back(pts[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(pts[i], cents[0]);
  while (cents.size() < static_cast<std::size_t>(k)) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0) {
      double r = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0) continue;
        pick = i;
        r -= d2[i];
        if (r < 0) break;
      }
    } else {
      // Every point coincides with a center; take the next unused index.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    cents.push_back(pts[pick]);
    chosen[pick] = true;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(pts[i], cents.back()));
  }

  KMeansResult res;
  res.labels.assign(n, -1);
  auto inertia = [&] {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += sq_dist(pts[i], cents[static_cast<std::size_t>(res.labels[i])]);
    return s;
  };

  for (int it = 0; it <= max_iters; ++it) {
    std::vector<int> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_sim = dot(pts[i], cents[0]);
      for (int c = 1; c < k; ++c) {
        const double sim = dot(pts[i], cents[static_cast<std::size_t>(c)]);
        if (sim > best_sim) {
          best_sim = sim;
          best = c;
        }
      }
      next[i] = best;
    }
    // Empty-cluster repair: the largest cluster gives up its worst-fitting point.
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (int l : next) ++sizes[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] != 0) continue;
      const auto largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      std::size_t far = n;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (next[i] != largest) continue;
        const double d = sq_dist(pts[i], cents[static_cast<std::size_t>(largest)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      next[far] = c;
      --sizes[static_cast<std::size_t>(largest)];
      ++sizes[static_cast<std::size_t>(c)];
    }

    if (next == res.labels) {
      res.converged = true;
      break;
    }
    res.labels = std::move(next);
    if (it == 0) res.inertia_trace.push_back(inertia());
    if (it == max_iters) break;

    // Update: renormalized member means.
    std::vector<Vec> sums(static_cast<std::size_t>(k), Vec(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[static_cast<std::size_t>(res.labels[i])];
      for (std::size_t d = 0; d < dim; ++d) s[d] += pts[i][d];
    }
    for (int c = 0; c < k; ++c) {
      auto& s = sums[static_cast<std::size_t>(c)];
      if (dot(s, s) > 0) cents[static_cast<std::size_t>(c)] = unit(s);
    }
    res.inertia_trace.push_back(inertia());
    res.iterations = it + 1;
  }
  res.centroids = std::move(cents);
  return res;
}

std::vector<ClusterView> cluster_views(const std::vector<std::string>& ids, const std::vector<Vec>& points,
                                       const KMeansResult& km, int iteration, std::size_t exemplars) {
  std::vector<ClusterView> out(km.centroids.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].cluster_id = static_cast<int>(c);
    out[c].centroid = km.centroids[c];
    out[c].iteration = iteration;
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[static_cast<std::size_t>(km.labels[i])].member_ids.push_back(ids[i]);
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
  for (auto& v : out) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& id : v.member_ids) ranked.emplace_back(-cosine(points[index[id]], v.centroid), id);
    std::sort(ranked.begin(), ranked.end());
    for (std::size_t i = 0; i < std::min(exemplars, ranked.size()); ++i) v.exemplar_ids.push_back(ranked[i].second);
  }
  return out;
}

std::vector<Choice> knn_choices(const std::vector<Candidate>& candidates,
                                const std::vector<ConceptCenters>& centers, double tau) {
  if (!(tau >= -1.0 && tau <= 1.0)) throw PreconditionError("tau must lie in [-1, 1]");
  return reassign_choices(candidates, centers, tau, 0.0);
}

std::vector<Choice> reassign_choices(const std::vector<Candidate>& candidates,
                                     const std::vector<ConceptCenters>& centers, double tau,
                                     double lambda) {
  if (!(tau >= -1.0 && tau <= 1.0)) throw PreconditionError("tau must lie in [-1, 1]");
  if (!(lambda >= 0.0)) throw PreconditionError("lambda must be non-negative");
  std::vector<Choice> out;
  out.reserve(candidates.size());
  for (const auto& cand : candidates) {
    Choice ch{cand.id, std::nullopt, 0.0};
    bool have = false;
    double best = 0;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      double score = cosine(*cand.vector, centers[c].good);
      if (lambda > 0 && centers[c].bad) score -= lambda * cosine(*cand.vector, *centers[c].bad);
      if (!have || score > best) {
        have = true;
        best = score;
        best_c = c;
      }
    }
    if (have) {
      ch.score = best;
      if (best >= tau) ch.concept_id = centers[best_c].concept_id;
    }
    out.push_back(std::move(ch));
  }
  return out;
}

// ---------------------------------------------------------------------------

bool in_pool(const NormDescription& d) {
  return d.kind == DescriptionKind::norm && d.status != DescriptionStatus::discarded;
}

std::vector<std::string> unmapped_ids(const ProjectState& s) {
  std::vector<std::string> out;
  for (const auto& [id, d] : s.descriptions) {
    if (in_pool(d) && !s.active_assignment(id)) out.push_back(id);
  }
  return out;
}

std::map<std::string, Vec> normalized_embeddings(const ProjectState& s) {
  std::map<std::string, Vec> out;
  for (const auto& [id, e] : s.embeddings) out.emplace(id, unit(e.vector));
  return out;
}

std::vector<ConceptCenters> concept_centers(const ProjectState& s, const std::map<std::string, Vec>& emb) {
  std::vector<ConceptCenters> out;
  for (const NormConcept* c : s.concepts_by_creation()) {
    std::vector<const Vec*> good, bad;
    std::vector<std::string> missing;
    for (const auto* ids : {&c->seed_ids, &c->good_ids}) {
      for (const auto& id : *ids) {
        if (auto it = emb.find(id); it != emb.end()) good.push_back(&it->second);
        else missing.push_back(id);
      }
    }
    for (const auto& id : c->bad_ids) {
      if (auto it = emb.find(id); it != emb.end()) bad.push_back(&it->second);
      else missing.push_back(id);
    }
    if (!missing.empty()) {
      throw PreconditionError("concept " + c->id + " has examples without embeddings", missing);
    }
    ConceptCenters cc{c->id, c->created_seq, normalized_mean(good), std::nullopt};
    if (!bad.empty()) cc.bad = normalized_mean(bad);
    out.push_back(std::move(cc));
  }
  return out;
}

namespace {

std::vector<Candidate> candidates_for(const std::vector<std::string>& ids, const std::map<std::string, Vec>& emb) {
  std::vector<Candidate> out;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (auto it = emb.find(id); it != emb.end()) out.push_back({id, &it->second});
    else missing.push_back(id);
  }
  if (!missing.empty()) throw PreconditionError("descriptions without embeddings", missing);
  return out;
}

}  // namespace

ClusterPlan plan_cluster_round(const ProjectState& s, std::optional<int> k, std::uint64_t seed, int max_iters) {
  ClusterPlan plan;
  plan.round = s.round;
  const auto ids = unmapped_ids(s);
  if (ids.empty()) {
    plan.warnings.push_back("nothing unmapped; round not advanced");
    return plan;
  }
  const auto emb = normalized_embeddings(s);
  std::vector<Vec> pts;
  for (const auto& c : candidates_for(ids, emb)) pts.push_back(*c.vector);
  int kk = k.value_or(default_k(ids.size()));
  if (kk < 1) throw PreconditionError("k must be at least 1");
  if (static_cast<std::size_t>(kk) > ids.size()) {
    plan.warnings.push_back("k = " + std::to_string(kk) + " reduced to the " + std::to_string(ids.size()) +
                            " unmapped descriptions");
    kk = static_cast<int>(ids.size());
  }
  const auto km = kmeans(pts, kk, seed, max_iters);
  plan.round = s.round + 1;
  plan.clusters = cluster_views(ids, pts, km, plan.round);
  plan.events.push_back(events::record_clusters(plan.round, plan.clusters));
  return plan;
}

Plan plan_create_concept(const ProjectState& s, NormConcept c) {
  std::set<std::string> uniq(c.seed_ids.begin(), c.seed_ids.end());
  if (uniq.size() != c.seed_ids.size()) throw PreconditionError("duplicate seed ids");
  if (c.seed_ids.size() < 5) {
    throw PreconditionError("seed count below 5 (got " + std::to_string(c.seed_ids.size()) + ")", c.seed_ids);
  }
  if (c.seed_ids.size() > 10) {
    throw PreconditionError("seed count above 10 (got " + std::to_string(c.seed_ids.size()) + ")", c.seed_ids);
  }
  const auto& st = c.structure;
  std::vector<std::string> blank;
  if (util::trim(st.name).empty()) blank.push_back("name");
  if (util::trim(st.description).empty()) blank.push_back("description");
  if (st.settings.empty()) blank.push_back("settings");
  if (util::trim(st.violation_sketch).empty()) blank.push_back("violation_sketch");
  if (util::trim(st.actor_roles).empty()) blank.push_back("actor_roles");
  if (util::trim(st.recipient_roles).empty()) blank.push_back("recipient_roles");
  if (!blank.empty()) throw PreconditionError("incomplete concept structure: " + util::join(blank, ", "));
  for (const auto& [id, other] : s.concepts) {
    if (other.structure.name == st.name) throw PreconditionError("concept name already used by " + id, {id});
  }
  std::vector<std::string> unknown;
  for (const auto& id : c.seed_ids) {
    auto it = s.descriptions.find(id);
    if (it == s.descriptions.end() || it->second.status == DescriptionStatus::discarded) unknown.push_back(id);
  }
  if (!unknown.empty()) throw PreconditionError("unknown or discarded seed descriptions", unknown);
  for (const auto& id : c.seed_ids) {
    if (const auto* a = s.active_assignment(id)) {
      throw PreconditionError("seed " + id + " already assigned to concept " + a->concept_id, {id, a->concept_id});
    }
  }
  if (c.id.empty()) c.id = "c-" + util::content_hash(st.name);
  if (s.concepts.count(c.id)) throw PreconditionError("concept id already exists", {c.id});
  c.good_ids.clear();
  c.bad_ids.clear();
  Plan plan;
  plan.events.push_back(events::create_concept(c));
  return plan;
}

Plan plan_marks(const ProjectState& s, const std::string& concept_id, const std::vector<std::string>& good,
                const std::vector<std::string>& bad) {
  auto it = s.concepts.find(concept_id);
  if (it == s.concepts.end()) throw NotFoundError("no concept " + concept_id);
  const auto& c = it->second;
  std::vector<std::string> offending;
  const std::set<std::string> seeds(c.seed_ids.begin(), c.seed_ids.end());
  for (const auto* ids : {&good, &bad}) {
    for (const auto& id : *ids) {
      if (!s.descriptions.count(id) || seeds.count(id)) offending.push_back(id);
    }
  }
  if (!offending.empty()) throw PreconditionError("marks must name known, non-seed descriptions", offending);
  for (const auto& id : good) {
    if (std::find(bad.begin(), bad.end(), id) != bad.end()) {
      throw PreconditionError("description marked both good and bad", {id});
    }
  }
  std::set<std::string> g(c.good_ids.begin(), c.good_ids.end()), b(c.bad_ids.begin(), c.bad_ids.end());
  for (const auto& id : good) {
    b.erase(id);
    g.insert(id);
  }
  for (const auto& id : bad) {
    g.erase(id);
    b.insert(id);
  }
  Plan plan;
  auto check = [&](const char* what, std::size_t n) {
    if (n < 5 || n > 10) {
      plan.warnings.push_back(std::string("concept ") + concept_id + " has " + std::to_string(n) + " " + what +
                              " marks; 5-10 recommended");
    }
  };
  check("good", g.size());
  check("bad", b.size());
  plan.events.push_back(events::mark_examples(concept_id, good, bad));
  return plan;
}

Plan plan_augment(const ProjectState& s, double tau) {
  if (!(tau >= -1.0 && tau <= 1.0)) throw PreconditionError("tau must lie in [-1, 1]");
  Plan plan;
  if (s.concepts.empty()) {
    plan.warnings.push_back("no concepts yet; nothing to augment");
    return plan;
  }
  const auto emb = normalized_embeddings(s);
  const auto centers = concept_centers(s, emb);
  const auto cands = candidates_for(unmapped_ids(s), emb);
  for (const auto& ch : knn_choices(cands, centers, tau)) {
    if (!ch.concept_id) continue;
    plan.events.push_back(events::assign(
        ConceptAssignment{ch.id, *ch.concept_id, AssignmentProvenance::knn, ch.score, s.round, true}));
  }
  return plan;
}

Plan plan_reassign(const ProjectState& s, double tau, double lambda) {
  if (!(lambda >= 0.0)) throw PreconditionError("lambda must be non-negative");
  if (!(tau >= -1.0 && tau <= 1.0)) throw PreconditionError("tau must lie in [-1, 1]");
  const bool any_marks = std::any_of(s.concepts.begin(), s.concepts.end(), [](const auto& kv) {
    return !kv.second.good_ids.empty() || !kv.second.bad_ids.empty();
  });
  if (!any_marks) throw PreconditionError("no good or bad marks recorded; nothing to reassign with");
  const auto emb = normalized_embeddings(s);
  const auto centers = concept_centers(s, emb);
  std::vector<std::string> ids;
  for (const auto& [id, d] : s.descriptions) {
    if (!in_pool(d)) continue;
    const auto* a = s.active_assignment(id);
    if (a && a->provenance == AssignmentProvenance::human_seed) continue;
    ids.push_back(id);
  }
  Plan plan;
  for (const auto& ch : reassign_choices(candidates_for(ids, emb), centers, tau, lambda)) {
    const auto* cur = s.active_assignment(ch.id);
    if (ch.concept_id) {
      if (cur && cur->concept_id == *ch.concept_id) continue;
      // Adjusted scores can leave [-1, 1] when the bad term is negative.
      const double stored = std::clamp(ch.score, -1.0, 1.0);
      plan.events.push_back(events::assign(
          ConceptAssignment{ch.id, *ch.concept_id, AssignmentProvenance::reassigned, stored, s.round, true}));
    } else if (cur) {
      plan.events.push_back(events::unassign(ch.id, s.round));
    }
  }
  return plan;
}

CoverageStats coverage_stats(const ProjectState& s) {
  CoverageStats c;
  c.concepts = s.concepts.size();
  for (const auto& [id, d] : s.descriptions) {
    if (!in_pool(d)) continue;
    ++c.total;
    if (s.active_assignment(id)) ++c.mapped;
  }
  c.coverage_fraction = c.total ? static_cast<double>(c.mapped) / static_cast<double>(c.total) : 0.0;
  return c;
}

void to_json(Json& j, const CoverageStats& c) {
  j = Json{{"concepts", c.concepts},
           {"mapped", c.mapped},
           {"total", c.total},
           {"coverage_fraction", c.coverage_fraction}};
}

}  // namespace normgraph::discovery
