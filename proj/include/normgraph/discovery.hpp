#pragma once

// Interactive concept discovery: spherical k-means over description
// embeddings, concept seeding, nearest-centroid augmentation and
// good/bad-center reassignment, one round at a time.
//
// The numeric core works on plain vectors and is independent of the store.
// The plan_* functions turn a snapshot plus operator input into the events
// that record the step; they never mutate anything themselves.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"

namespace normgraph::discovery {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b);
/// Cosine similarity; 0 when either vector is zero.
double cosine(const Vec& a, const Vec& b);
/// Normalized mean of the given vectors (each normalized first).
Vec normalized_mean(const std::vector<const Vec*>& vs);

struct KMeansResult {
  std::vector<int> labels;
  std::vector<Vec> centroids;
  /// Sum of squared distances to the assigned centroid, recorded after the
  /// initial assignment and after every centroid update.
  std::vector<double> inertia_trace;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd iterations on L2-normalized copies of `points` with k-means++
/// seeding from `seed`. An emptied cluster takes the point farthest from
/// the centroid of the currently largest cluster.
KMeansResult kmeans(const std::vector<Vec>& points, int k, std::uint64_t seed, int max_iters = 100);

/// ceil(sqrt(n / 2)), at least 1.
int default_k(std::size_t n);

/// Wraps k-means output as display views. Members keep the input order;
/// exemplars are the `exemplars` members closest to the centroid.
std::vector<ClusterView> cluster_views(const std::vector<std::string>& ids, const std::vector<Vec>& points,
                                       const KMeansResult& km, int iteration, std::size_t exemplars = 5);

struct ConceptCenters {
  std::string concept_id;
  std::uint64_t created_seq = 0;
  Vec good;
  std::optional<Vec> bad;
};

struct Candidate {
  std::string id;
  const Vec* vector = nullptr;
};

struct Choice {
  std::string id;
  std::optional<std::string> concept_id;  // nullopt: below threshold
  double score = 0.0;
};

/// Nearest good centroid per candidate; assigned iff the best cosine is at
/// least tau. Ties go to the concept created first (centers must be given
/// in creation order).
std::vector<Choice> knn_choices(const std::vector<Candidate>& candidates,
                                const std::vector<ConceptCenters>& centers, double tau);

/// Like knn_choices but scores with cos(d, good) - lambda * cos(d, bad); the
/// bad term is zero for concepts without bad marks.
std::vector<Choice> reassign_choices(const std::vector<Candidate>& candidates,
                                     const std::vector<ConceptCenters>& centers, double tau,
                                     double lambda);

// ---------------------------------------------------------------------------
// Snapshot-level steps

/// Descriptions eligible for concept mapping: non-discarded norms.
bool in_pool(const NormDescription& d);
/// Pool descriptions without an active assignment, in id order.
std::vector<std::string> unmapped_ids(const ProjectState& s);

/// Normalized embedding vectors keyed by description id.
std::map<std::string, Vec> normalized_embeddings(const ProjectState& s);

/// Centers of every concept in creation order. Throws PreconditionError if
/// a concept has no embedded seed.
std::vector<ConceptCenters> concept_centers(const ProjectState& s,
                                            const std::map<std::string, Vec>& emb);

struct Plan {
  std::vector<Event> events;
  std::vector<std::string> warnings;
};

struct ClusterPlan : Plan {
  std::vector<ClusterView> clusters;
  int round = 0;  // round the views belong to; unchanged when nothing is unmapped
};

/// Clusters the unmapped descriptions into a new round. With nothing
/// unmapped the plan is empty and the round does not advance.
ClusterPlan plan_cluster_round(const ProjectState& s, std::optional<int> k, std::uint64_t seed,
                               int max_iters = 100);

/// Validates seeds and structure and emits create_concept. An empty id is
/// derived from the concept name.
Plan plan_create_concept(const ProjectState& s, NormConcept c);

/// Records good/bad marks; totals outside 5-10 produce warnings only.
Plan plan_marks(const ProjectState& s, const std::string& concept_id,
                const std::vector<std::string>& good, const std::vector<std::string>& bad);

Plan plan_augment(const ProjectState& s, double tau);
Plan plan_reassign(const ProjectState& s, double tau, double lambda);

struct CoverageStats {
  std::size_t concepts = 0;
  std::size_t mapped = 0;
  std::size_t total = 0;
  double coverage_fraction = 0.0;
};

CoverageStats coverage_stats(const ProjectState& s);

void to_json(Json& j, const CoverageStats& c);

}  // namespace normgraph::discovery
