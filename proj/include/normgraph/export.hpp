#pragma once

// Conversation schema graph and per-corpus stage accounting.
//
// Graph nodes: conversation, turn, settings, summary, relationship (factual
// segment) and norm, violation, effect, concept (cultural segment). Every
// edge is written twice, once per direction. Concept nodes are shared by all
// conversations; discarded descriptions, mappings and violation annotations
// are left out.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"

namespace normgraph::exporter {

struct GraphNode {
  std::string id;
  std::string type;
  Json attrs = Json::object();
};

struct GraphEdge {
  std::string source;
  std::string target;
  std::string type;
  Json attrs = Json::object();
};

struct Graph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  std::map<std::string, std::size_t> node_counts() const;
  std::map<std::string, std::size_t> edge_counts() const;
};

/// Throws InvariantError("dangling edge", ...) naming the first edge whose
/// endpoint is not a node.
void check_edges(const Graph& g);

/// Builds and checks the graph.
Graph export_graph(const ProjectState& s);

/// One JSON document per line: nodes first, then edges. Field order is
/// fixed. An empty project gives an empty string.
std::string to_jsonl(const Graph& g);
Graph from_jsonl(const std::string& text);

/// Writes <dir>/exports/graph-v<version>.jsonl and returns the path.
std::filesystem::path write_export(const std::filesystem::path& project_dir, const ProjectState& s);

struct StageCounts {
  std::size_t conversations = 0;
  std::map<std::string, std::map<std::string, std::size_t>> descriptions;  // kind -> status -> n
  std::size_t concepts = 0;
  std::map<std::string, std::size_t> assignments;  // provenance -> n (active only)
  std::size_t groundings = 0;
  std::size_t verdicts = 0;

  std::size_t kind_total(const std::string& kind) const;
  bool operator==(const StageCounts&) const = default;
};

void to_json(Json& j, const StageCounts& c);

/// Rows keyed by conversation source; "total" sums them with concepts
/// counted once.
std::map<std::string, StageCounts> stage_accounting(const ProjectState& s);
std::string render_stage_table(const std::map<std::string, StageCounts>& rows);

}  // namespace normgraph::exporter
